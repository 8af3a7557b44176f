"""Tests for store.py: file formats, digests and write retries."""

import hashlib
import json

import pytest

from src import store as store_mod
from src.errors import ConfigurationError
from src.store import Store, read_csv


class TestStore:
    def test_csv_round_trip(self, tmp_path):
        s = Store(tmp_path)
        s.write_csv("out/a.csv", ["z", "n"], [(0.1, 2.0), (0.2, 3.5)])
        header, rows = read_csv(tmp_path / "out" / "a.csv")
        assert header == ["z", "n"]
        assert rows == [(0.1, 2.0), (0.2, 3.5)]

    def test_floats_written_exactly(self, tmp_path):
        s = Store(tmp_path)
        value = 1 / 3
        s.write_csv("a.csv", ["v"], [(value,)])
        _, rows = read_csv(tmp_path / "a.csv")
        assert rows[0][0] == value

    def test_columns_format(self, tmp_path):
        s = Store(tmp_path)
        s.write_columns("p.dat", ["t", "phi"], [(0.0, 1.5), (1e-3, -2.0)])
        lines = (tmp_path / "p.dat").read_text().splitlines()
        assert lines[0] == "# t phi"
        assert lines[1].split() == ["0.0", "1.5"]
        assert len(lines) == 3

    def test_json_sorted_and_digested(self, tmp_path):
        s = Store(tmp_path)
        path = s.write_json("m.json", {"b": 1, "a": [1, 2]})
        text = path.read_bytes()
        assert json.loads(text) == {"a": [1, 2], "b": 1}
        assert text.index(b'"a"') < text.index(b'"b"')
        assert s.digests == {"m.json": hashlib.sha256(text).hexdigest()}

    def test_same_content_same_digest(self, tmp_path):
        a, b = Store(tmp_path / "a"), Store(tmp_path / "b")
        for s in (a, b):
            s.write_csv("x.csv", ["v"], [(0.5,), (2,)])
        assert a.digests == b.digests

    def test_no_temp_files_left(self, tmp_path):
        Store(tmp_path).write_text("x.txt", "hello")
        assert [p.name for p in tmp_path.iterdir()] == ["x.txt"]


class TestRetry:
    def test_transient_error_retried(self, monkeypatch, tmp_path):
        monkeypatch.setattr(store_mod.time, "sleep", lambda _: None)
        calls = {"n": 0}

        def flaky():
            calls["n"] += 1
            if calls["n"] < 2:
                raise OSError("disk busy")

        Store._retry_io(flaky, "flaky")
        assert calls["n"] == 2

    def test_persistent_error_raised(self, monkeypatch):
        monkeypatch.setattr(store_mod.time, "sleep", lambda _: None)

        def broken():
            raise OSError("read-only")

        with pytest.raises(OSError):
            Store._retry_io(broken, "broken")


class TestReadCsv:
    def test_comments_and_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("# synthetic\nz,n\n\n1,2\n3,4\n", encoding="utf-8")
        header, rows = read_csv(path)
        assert header == ["z", "n"]
        assert rows == [(1.0, 2.0), (3.0, 4.0)]

    def test_non_numeric_row(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("z,n\n1,abc\n", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="row 2"):
            read_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            read_csv(tmp_path / "none.csv")
