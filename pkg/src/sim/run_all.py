import argparse
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path


def run(cmd: list[str], cwd: Path) -> tuple[int, str]:
    p = subprocess.run(cmd, cwd=cwd, stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True)
    return p.returncode, p.stdout


def main():
    ap = argparse.ArgumentParser(description="Run every figure pipeline and report PASS/FAIL")
    ap.add_argument("--config", default=None, help="Scenario TOML (default: scenarios/smoke.toml)")
    ap.add_argument("--threads", default="1")
    ap.add_argument("--only", nargs="*", default=None, help="Subset of steps to run, by name")
    ap.add_argument("--keep", action="store_true", help="Keep the temporary output directory")
    args = ap.parse_args()

    root = Path(__file__).resolve().parent
    repo = root.parents[1]
    config = args.config or str(root / "scenarios" / "smoke.toml")
    out = Path(tempfile.mkdtemp(prefix="splitter_run_"))

    def step(*cmd: str) -> list[str]:
        sub = cmd[0] if cmd[0] != "figure" else f"fig{cmd[1]}"
        return [sys.executable, "-m", "src.main", *cmd, "--config", config,
                "--threads", args.threads, "--out", str(out / sub)]

    steps = [
        ("potential", step("potential")),
        ("fig2a", step("figure", "2a")),
        ("fig2c", step("figure", "2c")),
        ("fig3", step("figure", "3")),
        ("fig4", step("figure", "4")),
        ("fig4c", step("figure", "4c")),
        ("fig3_repeat", step("figure", "3")[:-1] + [str(out / "fig3_repeat")]),
    ]
    if args.only:
        steps = [(name, cmd) for name, cmd in steps if name in args.only]

    results = []
    for name, cmd in steps:
        code, output = run(cmd, repo)
        ok = code == 0
        results.append((name, ok))
        print(("PASS" if ok else "FAIL") + f" {name}")
        if not ok:
            print(output)

    names = dict(results)
    if names.get("fig3") and names.get("fig3_repeat"):
        same = (out / "fig3" / "manifest.json").read_bytes() == (out / "fig3_repeat" / "manifest.json").read_bytes()
        results.append(("fig3_reproducible", same))
        print(("PASS" if same else "FAIL") + " fig3_reproducible")

    failed = [n for n, ok in results if not ok]
    print(f"\n{len(results) - len(failed)}/{len(results)} passed")
    if args.keep:
        print(f"Outputs kept in {out}")
    else:
        shutil.rmtree(out, ignore_errors=True)
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
