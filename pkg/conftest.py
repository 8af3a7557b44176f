# Repository root on sys.path so tests can `from src.x import y`.
