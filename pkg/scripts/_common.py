"""Shared argument handling for the experiment scripts."""
import argparse
import sys
from pathlib import Path

from lowrank_recovery.io import save_bytes, write_csv


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--seed", type=int, default=2024, help="master seed")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    return p


def emit(path: Path, rows, comments=()) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    save_bytes(str(path), write_csv(rows, comments=list(comments)))
    print(f"wrote {path} ({len(rows)} rows)", file=sys.stderr)
