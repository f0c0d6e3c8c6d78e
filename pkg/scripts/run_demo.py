#!/usr/bin/env python3
"""End-to-end demo against the committed smallconv fixture.

Runs the full criterion set on the fixture test set, then a second pass that
compares the test set against two synthetic variants drawn with wider pixel
spread. Everything lands under demo-out/ (or the directory given as the
first argument); open demo-out/coverage/report.html afterwards.
"""

from __future__ import annotations

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from netcov.cli import main
from netcov.data import save_raw
from netcov.synth import gaussian_images

FIXTURE = REPO / "fixtures" / "smallconv"


def run(argv: list[str]) -> None:
    print("$ netcov " + " ".join(argv))
    code = main(argv)
    if code != 0:
        raise SystemExit(code)
    print()


def main_demo() -> None:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo-out")

    run([
        "--model", str(FIXTURE / "model"),
        "--input-tests", str(FIXTURE / "test"),
        "--load-profile", str(FIXTURE / "profile"),
        "--outputs", str(out / "coverage"),
    ])

    # the comparison needs sibling datasets; wider spread pushes activations
    # toward the profiled boundaries, which is what NCoverage should surface
    shape = (1, 10, 10)
    for name, spread, seed in (("wider", 1.4, 303), ("widest", 2.0, 304)):
        save_raw(gaussian_images(400, shape, seed=seed, spread=spread, name=name),
                 out / "datasets" / name)

    run([
        "--model", str(FIXTURE / "model"),
        "--input-tests", str(FIXTURE / "test"),
        "--load-profile", str(FIXTURE / "profile"),
        "--compare-baseline", str(FIXTURE / "test"),
        "--compare", str(out / "datasets" / "wider"),
        "--compare", str(out / "datasets" / "widest"),
        "--outputs", str(out / "comparison"),
    ])

    print(f"reports under {out}/: coverage/report.html, comparison/report.html")


if __name__ == "__main__":
    main_demo()
