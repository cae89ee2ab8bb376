"""Partial transport demo: separated unit squares, three mass levels.

Prints the free-boundary checks per mass and writes one figure per run.
"""

import argparse
from pathlib import Path

from polyot.partial import (
    PartialProblem,
    classify_fb_points,
    fb_normal_check,
    graph_over_L_check,
    interior_ball_check,
    solve_partial,
)
from polyot.shapes import separated_squares
from polyot.svgplot import partial_svg


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--seed", type=int, default=4)
    ap.add_argument("--out", default="out/partial")
    args = ap.parse_args()

    src, tgt = separated_squares()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for frac in (0.25, 0.5, 0.75):
        sol = solve_partial(
            PartialProblem(source=src, target=tgt, mass=frac), n=args.n, seed=args.seed
        )
        mult, lip = graph_over_L_check(sol.free_boundary)
        classes, counts, bounds = classify_fb_points(sol)
        print(
            f"mass {frac}: fb_pts {len(sol.free_boundary)} multiplicity {mult} "
            f"lipschitz {lip:.3f} ball_violations {interior_ball_check(sol)} "
            f"normal_err {fb_normal_check(sol):.4f} classes {counts}"
        )
        (out / f"partial_m{frac}.svg").write_text(partial_svg(sol))
    print(f"figures -> {out}")


if __name__ == "__main__":
    main()
