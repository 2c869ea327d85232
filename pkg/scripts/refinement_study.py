"""Length, area and residual errors of the equatorial disk and an orthogonal cap under refinement.

Writes one CSV per surface into the output directory and prints the tables.
"""
import argparse
from pathlib import Path

from fblab.cli import RunConfig, format_study, monotone, refinement_study, write_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--resolution", type=int, default=10_000, help="vertex count of the finest level")
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="results/refinement")
    args = ap.parse_args()

    for surface in ("equatorial-disk", "spherical-cap:1.0"):
        cfg = RunConfig(surface=surface, resolution=args.resolution, jobs=args.jobs, checks=())
        rows = refinement_study(cfg, args.levels)
        out = Path(args.out) / surface.replace(":", "_")
        write_study(rows, out)
        print(f"\n{surface}")
        print(format_study(rows))
        print("monotone length/area errors:",
              monotone(rows, "length_error") and monotone(rows, "area_error"))


if __name__ == "__main__":
    main()
