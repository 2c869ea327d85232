"""Free boundary minimal disks in perturbed balls: length gap, index and low spectrum.

For each perturbation amplitude the equatorial disk is relaxed in the body
|x|² − R² + eps·Y_l(x) < 0, the convexity constant is certified and the
residual 2π − L(∂Σ) is logged alongside the lowest Robin eigenvalues.
Nothing is asserted; the output is data.
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from fblab.body import check_convexity
from fblab.cli import RunConfig, generate, solve
from fblab.errors import FBLabError
from fblab.mesh import area, boundary_length
from fblab.spectral import assemble_index_form, solve_spectrum


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--radius", type=float, default=0.9)
    ap.add_argument("--degrees", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--eps", type=float, nargs="+", default=[0.0, 0.005, 0.01, 0.02])
    ap.add_argument("--resolution", type=int, default=2500)
    ap.add_argument("--out", default="results/perturbed_sweep.csv")
    args = ap.parse_args()

    rows = []
    for l in args.degrees:
        for eps in args.eps:
            spec = f"perturbed:{args.radius},{eps},{l}"
            cfg = RunConfig(body=spec, resolution=args.resolution, checks=())
            row = {"l": l, "eps": eps}
            try:
                mesh, body = generate(cfg)
                row["min_II"] = check_convexity(body, 5000)
                res = solve(cfg, mesh, body)
            except FBLabError as exc:
                row["error"] = type(exc).__name__
                rows.append(row)
                print(row)
                continue
            L = boundary_length(res.mesh)
            w = solve_spectrum(assemble_index_form(res.mesh, body), 6).eigenvalues
            row.update({"L": L, "A": area(res.mesh), "gap": 2 * np.pi - L,
                        "negative": int(np.sum(w < -1e-4 * np.abs(w).max())),
                        **{f"lambda{k + 1}": float(v) for k, v in enumerate(w[:4])}})
            rows.append(row)
            print({k: (round(v, 6) if isinstance(v, float) else v) for k, v in row.items()})

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    keys = sorted({k for r in rows for k in r}, key=lambda k: (k not in ("l", "eps"), k))
    with open(out, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=keys)
        wr.writeheader()
        wr.writerows(rows)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
