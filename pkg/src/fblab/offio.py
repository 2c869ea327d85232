"""Reader/writer for a strict subset of the OFF text format (triangles only)."""
from __future__ import annotations

import numpy as np

from .mesh import build_mesh


def write_off(path, mesh):
    lines = ["OFF", f"{mesh.n_vertices} {len(mesh.triangles)} {len(mesh.edges)}"]
    lines += [" ".join(f"{c:.17g}" for c in p) for p in mesh.vertices]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_off(path):
    with open(path) as fh:
        tokens = [ln.split("#", 1)[0].strip() for ln in fh]
    tokens = [t for t in tokens if t]
    if not tokens or tokens[0] != "OFF":
        raise ValueError("missing OFF header")
    counts = tokens[1].split()
    nv, nf = int(counts[0]), int(counts[1])
    if len(tokens) < 2 + nv + nf:
        raise ValueError("truncated OFF file")
    verts = np.array([[float(x) for x in tokens[2 + i].split()] for i in range(nv)])
    if verts.shape != (nv, 3):
        raise ValueError("vertex lines must have exactly 3 coordinates")
    faces = []
    for line in tokens[2 + nv:2 + nv + nf]:
        parts = line.split()
        if parts[0] != "3" or len(parts) != 4:
            raise ValueError("only triangular faces are supported")
        faces.append([int(p) for p in parts[1:]])
    return build_mesh(verts, faces)
