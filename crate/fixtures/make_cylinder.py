"""Generate fixtures/cylinder.mesh: channel [-0.6, 2.4] x [-0.5, 0.5] with a
polygonal cylinder of radius 0.1 centred slightly below the axis.

Requires the `triangle` package (pip install triangle).
"""

import math
import sys

import numpy as np
import triangle

X0, X1, Y0, Y1 = -0.6, 2.4, -0.5, 0.5
CENTER = (0.0, -0.01)
RADIUS = 0.1
N_CIRCLE = 48
# refined box around the cylinder and near wake
BOX = (-0.25, 1.2, -0.25, 0.25)
AREA_FAR, AREA_NEAR = 3.0e-3, 5.0e-4

INLET, WALL, OUTLET, INTERNAL = 1, 2, 3, 4
TAGS = {INLET: "inlet", WALL: "wall", OUTLET: "outlet"}


def build():
    pts, segs, marks = [], [], []

    def loop(points, markers):
        base = len(pts)
        pts.extend(points)
        n = len(points)
        for i in range(n):
            segs.append((base + i, base + (i + 1) % n))
            marks.append(markers[i])

    loop([(X0, Y0), (X1, Y0), (X1, Y1), (X0, Y1)], [WALL, OUTLET, WALL, INLET])
    bx0, bx1, by0, by1 = BOX
    loop([(bx0, by0), (bx1, by0), (bx1, by1), (bx0, by1)], [INTERNAL] * 4)
    circle = [
        (CENTER[0] + RADIUS * math.cos(2 * math.pi * k / N_CIRCLE),
         CENTER[1] + RADIUS * math.sin(2 * math.pi * k / N_CIRCLE))
        for k in range(N_CIRCLE)
    ]
    loop(circle, [WALL] * N_CIRCLE)

    geom = {
        "vertices": np.array(pts),
        "segments": np.array(segs),
        "segment_markers": np.array(marks),
        "holes": np.array([CENTER]),
        "regions": np.array([
            [bx0 + 0.01, by0 + 0.01, 1, AREA_NEAR],
            [X0 + 0.01, Y0 + 0.01, 0, AREA_FAR],
        ]),
    }
    return triangle.triangulate(geom, "pq30aA")


def to_ascii(t):
    verts = t["vertices"]
    cells = []
    for c in t["triangles"]:
        a, b, d = (verts[i] for i in c)
        det = (b[0] - a[0]) * (d[1] - a[1]) - (b[1] - a[1]) * (d[0] - a[0])
        cells.append((c[0], c[1], c[2]) if det > 0 else (c[0], c[2], c[1]))
    edges = [
        (s[0], s[1], TAGS[m])
        for s, m in zip(t["segments"], t["segment_markers"].ravel())
        if m in TAGS
    ]
    out = [f"$vertices\n{len(verts)}"]
    out += [f"{i} {x!r} {y!r}" for i, (x, y) in enumerate(verts.tolist())]
    out.append(f"$cells\n{len(cells)}")
    out += [f"{i} {a} {b} {c}" for i, (a, b, c) in enumerate(cells)]
    out.append(f"$boundary\n{len(edges)}")
    out += [f"{a} {b} {tag}" for a, b, tag in edges]
    return "\n".join(out) + "\n"


if __name__ == "__main__":
    path = sys.argv[1] if len(sys.argv) > 1 else "cylinder.mesh"
    t = build()
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(to_ascii(t))
    print(f"{path}: {len(t['vertices'])} vertices, {len(t['triangles'])} cells")
