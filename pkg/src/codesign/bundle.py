"""Plain-text matrix bundle.

Layout::

    codesign-bundle 1
    matrix <name> <rows> <cols>
    <row 0 values, space separated>
    ...
    matrix <name> ...

Values are written with ``repr`` so reading them back is exact.
"""
from pathlib import Path

import numpy as np

from .errors import ParseError

MAGIC = "codesign-bundle"
VERSION = 1


def save_bundle(mats, path):
    lines = [f"{MAGIC} {VERSION}"]
    for name, M in mats.items():
        if any(c.isspace() for c in name):
            raise ValueError(f"matrix name {name!r} contains whitespace")
        M = np.atleast_2d(np.asarray(M, float))
        if M.ndim != 2:
            raise ValueError(f"{name} is not a matrix")
        lines.append(f"matrix {name} {M.shape[0]} {M.shape[1]}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in M)
    Path(path).write_text("\n".join(lines) + "\n")


def load_bundle(path):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].split()[:1] != [MAGIC]:
        raise ParseError(f"{path}: not a matrix bundle", row=1)
    version = int(lines[0].split()[1])
    if version != VERSION:
        raise ParseError(f"{path}: unsupported bundle version {version}", row=1)
    out = {}
    i = 1
    while i < len(lines):
        head = lines[i].split()
        if not head:
            i += 1
            continue
        if head[0] != "matrix" or len(head) != 4:
            raise ParseError(f"{path}: expected 'matrix <name> <rows> <cols>'", row=i + 1)
        name, r, c = head[1], int(head[2]), int(head[3])
        M = np.empty((r, c))
        for k in range(r):
            if i + 1 + k >= len(lines):
                raise ParseError(f"{path}: matrix {name} truncated", row=i + 1 + k)
            vals = lines[i + 1 + k].split()
            if len(vals) != c:
                raise ParseError(f"{path}: matrix {name} row has {len(vals)} values, expected {c}",
                                 row=i + 2 + k)
            M[k] = [float(v) for v in vals]
        out[name] = M
        i += 1 + r
    return out
