"""Plain-text weight checkpoints.

Format "PCHN v1": a magic first line, then one block per connection in
network order:

    conn <src> <dst> <rows> <cols>
    ... M, row-major, one row per line ...
    ... W, row-major, one row per line ...
    ... b on one line ...

rows/cols are M's shape (dst size by src size); W is stored with shape
(cols, rows).  Values are printed with 17 significant digits, which
round-trips float64 exactly, so save -> load -> save is byte-identical.
"""

import numpy as np

from .errors import ConstructionError
from .fileio import atomic_write_text

MAGIC = "PCHN v1"


def _fmt_row(row):
    return " ".join(f"{x:.17g}" for x in row)


def save_weights(net, path):
    lines = [MAGIC]
    for c in net.connections:
        rows, cols = c.M.shape
        lines.append(f"conn {c.src} {c.dst} {rows} {cols}")
        for r in c.M:
            lines.append(_fmt_row(r))
        for r in c.W:
            lines.append(_fmt_row(r))
        lines.append(_fmt_row(c.b))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_weights(net, path):
    """Load weights saved by save_weights into net; the architecture must
    match the header lines exactly."""
    with open(path) as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines or lines[0] != MAGIC:
        raise ConstructionError(f"{path}: not a {MAGIC} checkpoint")
    tokens = " ".join(lines[1:]).split()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(tokens):
            raise ConstructionError(f"{path}: truncated checkpoint")
        out = tokens[pos:pos + n]
        pos += n
        return out

    for k, c in enumerate(net.connections):
        head = take(5)
        if head[0] != "conn":
            raise ConstructionError(f"{path}: expected conn header, got {head[0]!r}")
        src, dst, rows, cols = (int(x) for x in head[1:])
        if (src, dst) != (c.src, c.dst) or (rows, cols) != c.M.shape:
            raise ConstructionError(
                f"{path}: connection {k} header {head[1:]} does not match "
                f"architecture ({c.src}, {c.dst}, {c.M.shape[0]}, {c.M.shape[1]})")
        c.M = np.array([float(x) for x in take(rows * cols)]).reshape(rows, cols)
        c.W = np.array([float(x) for x in take(cols * rows)]).reshape(cols, rows)
        c.b = np.array([float(x) for x in take(rows)])
    if pos != len(tokens):
        raise ConstructionError(f"{path}: trailing data after last connection")
