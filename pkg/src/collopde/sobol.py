"""Gray-code Sobol sequence built from Joe-Kuo direction numbers.

The generator follows the standard Gray-code construction: integer state
X_{k+1} = X_k xor v[c(k)] per dimension, where c(k) is the index of the
lowest zero bit of k, and the all-zeros first point is skipped.  Direction
numbers come from the published `new-joe-kuo-6` text format (columns
d, s, a, m_1..m_s); a table covering dimensions up to 50 ships with the
package, larger tables can be supplied by path.

Output is fully determined by (dim, n, table); there is no seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = ["DirectionTable", "load_direction_table", "default_direction_table", "sobol_points"]

BITS = 32
_SCALE = float(2**BITS)


@dataclass(frozen=True)
class DirectionTable:
    """Primitive-polynomial data per dimension: dim -> (s, a, m_1..m_s).

    Dimension 1 is implicit (all m_i = 1) and never stored.
    """

    rows: dict[int, tuple[int, int, tuple[int, ...]]]

    @property
    def max_dim(self) -> int:
        return max(self.rows) if self.rows else 1


def load_direction_table(path) -> DirectionTable:
    """Parse a Joe-Kuo `d s a m_i` text file (header line tolerated)."""
    rows: dict[int, tuple[int, int, tuple[int, ...]]] = {}
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts or not parts[0].isdigit():
            continue
        vals = [int(tok) for tok in parts]
        d, s, a = vals[0], vals[1], vals[2]
        m = tuple(vals[3:])
        if d < 2 or s < 1 or len(m) != s:
            raise ValueError(f"malformed direction-number row for dimension {d}")
        rows[d] = (s, a, m)
    if not rows:
        raise ValueError(f"no direction-number rows found in {path}")
    return DirectionTable(rows=rows)


def default_direction_table() -> DirectionTable:
    ref = resources.files("collopde").joinpath("data/new-joe-kuo-6.50.txt")
    with resources.as_file(ref) as path:
        return load_direction_table(path)


def _direction_vectors(dim: int, table: DirectionTable) -> np.ndarray:
    """v[j, i]: direction integer i of dimension j+1, left-justified in BITS."""
    v = np.zeros((dim, BITS), dtype=np.uint64)
    v[0] = [1 << (BITS - i - 1) for i in range(BITS)]
    for j in range(2, dim + 1):
        if j not in table.rows:
            raise ValueError(f"direction table has no entry for dimension {j}")
        s, a, m = table.rows[j]
        row = np.zeros(BITS, dtype=np.uint64)
        for i in range(min(s, BITS)):
            row[i] = np.uint64(m[i]) << np.uint64(BITS - i - 1)
        for i in range(s, BITS):
            row[i] = row[i - s] ^ (row[i - s] >> np.uint64(s))
            for k in range(1, s):
                if (a >> (s - 1 - k)) & 1:
                    row[i] ^= row[i - k]
        v[j - 1] = row
    return v


def _lowest_zero_bit(k: int) -> int:
    c = 0
    while k & 1:
        k >>= 1
        c += 1
    return c


def sobol_points(dim: int, n: int, table: DirectionTable | None = None) -> np.ndarray:
    """First n points of the dim-dimensional Sobol sequence, in (0,1)^dim.

    The initial all-zeros point of the raw construction is skipped, so the
    sequence starts at (0.5, ..., 0.5).
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if n < 0:
        raise ValueError("n must be >= 0")
    if n >= 2**BITS:
        raise ValueError(f"n must be < 2^{BITS}")
    if table is None:
        table = default_direction_table()
    if dim > 1 and dim > table.max_dim:
        raise ValueError(
            f"dimension {dim} exceeds direction table (max {table.max_dim})"
        )
    v = _direction_vectors(dim, table)
    out = np.empty((n, dim))
    state = np.zeros(dim, dtype=np.uint64)
    for k in range(n):
        state = state ^ v[:, _lowest_zero_bit(k)]
        out[k] = state / _SCALE
    return out
