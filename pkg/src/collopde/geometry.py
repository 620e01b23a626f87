"""Domains, collocation sampling, distance fields, and inflow classification.

Domains come in three flavors: Interval (1D), simple Polygon (2D), and
HyperRectangle (any dimension).  Interior samples can be drawn on a grid,
uniformly at random, or from a Sobol stream; polygons use hit-and-miss
rejection from the bounding box.  Boundary samples carry outward unit
normals so the advection inflow rule can be applied afterwards.

Exact distance-to-boundary fields are computed against the discrete
boundary sample set, either by brute force or through a k-d tree; both
backends return the same distances and the choice is a speed knob only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .sobol import DirectionTable, sobol_points

__all__ = [
    "Interval",
    "Polygon",
    "HyperRectangle",
    "BoundaryPoint",
    "CollocationSet",
    "DistanceField",
    "domain_dim",
    "point_in_polygon",
    "sample_interior",
    "sample_boundary",
    "classify_inflow",
    "apply_inflow_rule",
    "distance_field",
    "star_polygon",
    "unit_square",
    "load_polygon",
    "save_polygon",
    "export_points_csv",
    "load_points_csv",
]

REJECTION_BUDGET_FACTOR = 10_000  # max candidate draws per requested point


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"interval needs a < b, got [{self.a}, {self.b}]")


@dataclass(frozen=True)
class Polygon:
    """Simple closed polygon; vertices ordered, last edge closes implicitly."""

    vertices: np.ndarray
    validate_simple: bool = False

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("polygon needs >= 3 two-dimensional vertices")
        object.__setattr__(self, "vertices", v)
        lens = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
        if np.any(lens == 0.0):
            raise ValueError("polygon has a zero-length edge")
        if self.validate_simple and _self_intersects(v):
            raise ValueError("polygon is self-intersecting")

    @property
    def edge_vectors(self) -> np.ndarray:
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    @property
    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edge_vectors, axis=1)

    @property
    def perimeter(self) -> float:
        return float(self.edge_lengths.sum())

    @property
    def signed_area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        return 0.5 * float(np.sum(x * yn - xn * y))

    @property
    def centroid(self) -> np.ndarray:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a = 0.5 * cross.sum()
        cx = np.sum((x + xn) * cross) / (6.0 * a)
        cy = np.sum((y + yn) * cross) / (6.0 * a)
        return np.array([cx, cy])

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def outward_normals(self) -> np.ndarray:
        """Unit outward normal per edge, respecting vertex orientation."""
        e = self.edge_vectors
        n = np.stack([e[:, 1], -e[:, 0]], axis=1)
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        if self.signed_area < 0:
            n = -n
        return n


@dataclass(frozen=True)
class HyperRectangle:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError("hyperrectangle needs lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size


Domain = Interval | Polygon | HyperRectangle


def domain_dim(domain: Domain) -> int:
    if isinstance(domain, Interval):
        return 1
    if isinstance(domain, Polygon):
        return 2
    if isinstance(domain, HyperRectangle):
        return domain.dim
    raise TypeError(f"unsupported domain {type(domain).__name__}")


@dataclass
class BoundaryPoint:
    position: np.ndarray
    outward_normal: np.ndarray
    is_inflow: bool = False

    def __post_init__(self):
        self.position = np.atleast_1d(np.asarray(self.position, dtype=float))
        self.outward_normal = np.atleast_1d(np.asarray(self.outward_normal, dtype=float))
        nrm = np.linalg.norm(self.outward_normal)
        if abs(nrm - 1.0) > 1e-12:
            raise ValueError(f"outward normal must be unit length, got {nrm}")


@dataclass
class CollocationSet:
    """Interior points, boundary points, and the distance-training subset."""

    interior: np.ndarray
    boundary: list[BoundaryPoint]
    distance_subset: np.ndarray = field(default=None)

    def __post_init__(self):
        self.interior = np.atleast_2d(np.asarray(self.interior, dtype=float))
        if self.distance_subset is None:
            # default: leading tenth of the interior set in generation order
            n_d = max(1, round(0.1 * len(self.interior)))
            self.distance_subset = np.arange(n_d)
        self.distance_subset = np.asarray(self.distance_subset, dtype=int)
        if len(self.distance_subset) and (
            self.distance_subset.min() < 0
            or self.distance_subset.max() >= len(self.interior)
        ):
            raise ValueError("distance subset indexes outside the interior set")

    @property
    def boundary_positions(self) -> np.ndarray:
        return np.array([bp.position for bp in self.boundary])

    @property
    def subset_points(self) -> np.ndarray:
        return self.interior[self.distance_subset]


@dataclass
class DistanceField:
    """Raw distances for one query batch plus the recorded normalization."""

    raw: np.ndarray
    normalization: float

    @property
    def normalized(self) -> np.ndarray:
        return self.raw / self.normalization


# ----------------------------------------------------------- polygon queries

def _on_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray, tol: float = 1e-12) -> bool:
    d = b - a
    cross = d[0] * (p[1] - a[1]) - d[1] * (p[0] - a[0])
    if abs(cross) > tol * max(1.0, np.linalg.norm(d)):
        return False
    t = np.dot(p - a, d) / np.dot(d, d)
    return -tol <= t <= 1 + tol


def point_in_polygon(p, poly: Polygon) -> bool:
    """Even-odd ray crossing; points on the boundary count as outside."""
    p = np.asarray(p, dtype=float)
    v = poly.vertices
    nxt = np.roll(v, -1, axis=0)
    for a, b in zip(v, nxt):
        if _on_segment(p, a, b):
            return False
    inside = False
    for (x1, y1), (x2, y2) in zip(v, nxt):
        if (y1 > p[1]) != (y2 > p[1]):
            x_cross = x1 + (p[1] - y1) * (x2 - x1) / (y2 - y1)
            if p[0] < x_cross:
                inside = not inside
    return inside


def _segments_properly_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _self_intersects(v: np.ndarray) -> bool:
    n = len(v)
    edges = [(v[i], v[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # shared endpoint with a neighbor
            if _segments_properly_intersect(*edges[i], *edges[j]):
                return True
    return False


# ----------------------------------------------------------------- sampling

def sample_interior(
    domain: Domain,
    n: int,
    strategy: str = "uniform-random",
    seed: int = 0,
    direction_table: DirectionTable | None = None,
) -> np.ndarray:
    """Exactly n points strictly inside the domain, shape (n, dim)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if strategy not in ("grid", "uniform-random", "sobol"):
        raise ValueError(f"unknown interior sampling strategy {strategy!r}")
    if isinstance(domain, Interval):
        lo, hi = np.array([domain.a]), np.array([domain.b])
        return _sample_box(lo, hi, n, strategy, seed, direction_table)
    if isinstance(domain, HyperRectangle):
        return _sample_box(domain.lo, domain.hi, n, strategy, seed, direction_table)
    if isinstance(domain, Polygon):
        if strategy == "grid":
            raise ValueError("grid sampling is only defined for box-like domains")
        return _sample_polygon_interior(domain, n, strategy, seed, direction_table)
    raise TypeError(f"unsupported domain {type(domain).__name__}")


def _sample_box(lo, hi, n, strategy, seed, table) -> np.ndarray:
    dim = lo.size
    if strategy == "grid":
        per_axis = round(n ** (1.0 / dim))
        if per_axis**dim != n:
            raise ValueError(
                f"grid sampling needs n to be a {dim}-th power, got {n}"
            )
        axes = [np.linspace(lo[i], hi[i], per_axis + 2)[1:-1] for i in range(dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    if strategy == "uniform-random":
        unit = np.random.default_rng(seed).uniform(size=(n, dim))
    else:
        unit = sobol_points(dim, n, table)
    return lo + unit * (hi - lo)


def _sample_polygon_interior(poly, n, strategy, seed, table) -> np.ndarray:
    lo, hi = poly.bounding_box
    budget = REJECTION_BUDGET_FACTOR * n
    points = np.empty((n, 2))
    got = 0
    drawn = 0
    rng = np.random.default_rng(seed)
    sobol_cursor = 0
    chunk = max(64, 2 * n)
    while got < n:
        if drawn >= budget:
            raise RuntimeError(
                f"hit-and-miss rejection failed: {got}/{n} points after {drawn} draws"
            )
        if strategy == "uniform-random":
            unit = rng.uniform(size=(chunk, 2))
        else:
            unit = sobol_points(2, sobol_cursor + chunk, table)[sobol_cursor:]
            sobol_cursor += chunk
        drawn += chunk
        cand = lo + unit * (hi - lo)
        for p in cand:
            if point_in_polygon(p, poly):
                points[got] = p
                got += 1
                if got == n:
                    break
    return points


def sample_boundary(
    domain: Domain,
    m: int,
    seed: int = 0,
    strategy: str = "uniform",
) -> list[BoundaryPoint]:
    """m boundary samples with outward unit normals."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if strategy not in ("uniform", "stratified"):
        raise ValueError(f"unknown boundary sampling strategy {strategy!r}")
    if isinstance(domain, Interval):
        if m > 2:
            raise ValueError("an interval boundary has at most 2 points")
        pts = [BoundaryPoint(np.array([domain.a]), np.array([-1.0]))]
        if m == 2:
            pts.append(BoundaryPoint(np.array([domain.b]), np.array([1.0])))
        return pts
    if isinstance(domain, Polygon):
        return _sample_polygon_boundary(domain, m, seed, strategy)
    if isinstance(domain, HyperRectangle):
        return _sample_box_boundary(domain, m, seed, strategy)
    raise TypeError(f"unsupported domain {type(domain).__name__}")


def _allocate_counts(weights: np.ndarray, m: int) -> np.ndarray:
    """Largest-remainder apportionment of m samples over weighted bins."""
    quota = weights / weights.sum() * m
    counts = np.floor(quota).astype(int)
    rem = m - counts.sum()
    if rem > 0:
        order = np.argsort(-(quota - counts))
        counts[order[:rem]] += 1
    return counts


def _sample_polygon_boundary(poly, m, seed, strategy) -> list[BoundaryPoint]:
    verts = poly.vertices
    nxt = np.roll(verts, -1, axis=0)
    lengths = poly.edge_lengths
    normals = poly.outward_normals()
    out: list[BoundaryPoint] = []
    if strategy == "uniform":
        rng = np.random.default_rng(seed)
        s = rng.uniform(0.0, poly.perimeter, size=m)
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        edge_idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(lengths) - 1)
        for si, e in zip(s, edge_idx):
            t = (si - cum[e]) / lengths[e]
            pos = verts[e] + t * (nxt[e] - verts[e])
            out.append(BoundaryPoint(pos, normals[e]))
    else:
        counts = _allocate_counts(lengths, m)
        for e, c in enumerate(counts):
            for j in range(c):
                t = (j + 0.5) / c
                pos = verts[e] + t * (nxt[e] - verts[e])
                out.append(BoundaryPoint(pos, normals[e]))
    return out


def _sample_box_boundary(rect, m, seed, strategy) -> list[BoundaryPoint]:
    dim = rect.dim
    widths = rect.hi - rect.lo
    # 2*dim faces; face (axis, side) has measure prod of the other widths
    faces = [(axis, side) for axis in range(dim) for side in (0, 1)]
    areas = np.array(
        [np.prod(np.delete(widths, axis)) for axis, _ in faces], dtype=float
    )
    rng = np.random.default_rng(seed)
    if strategy == "uniform":
        counts = np.bincount(
            rng.choice(len(faces), size=m, p=areas / areas.sum()), minlength=len(faces)
        )
    else:
        counts = _allocate_counts(areas, m)
    out: list[BoundaryPoint] = []
    for (axis, side), c in zip(faces, counts):
        for _ in range(c):
            pos = rect.lo + rng.uniform(size=dim) * widths
            pos[axis] = rect.hi[axis] if side else rect.lo[axis]
            normal = np.zeros(dim)
            normal[axis] = 1.0 if side else -1.0
            out.append(BoundaryPoint(pos, normal))
    return out


# ------------------------------------------------------------------- inflow

def classify_inflow(bp: BoundaryPoint, velocity) -> bool:
    """True on the inflow part of the boundary: velocity . n < 0."""
    velocity = np.asarray(velocity, dtype=float)
    if velocity.shape != bp.outward_normal.shape:
        raise ValueError("velocity dimension does not match boundary point")
    return float(np.dot(velocity, bp.outward_normal)) < 0.0


def apply_inflow_rule(cset: CollocationSet, velocity) -> CollocationSet:
    """Move non-inflow boundary points into the interior collocation set.

    Boundary conditions only constrain the inflow part of the boundary, so
    every other boundary sample becomes a plain collocation point instead.
    Raises if no inflow points remain (ill-posed advection setup).
    """
    kept: list[BoundaryPoint] = []
    moved: list[np.ndarray] = []
    for bp in cset.boundary:
        if classify_inflow(bp, velocity):
            kept.append(replace(bp, is_inflow=True))
        else:
            moved.append(bp.position)
    if not kept:
        raise ValueError("no inflow boundary points for this velocity; check setup")
    interior = cset.interior
    if moved:
        interior = np.vstack([interior, np.array(moved)])
    return CollocationSet(
        interior=interior,
        boundary=kept,
        distance_subset=cset.distance_subset.copy(),
    )


# ---------------------------------------------------------------- distances

def distance_field(queries, boundary_positions, backend: str = "kdtree") -> DistanceField:
    """Minimum Euclidean distance from each query to the boundary samples."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    boundary_positions = np.atleast_2d(np.asarray(boundary_positions, dtype=float))
    if boundary_positions.size == 0:
        raise ValueError("boundary point set is empty")
    if backend == "naive":
        diff = queries[:, None, :] - boundary_positions[None, :, :]
        raw = np.sqrt(np.sum(diff**2, axis=2)).min(axis=1)
    elif backend == "kdtree":
        raw, _ = cKDTree(boundary_positions).query(queries)
    else:
        raise ValueError(f"unknown distance backend {backend!r}")
    norm = float(raw.max()) if raw.size else 1.0
    if norm == 0.0:
        norm = 1.0
    return DistanceField(raw=raw, normalization=norm)


# ----------------------------------------------------------------- fixtures

def star_polygon(
    spikes: int = 5,
    outer_radius: float = 1.0,
    inner_radius: float = 0.4,
    center=(0.0, 0.0),
    phase: float = 0.5 * np.pi,
) -> Polygon:
    """Non-convex star fixture used throughout the 2D experiments."""
    angles = phase + np.arange(2 * spikes) * np.pi / spikes
    radii = np.where(np.arange(2 * spikes) % 2 == 0, outer_radius, inner_radius)
    verts = np.stack(
        [center[0] + radii * np.cos(angles), center[1] + radii * np.sin(angles)], axis=1
    )
    return Polygon(verts)


def unit_square() -> Polygon:
    return Polygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


# ------------------------------------------------------------------ file IO

def load_polygon(path) -> Polygon:
    """Read `x y` vertex lines; closure is implicit."""
    rows = []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) != 2:
            raise ValueError(f"polygon line needs two coordinates: {line!r}")
        rows.append([float(parts[0]), float(parts[1])])
    return Polygon(np.array(rows))


def save_polygon(poly: Polygon, path) -> None:
    lines = [f"{float(x)!r} {float(y)!r}" for x, y in poly.vertices]
    Path(path).write_text("\n".join(lines) + "\n")


def export_points_csv(points, path) -> None:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    header = ",".join(f"x{i + 1}" for i in range(points.shape[1]))
    np.savetxt(path, points, delimiter=",", header=header, comments="")


def load_points_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
