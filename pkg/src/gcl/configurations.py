"""Finite point configurations, windows, and counting operations in R^d.

Configurations are stored as ordered arrays for indexed access but compare
as sets: equality is order-insensitive. All value objects are immutable;
their arrays are marked read-only at construction.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Window",
    "Ball",
    "GroundConfiguration",
    "ClusterVector",
    "MarkedPoint",
    "MarkedConfiguration",
    "count_in",
    "sum_over",
    "restrict",
    "as_point",
    "as_point_matrix",
]


def as_point(x, dimension: int | None = None) -> np.ndarray:
    """Validate and freeze a single point as a (d,) float array."""
    arr = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    if arr.ndim != 1:
        raise ValueError("a point must be a length-d vector")
    if dimension is not None and arr.shape[0] != dimension:
        raise ValueError(f"expected a point of dimension {dimension}, got {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise ValueError("point coordinates must be finite")
    arr.flags.writeable = False
    return arr


def as_point_matrix(points, dimension: int | None = None) -> np.ndarray:
    """Validate and freeze a collection of points as an (n, d) float array."""
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        if dimension is None:
            if arr.ndim == 2:
                dimension = arr.shape[1]
            else:
                raise ValueError("empty point list needs an explicit dimension")
        arr = np.empty((0, dimension), dtype=float)
    else:
        arr = np.atleast_2d(arr).copy()
        if arr.ndim != 2:
            raise ValueError("points must form an (n, d) array")
        if dimension is not None and arr.shape[1] != dimension:
            raise ValueError(f"expected points of dimension {dimension}, got {arr.shape[1]}")
        if not np.isfinite(arr).all():
            raise ValueError("point coordinates must be finite")
    arr.flags.writeable = False
    return arr


def _lexsorted(points: np.ndarray) -> np.ndarray:
    if points.shape[0] == 0:
        return points
    order = np.lexsort(points.T[::-1])
    return points[order]


def _has_duplicate_rows(points: np.ndarray) -> bool:
    if points.shape[0] < 2:
        return False
    srt = _lexsorted(points)
    return bool((np.diff(srt, axis=0) == 0.0).all(axis=1).any())


class Window:
    """Axis-aligned closed box with positive volume."""

    __slots__ = ("lower", "upper")

    def __init__(self, lower, upper):
        lo = np.atleast_1d(np.asarray(lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(upper, dtype=float)).copy()
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("window bounds must be equal-length vectors")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("window bounds must be finite")
        if not (lo < hi).all():
            raise ValueError("window requires lower < upper in every axis")
        lo.flags.writeable = False
        hi.flags.writeable = False
        self.lower = lo
        self.upper = hi

    @property
    def dimension(self) -> int:
        return self.lower.shape[0]

    @property
    def sides(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    def contains(self, points) -> np.ndarray | np.bool_:
        pts = np.asarray(points, dtype=float)
        return ((pts >= self.lower) & (pts <= self.upper)).all(axis=-1)

    def intersect(self, other: "Window") -> "Window | None":
        """Intersection box, or None when the interiors are disjoint."""
        lo = np.maximum(self.lower, other.lower)
        hi = np.minimum(self.upper, other.upper)
        if (lo < hi).all():
            return Window(lo, hi)
        return None

    def expand(self, margin) -> "Window":
        """Enlarge by `margin` (scalar or per-axis) on every side."""
        m = np.broadcast_to(np.asarray(margin, dtype=float), (self.dimension,))
        if (m < 0).any():
            raise ValueError("expansion margin must be nonnegative")
        return Window(self.lower - m, self.upper + m)

    def hull_with(self, points) -> "Window":
        """Smallest window containing this one and the given points."""
        pts = np.asarray(points, dtype=float)
        if pts.size == 0:
            return self
        pts = np.atleast_2d(pts)
        return Window(
            np.minimum(self.lower, pts.min(axis=0)),
            np.maximum(self.upper, pts.max(axis=0)),
        )

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.lower + rng.random((n, self.dimension)) * self.sides

    def __eq__(self, other):
        if not isinstance(other, Window):
            return NotImplemented
        return (
            self.lower.shape == other.lower.shape
            and bool((self.lower == other.lower).all())
            and bool((self.upper == other.upper).all())
        )

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))

    def __repr__(self):
        return f"Window(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


class Ball:
    """Closed Euclidean ball."""

    __slots__ = ("center", "radius")

    def __init__(self, center, radius):
        self.center = as_point(center)
        radius = float(radius)
        if not (radius > 0 and math.isfinite(radius)):
            raise ValueError("ball radius must be positive and finite")
        self.radius = radius

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    @property
    def volume(self) -> float:
        d = self.dimension
        return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * self.radius ** d

    def contains(self, points) -> np.ndarray | np.bool_:
        pts = np.asarray(points, dtype=float)
        sq = ((pts - self.center) ** 2).sum(axis=-1)
        return sq <= self.radius ** 2

    def __eq__(self, other):
        if not isinstance(other, Ball):
            return NotImplemented
        return bool((self.center == other.center).all()) and self.radius == other.radius

    def __hash__(self):
        return hash((self.center.tobytes(), self.radius))

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"


class GroundConfiguration:
    """Finite simple point set inside a window."""

    __slots__ = ("points", "window")

    def __init__(self, points, window: Window):
        pts = as_point_matrix(points, dimension=window.dimension)
        if pts.shape[0] > 0 and not window.contains(pts).all():
            raise ValueError("all points must lie inside the window")
        if _has_duplicate_rows(pts):
            raise ValueError("configuration points must be pairwise distinct")
        self.points = pts
        self.window = window

    @property
    def dimension(self) -> int:
        return self.window.dimension

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def __len__(self):
        return self.points.shape[0]

    def __iter__(self):
        return iter(self.points)

    def __eq__(self, other):
        if not isinstance(other, GroundConfiguration):
            return NotImplemented
        if self.window != other.window or len(self) != len(other):
            return False
        return bool((_lexsorted(self.points) == _lexsorted(other.points)).all())

    def __hash__(self):
        return hash((_lexsorted(self.points).tobytes(), self.window))

    def __repr__(self):
        return f"GroundConfiguration(n_points={self.n_points}, window={self.window!r})"


class ClusterVector:
    """Ordered finite tuple of offset vectors (possibly empty)."""

    __slots__ = ("offsets",)

    def __init__(self, offsets, dimension: int | None = None):
        self.offsets = as_point_matrix(offsets, dimension=dimension)

    @property
    def size(self) -> int:
        return self.offsets.shape[0]

    @property
    def dimension(self) -> int:
        return self.offsets.shape[1]

    def __len__(self):
        return self.offsets.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ClusterVector):
            return NotImplemented
        return self.offsets.shape == other.offsets.shape and bool(
            (self.offsets == other.offsets).all()
        )

    def __hash__(self):
        return hash(self.offsets.tobytes())

    def __repr__(self):
        return f"ClusterVector(size={self.size}, dimension={self.dimension})"


class MarkedPoint:
    """Center point together with its in-cluster offset tuple."""

    __slots__ = ("center", "cluster")

    def __init__(self, center, cluster: ClusterVector):
        self.center = as_point(center)
        if not isinstance(cluster, ClusterVector):
            cluster = ClusterVector(cluster, dimension=self.center.shape[0])
        if cluster.dimension != self.center.shape[0]:
            raise ValueError("center and cluster offsets must share a dimension")
        self.cluster = cluster

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    def projected(self) -> np.ndarray:
        """Cluster points translated to the center: rows y_i + x."""
        return self.cluster.offsets + self.center

    def __eq__(self, other):
        if not isinstance(other, MarkedPoint):
            return NotImplemented
        return bool((self.center == other.center).all()) and self.cluster == other.cluster

    def __hash__(self):
        return hash((self.center.tobytes(), self.cluster))

    def __repr__(self):
        return f"MarkedPoint(center={self.center.tolist()}, cluster_size={self.cluster.size})"


class MarkedConfiguration:
    """Finite set of marked points with pairwise distinct centers."""

    __slots__ = ("marked_points", "window", "centers")

    def __init__(self, marked_points, window: Window):
        mps = tuple(marked_points)
        for mp in mps:
            if not isinstance(mp, MarkedPoint):
                raise TypeError("marked_points must contain MarkedPoint values")
            if mp.dimension != window.dimension:
                raise ValueError("marked point dimension must match the window")
        centers = as_point_matrix(
            [mp.center for mp in mps], dimension=window.dimension
        )
        if centers.shape[0] > 0 and not window.contains(centers).all():
            raise ValueError("all centers must lie inside the window")
        if _has_duplicate_rows(centers):
            raise ValueError("centers must be pairwise distinct")
        self.marked_points = mps
        self.window = window
        self.centers = centers

    @property
    def dimension(self) -> int:
        return self.window.dimension

    @property
    def n_points(self) -> int:
        return len(self.marked_points)

    @property
    def total_offspring(self) -> int:
        return sum(mp.cluster.size for mp in self.marked_points)

    def __len__(self):
        return len(self.marked_points)

    def __iter__(self):
        return iter(self.marked_points)

    def __eq__(self, other):
        if not isinstance(other, MarkedConfiguration):
            return NotImplemented
        if self.window != other.window or len(self) != len(other):
            return False
        key = lambda mp: tuple(mp.center)
        return sorted(self.marked_points, key=key) == sorted(other.marked_points, key=key)

    def __hash__(self):
        key = lambda mp: tuple(mp.center)
        return hash((tuple(sorted(self.marked_points, key=key)), self.window))

    def __repr__(self):
        return (
            f"MarkedConfiguration(n_points={self.n_points}, "
            f"total_offspring={self.total_offspring}, window={self.window!r})"
        )


def count_in(config: GroundConfiguration, region) -> int:
    """Number of configuration points inside the region (window or ball)."""
    if len(config) == 0:
        return 0
    return int(np.count_nonzero(region.contains(config.points)))


def sum_over(config: GroundConfiguration, f) -> float:
    """Sum of f over the configuration points.

    f must accept an (n, d) array of points and return n values.
    """
    if len(config) == 0:
        return 0.0
    return float(np.sum(f(config.points)))


def restrict(config: GroundConfiguration, region) -> GroundConfiguration:
    """Sub-configuration of the points inside the region, same window."""
    if len(config) == 0:
        return config
    mask = np.asarray(region.contains(config.points), dtype=bool)
    return GroundConfiguration(config.points[mask], config.window)
