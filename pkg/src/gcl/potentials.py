"""Pair interaction potentials and configuration energies.

Energies live in R ∪ {+inf}; +inf is represented by math.inf and is an
explicit algebraic element: inf + finite = inf and exp(-inf) = 0. Values are
never NaN and never -inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .configurations import GroundConfiguration

__all__ = [
    "HardCore",
    "SoftRepulsive",
    "LennardJonesType",
    "LJ612",
    "ZeroPotential",
    "PairPotential",
    "phi_pair",
    "energy",
    "local_energy",
    "interaction_energy",
    "exp_neg",
    "CellIndex",
]

INF = math.inf


def exp_neg(e: float) -> float:
    """exp(-e) with exp(-inf) = 0 exactly."""
    if e == INF:
        return 0.0
    return math.exp(-e)


def _points_of(config) -> np.ndarray:
    if isinstance(config, GroundConfiguration):
        return config.points
    return np.atleast_2d(np.asarray(config, dtype=float))


@dataclass(frozen=True)
class HardCore:
    """phi0(x) = +inf for |x| <= r0, else 0."""

    r0: float

    def __post_init__(self):
        if not (self.r0 > 0 and math.isfinite(self.r0)):
            raise ValueError("hard_core requires r0 > 0")

    kind = "hard_core"

    @property
    def interaction_range(self) -> float:
        return self.r0

    @property
    def smooth(self) -> bool:
        return False

    def pair_values(self, sq_dists: np.ndarray) -> np.ndarray:
        return np.where(sq_dists <= self.r0 ** 2, INF, 0.0)


@dataclass(frozen=True)
class SoftRepulsive:
    """phi0(x) = A (1 - |x|/r)^2 for |x| < r, else 0."""

    amplitude: float
    radius: float

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("soft_repulsive requires amplitude >= 0")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError("soft_repulsive requires radius > 0")

    kind = "soft_repulsive"

    @property
    def interaction_range(self) -> float:
        return self.radius

    @property
    def smooth(self) -> bool:
        # C^1 across |x| = r: value and slope both vanish there.
        return True

    def pair_values(self, sq_dists: np.ndarray) -> np.ndarray:
        r = np.sqrt(sq_dists)
        inside = r < self.radius
        vals = np.zeros_like(r)
        np.putmask(vals, inside, self.amplitude * (1.0 - r / self.radius) ** 2)
        return vals

    def pair_gradients(self, diffs: np.ndarray) -> np.ndarray:
        """Gradient in the first argument of phi0(x - y), rows = pairs."""
        r = np.sqrt((diffs ** 2).sum(axis=-1))
        grads = np.zeros_like(diffs)
        inside = (r < self.radius) & (r > 0)
        if inside.any():
            # d/dr A(1-r/R)^2 = -2A(1-r/R)/R, applied along diffs/r
            coef = -2.0 * self.amplitude * (1.0 - r[inside] / self.radius) / self.radius
            grads[inside] = diffs[inside] * (coef / r[inside])[:, None]
        return grads


def _hermite_tail(r: np.ndarray, r1: float, r2: float, p0: float, m0: float) -> np.ndarray:
    """Cubic on [r1, r2] with value p0, slope m0 at r1 and value 0, slope 0 at r2."""
    dr = r2 - r1
    t = (r - r1) / dr
    h00 = (1.0 + 2.0 * t) * (1.0 - t) ** 2
    h10 = t * (1.0 - t) ** 2
    return h00 * p0 + h10 * dr * m0


@dataclass(frozen=True)
class LennardJonesType:
    """phi0(x) = c |x|^(-alpha) for |x| <= r1, cubic tail on (r1, r2], 0 beyond.

    The tail matches value and slope at r1 and reaches 0 with zero slope at
    r2, so the potential is C^1 on (0, inf). Parameters for which that cubic
    would become non-monotone (equivalently dip below 0) are rejected:
    monotonicity is equivalent to alpha (r2 - r1) / r1 <= 3.
    """

    c: float
    r1: float
    r2: float
    alpha: float
    dimension: int = 2

    def __post_init__(self):
        if not (self.c > 0):
            raise ValueError("lennard_jones_type requires c > 0")
        if not (0 < self.r1 < self.r2):
            raise ValueError("lennard_jones_type requires 0 < r1 < r2")
        if not (self.alpha > self.dimension):
            raise ValueError("lennard_jones_type requires alpha > dimension")
        if self.alpha * (self.r2 - self.r1) / self.r1 > 3.0:
            raise ValueError(
                "lennard_jones_type tail would be non-monotone; "
                "requires alpha (r2 - r1) / r1 <= 3"
            )

    kind = "lennard_jones_type"

    @property
    def interaction_range(self) -> float:
        return self.r2

    @property
    def smooth(self) -> bool:
        return True

    def pair_values(self, sq_dists: np.ndarray) -> np.ndarray:
        r = np.sqrt(sq_dists)
        vals = np.zeros_like(r)
        core = r <= self.r1
        np.putmask(vals, core, self.c * np.power(np.where(core, r, 1.0), -self.alpha))
        tail = (r > self.r1) & (r <= self.r2)
        if tail.any():
            p0 = self.c * self.r1 ** (-self.alpha)
            m0 = -self.alpha * self.c * self.r1 ** (-self.alpha - 1.0)
            vals[tail] = _hermite_tail(r[tail], self.r1, self.r2, p0, m0)
        return vals

    def pair_gradients(self, diffs: np.ndarray) -> np.ndarray:
        r = np.sqrt((diffs ** 2).sum(axis=-1))
        dphi = np.zeros_like(r)
        core = (r <= self.r1) & (r > 0)
        np.putmask(
            dphi, core, -self.alpha * self.c * np.power(np.where(core, r, 1.0), -self.alpha - 1.0)
        )
        tail = (r > self.r1) & (r <= self.r2)
        if tail.any():
            dr = self.r2 - self.r1
            t = (r[tail] - self.r1) / dr
            p0 = self.c * self.r1 ** (-self.alpha)
            m0 = -self.alpha * self.c * self.r1 ** (-self.alpha - 1.0)
            # d/dt of the Hermite basis, divided by dr for d/dr
            dh00 = 6.0 * t * (t - 1.0)
            dh10 = (1.0 - t) * (1.0 - 3.0 * t)
            dphi[tail] = dh00 * p0 / dr + dh10 * m0
        grads = np.zeros_like(diffs)
        nz = r > 0
        grads[nz] = diffs[nz] * (dphi[nz] / r[nz])[:, None]
        return grads


@dataclass(frozen=True)
class LJ612:
    """phi0(x) = c (|x|^-12 - |x|^-6), optionally truncated at a cutoff.

    An untruncated tail has infinite range; a user cutoff makes the range
    finite and must be reported as an explicit approximation in run metadata.
    """

    c: float
    cutoff: float | None = None

    def __post_init__(self):
        if not (self.c > 0):
            raise ValueError("lj_6_12 requires c > 0")
        if self.cutoff is not None and not (self.cutoff > 0):
            raise ValueError("lj_6_12 cutoff must be positive")

    kind = "lj_6_12"

    @property
    def interaction_range(self) -> float:
        return INF if self.cutoff is None else self.cutoff

    @property
    def smooth(self) -> bool:
        # Truncation introduces a jump; the 1/r^12 core is unbounded anyway.
        return False

    def pair_values(self, sq_dists: np.ndarray) -> np.ndarray:
        sq = np.asarray(sq_dists, dtype=float)
        with np.errstate(divide="ignore"):
            inv6 = np.power(np.where(sq == 0.0, 1.0, sq), -3.0)
        vals = self.c * (inv6 ** 2 - inv6)
        vals = np.where(sq == 0.0, INF, vals)
        if self.cutoff is not None:
            vals = np.where(sq > self.cutoff ** 2, 0.0, vals)
        return vals


@dataclass(frozen=True)
class ZeroPotential:
    """The interaction-free case Phi = 0."""

    kind = "zero"

    @property
    def interaction_range(self) -> float:
        return 0.0

    @property
    def smooth(self) -> bool:
        return True

    def pair_values(self, sq_dists: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(sq_dists, dtype=float))

    def pair_gradients(self, diffs: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(diffs, dtype=float))


PairPotential = HardCore | SoftRepulsive | LennardJonesType | LJ612 | ZeroPotential


def _sum_values(vals: np.ndarray) -> float:
    if np.isinf(vals).any():
        return INF
    return float(vals.sum())


def phi_pair(pot: PairPotential, x1, x2) -> float:
    """Pair energy phi0(x1 - x2); errors on coincident points."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    sq = float(((x1 - x2) ** 2).sum())
    if sq == 0.0:
        raise ValueError("phi_pair is undefined for coincident points")
    return float(pot.pair_values(np.array([sq]))[0])


def energy(pot: PairPotential, xi) -> float:
    """Total pair energy of a finite configuration; energy of the empty set is 0."""
    pts = _points_of(xi)
    n = pts.shape[0]
    if n < 2:
        return 0.0
    diff = pts[:, None, :] - pts[None, :, :]
    sq = (diff ** 2).sum(axis=-1)
    iu = np.triu_indices(n, k=1)
    pair_sq = sq[iu]
    if (pair_sq == 0.0).any():
        raise ValueError("energy is undefined for configurations with coincident points")
    if isinstance(pot, ZeroPotential):
        return 0.0
    return _sum_values(pot.pair_values(pair_sq))


def local_energy(pot: PairPotential, x, gamma) -> float:
    """Interaction energy E({x}, gamma) of one added point with a configuration."""
    pts = _points_of(gamma)
    x = np.asarray(x, dtype=float)
    if pts.shape[0] == 0 or isinstance(pot, ZeroPotential):
        if pts.shape[0] > 0 and (( (pts - x) ** 2).sum(axis=1) == 0.0).any():
            raise ValueError("local_energy requires x not in gamma")
        return 0.0
    sq = ((pts - x) ** 2).sum(axis=1)
    if (sq == 0.0).any():
        raise ValueError("local_energy requires x not in gamma")
    return _sum_values(pot.pair_values(sq))


def interaction_energy(pot: PairPotential, xi, gamma) -> float:
    """Cross pair energy E(xi, gamma) between two disjoint configurations."""
    a = _points_of(xi)
    b = _points_of(gamma)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return 0.0
    diff = a[:, None, :] - b[None, :, :]
    sq = (diff ** 2).sum(axis=-1)
    if (sq == 0.0).any():
        raise ValueError("interaction_energy requires disjoint configurations")
    if isinstance(pot, ZeroPotential):
        return 0.0
    return _sum_values(pot.pair_values(sq.ravel()))


class CellIndex:
    """Mutable uniform-grid index over a window for finite-range potentials.

    Cell size is at least the interaction range, so all points within range
    of a query location lie in its 3^d neighborhood of cells. The index is
    owned by a single worker; it is rebuilt per configuration snapshot.
    """

    def __init__(self, window, cell_size: float):
        if not (cell_size > 0 and math.isfinite(cell_size)):
            raise ValueError("cell_size must be positive and finite")
        self.window = window
        self.n_cells = np.maximum(
            1, np.floor(window.sides / cell_size).astype(int)
        )
        self.cell_sides = window.sides / self.n_cells
        self.cells: dict[tuple, list[int]] = {}
        d = window.dimension
        self._neighbor_shifts = np.array(
            np.meshgrid(*([[-1, 0, 1]] * d), indexing="ij")
        ).reshape(d, -1).T

    def cell_of(self, x: np.ndarray) -> tuple:
        idx = np.floor((x - self.window.lower) / self.cell_sides).astype(int)
        idx = np.clip(idx, 0, self.n_cells - 1)
        return tuple(idx)

    def insert(self, index: int, x: np.ndarray) -> tuple:
        key = self.cell_of(x)
        self.cells.setdefault(key, []).append(index)
        return key

    def remove(self, index: int, key: tuple) -> None:
        bucket = self.cells[key]
        bucket.remove(index)
        if not bucket:
            del self.cells[key]

    def neighbors(self, x: np.ndarray) -> list[int]:
        """Indices stored in the 3^d cells around x."""
        base = np.asarray(self.cell_of(x))
        out: list[int] = []
        for shift in self._neighbor_shifts:
            key = tuple(base + shift)
            bucket = self.cells.get(key)
            if bucket:
                out.extend(bucket)
        return out

    def rebuild(self, points: np.ndarray) -> list[tuple]:
        self.cells.clear()
        return [self.insert(i, points[i]) for i in range(points.shape[0])]
