"""Exact Poisson sampling, birth-death-move Metropolis-Hastings for the
finite-volume Gibbs measure, and correlation-function estimators.

The chain targets the unnormalized density e^{-E(gamma)} relative to the
Lebesgue-Poisson measure of theta restricted to the window (empty boundary
condition). Acceptance ratios are computed in log space so that infinite
energies give acceptance probability exactly 0.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .configurations import Ball, GroundConfiguration, Window
from .potentials import INF, CellIndex, LJ612, PairPotential, ZeroPotential, energy

__all__ = [
    "ReferenceMeasure",
    "ChainState",
    "GibbsRunParams",
    "sample_poisson",
    "initial_state",
    "bdm_step",
    "sample_gibbs",
    "estimate_kappa1",
    "estimate_kappa2",
]


@dataclass(frozen=True)
class ReferenceMeasure:
    """theta = intensity * Lebesgue, used clipped to the window or on all of X."""

    intensity: float
    window: Window

    def __post_init__(self):
        if not (self.intensity > 0 and math.isfinite(self.intensity)):
            raise ValueError("reference measure intensity must be positive and finite")

    @property
    def total(self) -> float:
        """theta of the whole window."""
        return self.intensity * self.window.volume

    def measure(self, region, clip: bool = True) -> float:
        """theta-measure of a box or ball region.

        clip=True restricts theta to the window (the sampler's setting);
        clip=False uses intensity * Lebesgue on all of X (translation
        invariant, as needed by droplet diagnostics).
        """
        if isinstance(region, Window):
            if not clip:
                return self.intensity * region.volume
            inter = region.intersect(self.window)
            return self.intensity * inter.volume if inter is not None else 0.0
        if isinstance(region, Ball):
            if not clip:
                return self.intensity * region.volume
            inside = (region.center - region.radius >= self.window.lower).all() and (
                region.center + region.radius <= self.window.upper
            ).all()
            if inside:
                return self.intensity * region.volume
            outside = (region.center + region.radius < self.window.lower).any() or (
                region.center - region.radius > self.window.upper
            ).any()
            if outside:
                return 0.0
            raise NotImplementedError(
                "clipped measure of a ball partially overlapping the window"
            )
        raise TypeError(f"unsupported region type {type(region).__name__}")


@dataclass(eq=False)
class ChainState:
    """One Markov chain state: configuration, cached energy, bookkeeping."""

    config: GroundConfiguration
    cached_energy: float
    step_counter: int
    rng_state: np.random.Generator


@dataclass(frozen=True)
class GibbsRunParams:
    """Inputs of one Gibbs sampling run."""

    potential: PairPotential
    theta: ReferenceMeasure
    n_samples: int
    seed: int
    burn_in: int = 100_000
    thinning: int = 100
    move_mix: tuple[float, float, float] = (0.35, 0.35, 0.30)
    move_scale: float | None = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.burn_in < 0 or self.thinning < 1:
            raise ValueError("burn_in must be >= 0 and thinning >= 1")
        mix = tuple(float(p) for p in self.move_mix)
        if len(mix) != 3 or any(p < 0 or p > 1 for p in mix):
            raise ValueError("move_mix must be three probabilities in [0, 1]")
        if abs(sum(mix) - 1.0) > 1e-9:
            raise ValueError("move_mix must sum to 1")
        object.__setattr__(self, "move_mix", mix)
        if self.move_scale is not None and not self.move_scale > 0:
            raise ValueError("move_scale must be positive")

    @property
    def resolved_move_scale(self) -> float:
        if self.move_scale is not None:
            return float(self.move_scale)
        return 0.1 * float(np.mean(self.theta.window.sides))


def sample_poisson(theta: ReferenceMeasure, rng: np.random.Generator) -> GroundConfiguration:
    """One exact draw from the Poisson process with intensity measure theta."""
    n = int(rng.poisson(theta.total))
    pts = theta.window.sample_uniform(n, rng)
    return GroundConfiguration(pts, theta.window)


def _log_ratio(num: float, den: float) -> float:
    if num == 0.0:
        return -INF
    if den == 0.0:
        return INF
    return math.log(num / den)


class _Chain:
    """Flat-array working state of the birth-death-move kernel."""

    __slots__ = (
        "pot", "window", "lower", "sides", "dim", "log_total",
        "p_birth", "p_bd_cut", "log_bd", "log_db", "move_scale", "zero_pot",
        "pts", "n", "energy", "rng", "cells", "cell_keys",
        "proposed", "accepted",
    )

    def __init__(self, params: GibbsRunParams, points: np.ndarray | None = None,
                 rng: np.random.Generator | None = None,
                 cached_energy: float | None = None):
        self.pot = params.potential
        w = params.theta.window
        self.window = w
        self.lower = w.lower
        self.sides = w.sides
        self.dim = w.dimension
        self.log_total = math.log(params.theta.total)
        p_b, p_d, _ = params.move_mix
        self.p_birth = p_b
        self.p_bd_cut = p_b + p_d
        self.log_bd = _log_ratio(p_d, p_b)
        self.log_db = _log_ratio(p_b, p_d)
        self.move_scale = params.resolved_move_scale
        self.zero_pot = isinstance(self.pot, ZeroPotential)

        cap = 64
        if points is not None:
            cap = max(cap, 2 * points.shape[0])
        self.pts = np.empty((cap, self.dim), dtype=float)
        self.n = 0
        if points is not None and points.shape[0] > 0:
            self.n = points.shape[0]
            self.pts[: self.n] = points
        if cached_energy is None:
            cached_energy = energy(self.pot, self.pts[: self.n])
        if cached_energy == INF:
            raise ValueError("chain cannot start from an infinite-energy configuration")
        self.energy = cached_energy
        self.rng = rng if rng is not None else np.random.Generator(np.random.PCG64(params.seed))

        self.cells = None
        self.cell_keys: list = []
        rng_range = self.pot.interaction_range
        if not self.zero_pot and 0.0 < rng_range < INF:
            cells_per_axis = np.floor(self.sides / rng_range)
            if (cells_per_axis >= 3).all() and params.theta.total >= 128:
                self.cells = CellIndex(w, rng_range)
                self.cell_keys = self.cells.rebuild(self.pts[: self.n])

        self.proposed = {"birth": 0, "death": 0, "move": 0}
        self.accepted = {"birth": 0, "death": 0, "move": 0}

    def _local(self, x: np.ndarray, exclude: int | None = None) -> float:
        if self.zero_pot or self.n == 0:
            return 0.0
        if self.cells is not None:
            cand = self.cells.neighbors(x)
            if exclude is not None:
                cand = [i for i in cand if i != exclude]
            if not cand:
                return 0.0
            sq = ((self.pts[cand] - x) ** 2).sum(axis=1)
        else:
            sq = ((self.pts[: self.n] - x) ** 2).sum(axis=1)
            if exclude is not None:
                sq[exclude] = INF  # all built-in potentials vanish at infinite range
        vals = self.pot.pair_values(sq)
        if np.isinf(vals).any():
            return INF
        return float(vals.sum())

    def _grow(self):
        new = np.empty((2 * self.pts.shape[0], self.dim), dtype=float)
        new[: self.n] = self.pts[: self.n]
        self.pts = new

    def _reflect(self, x: np.ndarray) -> np.ndarray:
        # Fold into the box with the even triangle-wave map (period 2L per axis),
        # which keeps the Gaussian proposal symmetric.
        y = np.mod(x - self.lower, 2.0 * self.sides)
        return self.lower + self.sides - np.abs(y - self.sides)

    def step(self) -> None:
        rng = self.rng
        kind = rng.random()
        if kind < self.p_birth:
            self.proposed["birth"] += 1
            x = self.lower + rng.random(self.dim) * self.sides
            le = self._local(x)
            log_acc = -le + self.log_total - math.log(self.n + 1) + self.log_bd
            if log_acc >= 0.0 or math.log(rng.random()) < log_acc:
                if self.n == self.pts.shape[0]:
                    self._grow()
                self.pts[self.n] = x
                if self.cells is not None:
                    self.cell_keys.append(self.cells.insert(self.n, x))
                self.n += 1
                self.energy += le
                self.accepted["birth"] += 1
        elif kind < self.p_bd_cut:
            if self.n == 0:
                return
            self.proposed["death"] += 1
            i = int(rng.integers(self.n))
            le = self._local(self.pts[i], exclude=i)
            log_acc = le - self.log_total + math.log(self.n) + self.log_db
            if log_acc >= 0.0 or math.log(rng.random()) < log_acc:
                last = self.n - 1
                if self.cells is not None:
                    self.cells.remove(i, self.cell_keys[i])
                    if i != last:
                        self.cells.remove(last, self.cell_keys[last])
                        self.cell_keys[i] = self.cells.insert(i, self.pts[last])
                    self.cell_keys.pop()
                if i != last:
                    self.pts[i] = self.pts[last]
                self.n = last
                self.energy -= le
                self.accepted["death"] += 1
        else:
            if self.n == 0:
                return
            self.proposed["move"] += 1
            i = int(rng.integers(self.n))
            prop = self._reflect(self.pts[i] + self.move_scale * rng.standard_normal(self.dim))
            le_old = self._local(self.pts[i], exclude=i)
            le_new = self._local(prop, exclude=i)
            log_acc = -(le_new - le_old)
            if log_acc >= 0.0 or math.log(rng.random()) < log_acc:
                if self.cells is not None:
                    new_key = self.cells.cell_of(prop)
                    if new_key != self.cell_keys[i]:
                        self.cells.remove(i, self.cell_keys[i])
                        self.cells.insert(i, prop)
                        self.cell_keys[i] = new_key
                self.pts[i] = prop
                self.energy += le_new - le_old
                self.accepted["move"] += 1

    def run(self, n_steps: int) -> None:
        for _ in range(n_steps):
            self.step()

    def current_points(self) -> np.ndarray:
        return self.pts[: self.n].copy()

    def acceptance_rates(self) -> dict:
        return {
            k: (self.accepted[k] / self.proposed[k] if self.proposed[k] else 0.0)
            for k in self.proposed
        }


def initial_state(params: GibbsRunParams) -> ChainState:
    """Empty starting state (always feasible, including hard cores)."""
    cfg = GroundConfiguration(
        np.empty((0, params.theta.window.dimension)), params.theta.window
    )
    rng = np.random.Generator(np.random.PCG64(params.seed))
    return ChainState(config=cfg, cached_energy=0.0, step_counter=0, rng_state=rng)


def bdm_step(state: ChainState, params: GibbsRunParams) -> ChainState:
    """One birth-death-move proposal; returns the next state, input unchanged."""
    rng = copy.deepcopy(state.rng_state)
    chain = _Chain(
        params,
        points=state.config.points.copy(),
        rng=rng,
        cached_energy=state.cached_energy,
    )
    chain.step()
    cfg = GroundConfiguration(chain.current_points(), params.theta.window)
    return ChainState(
        config=cfg,
        cached_energy=chain.energy,
        step_counter=state.step_counter + 1,
        rng_state=chain.rng,
    )


def sample_gibbs(params: GibbsRunParams, return_stats: bool = False):
    """Run the chain from empty; discard burn-in, keep every thinning-th state."""
    chain = _Chain(params)
    chain.run(params.burn_in)
    ensemble = []
    counts = np.empty(params.n_samples, dtype=int)
    for k in range(params.n_samples):
        chain.run(params.thinning)
        ensemble.append(GroundConfiguration(chain.current_points(), params.theta.window))
        counts[k] = chain.n
    if not return_stats:
        return ensemble
    notices = []
    if isinstance(params.potential, LJ612) and params.potential.cutoff is not None:
        notices.append(
            f"6-12 interaction truncated at cutoff {params.potential.cutoff}"
        )
    if chain.cells is not None:
        notices.append("cell-list neighbor search in use")
    stats = {
        "acceptance_rates": chain.acceptance_rates(),
        "proposals": dict(chain.proposed),
        "mean_count": float(counts.mean()),
        "count_trace": counts.tolist(),
        "notices": notices,
    }
    return ensemble, stats


def _bin_counts(ensemble, region) -> np.ndarray:
    out = np.empty(len(ensemble), dtype=float)
    for k, cfg in enumerate(ensemble):
        if len(cfg) == 0:
            out[k] = 0.0
        else:
            out[k] = np.count_nonzero(region.contains(cfg.points))
    return out


def estimate_kappa1(ensemble, bins, theta: ReferenceMeasure):
    """First correlation function averaged over each bin, with standard errors.

    Returns (values, standard_errors) as arrays over bins; for the Poisson
    process the values are 1 within noise.
    """
    if not ensemble:
        raise ValueError("ensemble must be nonempty")
    n = len(ensemble)
    values = np.empty(len(bins))
    ses = np.empty(len(bins))
    for j, region in enumerate(bins):
        tb = theta.measure(region)
        if tb == 0.0:
            raise ValueError("bin with zero theta-measure")
        counts = _bin_counts(ensemble, region)
        values[j] = counts.mean() / tb
        ses[j] = counts.std(ddof=1) / math.sqrt(n) / tb if n > 1 else 0.0
    return values, ses


def _disjoint_regions(b1, b2) -> bool:
    if isinstance(b1, Window) and isinstance(b2, Window):
        return b1.intersect(b2) is None
    if isinstance(b1, Ball) and isinstance(b2, Ball):
        gap = math.sqrt(((b1.center - b2.center) ** 2).sum())
        return gap > b1.radius + b2.radius
    raise TypeError("disjointness test supports window pairs and ball pairs")


def estimate_kappa2(ensemble, b1, b2, theta: ReferenceMeasure):
    """Second correlation function averaged over disjoint regions b1 x b2.

    Uses the ordered-tuple normalization, under which the Poisson value is 2.
    Returns (value, standard_error).
    """
    if not ensemble:
        raise ValueError("ensemble must be nonempty")
    if not _disjoint_regions(b1, b2):
        raise ValueError("estimate_kappa2 requires disjoint regions")
    t1 = theta.measure(b1)
    t2 = theta.measure(b2)
    if t1 == 0.0 or t2 == 0.0:
        raise ValueError("regions must have positive theta-measure")
    prod = _bin_counts(ensemble, b1) * _bin_counts(ensemble, b2)
    n = len(ensemble)
    value = 2.0 * prod.mean() / (t1 * t2)
    se = 2.0 * prod.std(ddof=1) / math.sqrt(n) / (t1 * t2) if n > 1 else 0.0
    return value, se
