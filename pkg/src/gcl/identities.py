"""Monte Carlo verification harness: paired two-sided estimators with
standard errors for the structural identities of the cluster construction.

Every checker consumes an ensemble, evaluates both sides of one identity on
the same sample stream, and reports a z-score computed from the paired
differences. Verdicts compare |z| against a configurable sigma threshold
(default 4).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss
from scipy.stats import chi2

from .calculus import (
    CylinderFunction,
    Diffeomorphism,
    ProductTanh,
    SmoothBump,
    TanhPoly,
    VectorField,
)
from .clusters import ClusterLaw, FixedSize, PoissonSize, sample_marked_ensemble
from .configurations import Ball, GroundConfiguration, MarkedConfiguration, Window
from .potentials import INF, PairPotential, ZeroPotential
from .sampler import GibbsRunParams, ReferenceMeasure, _disjoint_regions

__all__ = [
    "IdentityReport",
    "IndicatorBox",
    "GNZFunctional",
    "SizeEquals",
    "FirstOffsetWithin",
    "describe_params",
    "params_digest",
    "paired_report",
    "two_sample_report",
    "check_gnz",
    "check_laplace_projection",
    "laplace_closed_form",
    "check_correlation_projection",
    "check_quasi_invariance",
    "check_ibp",
]


@dataclass(frozen=True)
class IdentityReport:
    """Two-sided Monte Carlo estimate of one identity."""

    identity: str
    lhs: float
    rhs: float
    lhs_se: float
    rhs_se: float
    z: float
    n: int
    verdict: bool
    params_digest: str
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "identity": self.identity,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "lhs_se": self.lhs_se,
            "rhs_se": self.rhs_se,
            "z": self.z,
            "n": self.n,
            "verdict": bool(self.verdict),
            "params_digest": self.params_digest,
            "extras": self.extras,
        }


def describe_params(obj):
    """JSON-able canonical description of parameter objects, for digests and
    run metadata."""
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (list, tuple)):
        return [describe_params(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): describe_params(v) for k, v in obj.items()}
    if isinstance(obj, Window):
        return {"type": "window", "lower": obj.lower.tolist(), "upper": obj.upper.tolist()}
    if isinstance(obj, Ball):
        return {"type": "ball", "center": obj.center.tolist(), "radius": obj.radius}
    if isinstance(obj, ReferenceMeasure):
        return {
            "type": "reference_measure",
            "intensity": obj.intensity,
            "window": describe_params(obj.window),
        }
    if isinstance(obj, ClusterLaw):
        return {
            "type": "cluster_law",
            "size": describe_params(obj.size_dist),
            "offset_std": obj.offset_std,
        }
    if isinstance(obj, Diffeomorphism):
        return {
            "type": "diffeomorphism",
            "amplitude": obj.amplitude.tolist(),
            "center": obj.center.tolist(),
            "radius": obj.radius,
        }
    if isinstance(obj, VectorField):
        return {
            "type": "vector_field",
            "amplitude": obj.amplitude.tolist(),
            "center": obj.center.tolist(),
            "radius": obj.radius,
        }
    if isinstance(obj, SmoothBump):
        return {
            "type": "bump",
            "center": obj.center.tolist(),
            "radius": obj.radius,
            "height": obj.height,
        }
    if isinstance(obj, TanhPoly):
        return {
            "type": "tanh_poly",
            "const": obj.const,
            "linear": obj.linear.tolist(),
            "quad": obj.quad.tolist(),
        }
    if isinstance(obj, ProductTanh):
        return {
            "type": "product_tanh",
            "slopes": obj.slopes.tolist(),
            "intercepts": obj.intercepts.tolist(),
        }
    if isinstance(obj, CylinderFunction):
        return {
            "type": "cylinder",
            "outer": describe_params(obj.outer),
            "bumps": [describe_params(b) for b in obj.bumps],
        }
    if isinstance(obj, IndicatorBox):
        return {"type": "indicator", "window": describe_params(obj.window)}
    if isinstance(obj, GNZFunctional):
        return {
            "type": "gnz_functional",
            "space": describe_params(obj.space),
            "cylinder": describe_params(obj.cylinder),
        }
    if isinstance(obj, (SizeEquals, FirstOffsetWithin)):
        return {"type": type(obj).__name__, **dataclasses.asdict(obj)}
    if dataclasses.is_dataclass(obj):
        out = {"type": getattr(obj, "kind", type(obj).__name__)}
        for f_ in dataclasses.fields(obj):
            out[f_.name] = describe_params(getattr(obj, f_.name))
        return out
    raise TypeError(f"cannot describe parameters of type {type(obj).__name__}")


def params_digest(params) -> str:
    canon = json.dumps(describe_params(params), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _z_of(mean: float, se: float) -> float:
    if se == 0.0:
        return 0.0 if mean == 0.0 else math.copysign(INF, mean)
    return mean / se


def paired_report(identity, lhs_vals, rhs_vals, tol_sigma, params, extras=None) -> IdentityReport:
    """Report for two estimators sharing one sample stream; the z-score uses
    the standard error of the per-sample differences."""
    lhs_vals = np.asarray(lhs_vals, dtype=float)
    rhs_vals = np.asarray(rhs_vals, dtype=float)
    n = lhs_vals.shape[0]
    diff = lhs_vals - rhs_vals
    sqrt_n = math.sqrt(n)
    se_d = float(diff.std(ddof=1)) / sqrt_n if n > 1 else 0.0
    z = _z_of(float(diff.mean()), se_d)
    return IdentityReport(
        identity=identity,
        lhs=float(lhs_vals.mean()),
        rhs=float(rhs_vals.mean()),
        lhs_se=float(lhs_vals.std(ddof=1)) / sqrt_n if n > 1 else 0.0,
        rhs_se=float(rhs_vals.std(ddof=1)) / sqrt_n if n > 1 else 0.0,
        z=z,
        n=n,
        verdict=bool(abs(z) <= tol_sigma),
        params_digest=params_digest(params),
        extras=extras or {},
    )


def two_sample_report(identity, lhs_vals, rhs_vals, tol_sigma, params, extras=None) -> IdentityReport:
    """Report for independent estimators; the z-score combines both SEs."""
    lhs_vals = np.asarray(lhs_vals, dtype=float)
    rhs_vals = np.asarray(rhs_vals, dtype=float)
    nl, nr = lhs_vals.shape[0], rhs_vals.shape[0]
    se_l = float(lhs_vals.std(ddof=1)) / math.sqrt(nl) if nl > 1 else 0.0
    se_r = float(rhs_vals.std(ddof=1)) / math.sqrt(nr) if nr > 1 else 0.0
    se = math.hypot(se_l, se_r)
    z = _z_of(float(lhs_vals.mean() - rhs_vals.mean()), se)
    return IdentityReport(
        identity=identity,
        lhs=float(lhs_vals.mean()),
        rhs=float(rhs_vals.mean()),
        lhs_se=se_l,
        rhs_se=se_r,
        z=z,
        n=min(nl, nr),
        verdict=bool(abs(z) <= tol_sigma),
        params_digest=params_digest(params),
        extras=extras or {},
    )


class IndicatorBox:
    """Indicator test function of a box region."""

    __slots__ = ("window",)

    def __init__(self, window: Window):
        self.window = window

    def __call__(self, x):
        return self.values(x)

    def values(self, x) -> np.ndarray:
        return np.asarray(self.window.contains(x), dtype=float)


class GNZFunctional:
    """H(x, gamma) = space(x) * cylinder(gamma); cylinder None means 1."""

    __slots__ = ("space", "cylinder")

    def __init__(self, space, cylinder: CylinderFunction | None = None):
        self.space = space
        self.cylinder = cylinder


class _FlatGround:
    """Concatenated view of a ground-configuration ensemble."""

    __slots__ = ("points", "sample", "n_samples", "window", "per_sample")

    def __init__(self, ensemble):
        if not ensemble:
            raise ValueError("ensemble must be nonempty")
        self.n_samples = len(ensemble)
        self.window = ensemble[0].window
        counts = np.array([len(c) for c in ensemble])
        if counts.sum() > 0:
            self.points = np.concatenate(
                [c.points for c in ensemble if len(c) > 0], axis=0
            )
        else:
            self.points = np.empty((0, self.window.dimension))
        self.sample = np.repeat(np.arange(self.n_samples), counts)
        self.per_sample = [c.points for c in ensemble]

    def sum_per_sample(self, values: np.ndarray) -> np.ndarray:
        return np.bincount(self.sample, weights=values, minlength=self.n_samples)


class _FlatMarked:
    """Concatenated view of a marked-configuration ensemble."""

    __slots__ = (
        "centers", "c_sample", "sizes", "offsets", "o_center", "o_sample",
        "n_samples", "window",
    )

    def __init__(self, marked_list):
        if not marked_list:
            raise ValueError("ensemble must be nonempty")
        self.n_samples = len(marked_list)
        self.window = marked_list[0].window
        d = self.window.dimension
        center_rows, sizes, c_sample, offset_rows = [], [], [], []
        for k, mc in enumerate(marked_list):
            for mp in mc.marked_points:
                center_rows.append(mp.center)
                sizes.append(mp.cluster.size)
                c_sample.append(k)
                if mp.cluster.size > 0:
                    offset_rows.append(mp.cluster.offsets)
        m = len(center_rows)
        self.centers = (
            np.asarray(center_rows) if m else np.empty((0, d))
        )
        self.sizes = np.asarray(sizes, dtype=int) if m else np.empty(0, dtype=int)
        self.c_sample = np.asarray(c_sample, dtype=int) if m else np.empty(0, dtype=int)
        self.offsets = (
            np.concatenate(offset_rows, axis=0) if offset_rows else np.empty((0, d))
        )
        self.o_center = np.repeat(np.arange(m), self.sizes) if m else np.empty(0, dtype=int)
        self.o_sample = self.c_sample[self.o_center] if m else np.empty(0, dtype=int)

    def projected(self) -> np.ndarray:
        return self.offsets + self.centers[self.o_center]

    def center_sum_per_sample(self, values: np.ndarray) -> np.ndarray:
        return np.bincount(self.c_sample, weights=values, minlength=self.n_samples)

    def offset_sum_per_sample(self, values: np.ndarray) -> np.ndarray:
        return np.bincount(self.o_sample, weights=values, minlength=self.n_samples)


def _cylinder_per_sample(F: CylinderFunction, points, sample_ids, n_samples) -> np.ndarray:
    """F evaluated per sample over a flattened point array."""
    t = np.zeros((n_samples, F.arity))
    for j, b in enumerate(F.bumps):
        if points.shape[0] > 0:
            t[:, j] = np.bincount(
                sample_ids, weights=b.values(points), minlength=n_samples
            )
    return F.outer.value(t)


def _local_energy_raw(pot: PairPotential, x: np.ndarray, pts: np.ndarray) -> float:
    if pts.shape[0] == 0 or isinstance(pot, ZeroPotential):
        return 0.0
    sq = ((pts - x) ** 2).sum(axis=1)
    vals = pot.pair_values(sq)
    if np.isinf(vals).any():
        return INF
    return float(vals.sum())


def check_gnz(
    ensemble,
    pot: PairPotential,
    theta: ReferenceMeasure,
    H: GNZFunctional,
    rng: np.random.Generator,
    tol_sigma: float = 4.0,
    n_inner: int = 1,
) -> IdentityReport:
    """Summation-vs-integration balance for the finite-volume Gibbs measure.

    LHS: mean over samples of sum_{x in gamma} H(x, gamma).
    RHS: mean of theta(window) * H(x, gamma + x) exp(-E({x}, gamma)) with x
    drawn uniformly (n_inner fresh draws per sample), paired by sample.
    """
    flat = _FlatGround(ensemble)
    n = flat.n_samples
    window = theta.window

    phi_vals = (
        H.space.values(flat.points) if flat.points.shape[0] else np.empty(0)
    )
    sum_phi = flat.sum_per_sample(phi_vals)
    if H.cylinder is None:
        g_vals = np.ones(n)
    else:
        g_vals = _cylinder_per_sample(H.cylinder, flat.points, flat.sample, n)
    lhs = g_vals * sum_phi

    total = theta.total
    xs = window.sample_uniform(n * n_inner, rng).reshape(n, n_inner, -1)
    if H.cylinder is not None:
        base_t = np.zeros((n, H.cylinder.arity))
        for j, b in enumerate(H.cylinder.bumps):
            if flat.points.shape[0]:
                base_t[:, j] = np.bincount(
                    flat.sample, weights=b.values(flat.points), minlength=n
                )
    rhs = np.empty(n)
    for i in range(n):
        pts_i = flat.per_sample[i]
        acc = 0.0
        for k in range(n_inner):
            x = xs[i, k]
            pv = float(H.space.values(x[None, :])[0])
            if pv == 0.0:
                continue
            le = _local_energy_raw(pot, x, pts_i)
            if le == INF:
                continue
            if H.cylinder is None:
                gv = 1.0
            else:
                t_aug = base_t[i] + np.array(
                    [float(b.values(x[None, :])[0]) for b in H.cylinder.bumps]
                )
                gv = float(H.cylinder.outer.value(t_aug[None, :])[0])
            acc += pv * gv * math.exp(-le)
        rhs[i] = total * acc / n_inner

    params = {
        "identity": "gnz",
        "potential": pot,
        "theta": theta,
        "H": H,
        "n_samples": n,
        "n_inner": n_inner,
        "tol_sigma": tol_sigma,
    }
    return paired_report("gnz", lhs, rhs, tol_sigma, params)


def laplace_closed_form(
    theta: ReferenceMeasure,
    law: ClusterLaw,
    f: SmoothBump,
    n_outer_nodes: int = 48,
    n_inner_nodes: int = 32,
) -> float:
    """Laplace functional of the interaction-free cluster process by
    Gauss-Legendre (centers over the window) and Gauss-Hermite (offsets)
    quadrature."""
    window = theta.window
    d = window.dimension

    gl_x, gl_w = leggauss(n_outer_nodes)
    axes, weights = [], []
    for a in range(d):
        lo, hi = window.lower[a], window.upper[a]
        axes.append(0.5 * (hi - lo) * gl_x + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * gl_w)
    mesh = np.meshgrid(*axes, indexing="ij")
    outer_pts = np.stack([m.ravel() for m in mesh], axis=-1)
    wmesh = np.meshgrid(*weights, indexing="ij")
    outer_w = np.prod(np.stack([m.ravel() for m in wmesh], axis=-1), axis=-1)

    gh_x, gh_w = hermgauss(n_inner_nodes)
    y_axes = [math.sqrt(2.0) * law.offset_std * gh_x] * d
    wy = [gh_w / math.sqrt(math.pi)] * d
    ymesh = np.meshgrid(*y_axes, indexing="ij")
    inner_pts = np.stack([m.ravel() for m in ymesh], axis=-1)
    wymesh = np.meshgrid(*wy, indexing="ij")
    inner_w = np.prod(np.stack([m.ravel() for m in wymesh], axis=-1), axis=-1)

    # w(x) = E_y[1 - exp(-f(x + y))] on the outer grid
    shifted = outer_pts[:, None, :] + inner_pts[None, :, :]
    fv = f.values(shifted.reshape(-1, d)).reshape(outer_pts.shape[0], -1)
    w_of_x = ((1.0 - np.exp(-fv)) * inner_w).sum(axis=1)

    if isinstance(law.size_dist, FixedSize):
        integrand = 1.0 - (1.0 - w_of_x) ** law.size_dist.n
    elif isinstance(law.size_dist, PoissonSize):
        integrand = 1.0 - np.exp(-law.size_dist.rate * w_of_x)
    else:
        raise TypeError("closed form requires a fixed or Poisson size distribution")
    integral = float((outer_w * integrand).sum())
    return math.exp(-theta.intensity * integral)


def check_laplace_projection(
    gibbs_params: GibbsRunParams,
    law: ClusterLaw,
    f: SmoothBump,
    n_outer: int,
    n_inner: int,
    rng: np.random.Generator,
    tol_sigma: float = 4.0,
) -> IdentityReport:
    """Laplace-functional equality between the projected pipeline and the
    per-center product formula, paired on one center ensemble.

    LHS: exp(-<f, projected configuration>) through lift and projection.
    RHS: product over centers of an inner Monte Carlo estimate of the
    cluster transform, n_inner fresh clusters per center, in log space.
    """
    params_n = replace(gibbs_params, n_samples=n_outer)
    _, marked = sample_marked_ensemble(params_n, law, rng)
    flat = _FlatMarked(marked)
    n = flat.n_samples
    d = flat.window.dimension
    s = law.offset_std

    proj = flat.projected()
    fsum = flat.offset_sum_per_sample(f.values(proj)) if proj.shape[0] else np.zeros(n)
    lhs = np.exp(-fsum)

    m_total = flat.centers.shape[0]
    log_j = np.zeros(m_total)
    chunk = max(1, 200_000 // max(1, n_inner))
    for lo in range(0, m_total, chunk):
        hi = min(m_total, lo + chunk)
        block = flat.centers[lo:hi]
        m = hi - lo
        if isinstance(law.size_dist, FixedSize):
            sizes = np.full(m * n_inner, law.size_dist.n, dtype=int)
        else:
            sizes = rng.poisson(law.size_dist.rate, m * n_inner)
        total_off = int(sizes.sum())
        group_of = np.repeat(np.arange(m * n_inner), sizes)
        ys = s * rng.standard_normal((total_off, d))
        xs = np.repeat(block, n_inner, axis=0)[group_of]
        fvals = f.values(ys + xs)
        gsum = np.bincount(group_of, weights=fvals, minlength=m * n_inner)
        j_est = np.exp(-gsum).reshape(m, n_inner).mean(axis=1)
        log_j[lo:hi] = np.log(j_est)
    rhs = np.exp(flat.center_sum_per_sample(log_j))

    extras = {}
    if isinstance(gibbs_params.potential, ZeroPotential):
        cf = laplace_closed_form(gibbs_params.theta, law, f)
        n_sqrt = math.sqrt(n)
        lhs_se = float(lhs.std(ddof=1)) / n_sqrt
        rhs_se = float(rhs.std(ddof=1)) / n_sqrt
        extras["closed_form"] = cf
        extras["z_lhs_anchor"] = _z_of(float(lhs.mean()) - cf, lhs_se)
        extras["z_rhs_anchor"] = _z_of(float(rhs.mean()) - cf, rhs_se)

    params = {
        "identity": "laplace_projection",
        "gibbs": gibbs_params,
        "law": law,
        "f": f,
        "n_outer": n_outer,
        "n_inner": n_inner,
        "tol_sigma": tol_sigma,
    }
    return paired_report("laplace_projection", lhs, rhs, tol_sigma, params, extras=extras)


@dataclass(frozen=True)
class SizeEquals:
    """Offset event {cluster size = n}."""

    n: int

    def probability(self, law: ClusterLaw, dimension: int) -> float:
        return law.size_pmf(self.n)

    def indicator(self, flat: _FlatMarked, law: ClusterLaw) -> np.ndarray:
        return (flat.sizes == self.n).astype(float)


@dataclass(frozen=True)
class FirstOffsetWithin:
    """Offset event {size >= 1 and |y_1| <= c}."""

    c: float

    def probability(self, law: ClusterLaw, dimension: int) -> float:
        if isinstance(law.size_dist, FixedSize):
            p_nonempty = 1.0 if law.size_dist.n >= 1 else 0.0
        else:
            p_nonempty = 1.0 - math.exp(-law.size_dist.rate)
        # |y_1|^2 / s^2 is chi-squared with `dimension` degrees of freedom
        tail = float(chi2.cdf(self.c ** 2 / law.offset_std ** 2, dimension))
        return p_nonempty * tail

    def indicator(self, flat: _FlatMarked, law: ClusterLaw) -> np.ndarray:
        out = np.zeros(flat.sizes.shape[0])
        if flat.offsets.shape[0] == 0:
            return out
        first_rows = np.searchsorted(flat.o_center, np.arange(flat.sizes.shape[0]))
        nonempty = flat.sizes >= 1
        idx = first_rows[nonempty]
        norms = np.sqrt((flat.offsets[idx] ** 2).sum(axis=1))
        out[nonempty] = (norms <= self.c).astype(float)
        return out


def check_correlation_projection(
    marked_list,
    b1,
    b2,
    a1,
    a2,
    law: ClusterLaw,
    tol_sigma: float = 4.0,
) -> IdentityReport:
    """Second-moment factorization of the marked process over disjoint center
    regions: counts of marked points in B x A factor through the center
    counts times the analytic mark probabilities.

    An event of None stands for the full offset space (probability 1), the
    exact reduction to the center second moment."""
    if not _disjoint_regions(b1, b2):
        raise ValueError("center regions must be disjoint")
    flat = _FlatMarked(marked_list)
    d = flat.window.dimension
    n = flat.n_samples

    ones = np.ones(flat.sizes.shape[0])
    in1 = np.asarray(b1.contains(flat.centers), dtype=float)
    in2 = np.asarray(b2.contains(flat.centers), dtype=float)
    e1 = ones if a1 is None else a1.indicator(flat, law)
    e2 = ones if a2 is None else a2.indicator(flat, law)
    n1 = flat.center_sum_per_sample(in1 * e1)
    n2 = flat.center_sum_per_sample(in2 * e2)
    lhs = n1 * n2

    eta1 = 1.0 if a1 is None else a1.probability(law, d)
    eta2 = 1.0 if a2 is None else a2.probability(law, d)
    c1 = flat.center_sum_per_sample(in1)
    c2 = flat.center_sum_per_sample(in2)
    rhs = eta1 * eta2 * c1 * c2

    params = {
        "identity": "correlation_projection",
        "b1": b1,
        "b2": b2,
        "a1": a1,
        "a2": a2,
        "law": law,
        "n_samples": n,
        "tol_sigma": tol_sigma,
    }
    extras = {"eta_a1": eta1, "eta_a2": eta2}
    return paired_report("correlation_projection", lhs, rhs, tol_sigma, params, extras=extras)


def _log_r_per_sample(flat: _FlatMarked, phi: Diffeomorphism, law: ClusterLaw) -> np.ndarray:
    """log R per sample over a flattened marked ensemble.

    Marks whose size has zero probability under the law contribute factor 1,
    matching the density convention where h vanishes.
    """
    proj = flat.projected()
    if proj.shape[0] == 0:
        return np.zeros(flat.n_samples)
    zero_pmf_center = np.array(
        [law.size_pmf(int(sz)) == 0.0 for sz in flat.sizes], dtype=bool
    )
    rows = (phi.t_of(proj) < 1.0) & ~zero_pmf_center[flat.o_center]
    if not rows.any():
        return np.zeros(flat.n_samples)
    u = proj[rows]
    w = phi.invert(u)
    ubar = w - flat.centers[flat.o_center[rows]]
    y = flat.offsets[rows]
    s2 = law.offset_std ** 2
    terms = ((y ** 2).sum(axis=1) - (ubar ** 2).sum(axis=1)) / (2.0 * s2)
    terms -= np.log(phi.jacobian_det(w))
    return np.bincount(flat.o_sample[rows], weights=terms, minlength=flat.n_samples)


def check_quasi_invariance(
    marked_list,
    phi: Diffeomorphism,
    F: CylinderFunction | None,
    law: ClusterLaw,
    tol_sigma: float = 4.0,
) -> IdentityReport:
    """Transformed-side vs density-side equality under the lifted action.

    LHS: F of the projection of the transformed marked configuration.
    RHS: F of the original projection times the Radon-Nikodym density R.
    F = None means the constant function 1, reducing to the normalization
    E[R] = 1.
    """
    flat = _FlatMarked(marked_list)
    n = flat.n_samples
    proj = flat.projected()

    log_r = _log_r_per_sample(flat, phi, law)
    r = np.exp(log_r)

    if F is None:
        lhs = np.ones(n)
        rhs = r
        name = "quasi_invariance_normalization"
    else:
        moved = proj.copy()
        if proj.shape[0]:
            inside = phi.t_of(proj) < 1.0
            if inside.any():
                moved[inside] = phi.apply(proj[inside])
        lhs = _cylinder_per_sample(F, moved, flat.o_sample, n)
        rhs = _cylinder_per_sample(F, proj, flat.o_sample, n) * r
        name = "quasi_invariance"

    params = {
        "identity": name,
        "diffeo": phi,
        "F": F,
        "law": law,
        "n_samples": n,
        "tol_sigma": tol_sigma,
    }
    extras = {"mean_R": float(r.mean())}
    return paired_report(name, lhs, rhs, tol_sigma, params, extras=extras)


def check_ibp(
    marked_list,
    v: VectorField,
    F: CylinderFunction | None,
    law: ClusterLaw,
    tol_sigma: float = 4.0,
) -> IdentityReport:
    """Integration by parts along the lifted vector field.

    LHS: mean of sum over projected points of grad F . v.
    RHS: minus the mean of F times the summed logarithmic derivative of the
    offset density along v-hat. F = None (constant 1) reduces to the
    zero-mean property of the logarithmic derivative.
    """
    flat = _FlatMarked(marked_list)
    n = flat.n_samples
    proj = flat.projected()

    bad = [int(sz) for sz in np.unique(flat.sizes) if law.size_pmf(int(sz)) == 0.0]
    if bad:
        raise ValueError(f"cluster sizes {bad} have probability zero under the law")

    if proj.shape[0]:
        score = law.offset_score(flat.offsets)
        beta_terms = (score * v.value(proj)).sum(axis=1) + v.divergence(proj)
        beta_sum = flat.offset_sum_per_sample(beta_terms)
    else:
        beta_sum = np.zeros(n)

    if F is None:
        lhs = np.zeros(n)
        rhs = -beta_sum
        name = "ibp_zero_mean"
    else:
        if proj.shape[0]:
            t = np.zeros((n, F.arity))
            for j, b in enumerate(F.bumps):
                t[:, j] = np.bincount(
                    flat.o_sample, weights=b.values(proj), minlength=n
                )
            part = F.outer.partials(t)
            grads = np.zeros_like(proj)
            for j, b in enumerate(F.bumps):
                grads += part[flat.o_sample, j][:, None] * b.gradients(proj)
            dot = (grads * v.value(proj)).sum(axis=1)
            lhs = flat.offset_sum_per_sample(dot)
            f_vals = F.outer.value(t)
        else:
            lhs = np.zeros(n)
            f_vals = np.full(n, F.outer.value(np.zeros((1, F.arity)))[0])
        rhs = -f_vals * beta_sum
        name = "ibp"

    params = {
        "identity": name,
        "vector_field": v,
        "F": F,
        "law": law,
        "n_samples": n,
        "tol_sigma": tol_sigma,
    }
    return paired_report(name, lhs, rhs, tol_sigma, params)
