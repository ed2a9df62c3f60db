"""Compactly supported bump diffeomorphisms and vector fields on X, their
lifts to marked configurations, Radon-Nikodym densities, logarithmic
derivatives, and cylinder functions with analytic gradients.

All displacement fields use the single-bump profile
    beta(t) = exp(1 - 1/(1 - t)) for t < 1, 0 otherwise,
with t = |x - c|^2 / r^2, so every derived quantity (Jacobian, divergence,
gradient) is available in closed form. sup |beta'| = 4/e, attained at
t = 1/2; the constructor of Diffeomorphism enforces the contraction bound
|a| * sup|beta'| * (2/r) <= 0.9 which guarantees bijectivity and global
Newton convergence of the inverse.
"""

from __future__ import annotations

import math

import numpy as np

from .configurations import (
    ClusterVector,
    GroundConfiguration,
    MarkedConfiguration,
    MarkedPoint,
    as_point,
)
from .clusters import ClusterLaw

__all__ = [
    "SUP_ABS_BUMP_DERIV",
    "bump_profile",
    "bump_profile_deriv",
    "Diffeomorphism",
    "VectorField",
    "SmoothBump",
    "TanhPoly",
    "ProductTanh",
    "CylinderFunction",
    "apply_diffeo",
    "jacobian_det",
    "invert_diffeo",
    "hat_phi",
    "rho_phi",
    "log_rho_phi",
    "rnd_density_R",
    "beta_eta",
    "beta_v",
    "eval_cylinder",
    "grad_cylinder",
]

SUP_ABS_BUMP_DERIV = 4.0 / math.e

# Below 1 - t = 1e-12 both beta and beta' underflow to exactly 0; cutting
# there avoids 0/0 in the derivative.
_EDGE = 1.0 - 1e-12


def bump_profile(t) -> np.ndarray:
    """beta(t) = exp(1 - 1/(1 - t)) for t < 1, else 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = t < _EDGE
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti))
    return out


def bump_profile_deriv(t) -> np.ndarray:
    """beta'(t) = -beta(t) / (1 - t)^2 for t < 1, else 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = t < _EDGE
    ti = t[inside]
    out[inside] = -np.exp(1.0 - 1.0 / (1.0 - ti)) / (1.0 - ti) ** 2
    return out


def _bump_t(x: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    return ((x - center) ** 2).sum(axis=-1) / radius ** 2


class _BumpField:
    """Shared geometry of displacement fields x -> a * beta(|x-c|^2/r^2)."""

    __slots__ = ("amplitude", "center", "radius")

    def __init__(self, amplitude, center, radius):
        self.center = as_point(center)
        self.amplitude = as_point(amplitude, dimension=self.center.shape[0])
        radius = float(radius)
        if not (radius > 0 and math.isfinite(radius)):
            raise ValueError("bump radius must be positive and finite")
        self.radius = radius

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    def t_of(self, x) -> np.ndarray:
        return _bump_t(np.asarray(x, dtype=float), self.center, self.radius)

    def displacement(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        b = bump_profile(self.t_of(x))
        return self.amplitude * b[..., None]

    def _profile_gradient(self, x) -> np.ndarray:
        """Gradient of beta(t(x)): beta'(t) * 2 (x - c) / r^2."""
        x = np.asarray(x, dtype=float)
        db = bump_profile_deriv(self.t_of(x))
        return db[..., None] * 2.0 * (x - self.center) / self.radius ** 2


class Diffeomorphism(_BumpField):
    """phi(x) = x + a * beta(|x - c|^2 / r^2): a compactly supported bump map."""

    __slots__ = ()

    def __init__(self, amplitude, center, radius):
        super().__init__(amplitude, center, radius)
        a_norm = float(np.sqrt((self.amplitude ** 2).sum()))
        contraction = a_norm * SUP_ABS_BUMP_DERIV * 2.0 / self.radius
        if contraction > 0.9:
            raise ValueError(
                f"displacement is not a certified contraction: "
                f"|a| sup|beta'| (2/r) = {contraction:.4f} > 0.9"
            )

    def apply(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) + self.displacement(x)

    def jacobian(self, x) -> np.ndarray:
        """Jacobian matrix I + a g^T at a single point."""
        x = np.asarray(x, dtype=float)
        g = self._profile_gradient(x)
        return np.eye(self.dimension) + np.outer(self.amplitude, g)

    def jacobian_det(self, x) -> np.ndarray:
        """det(I + a g^T) = 1 + g . a; positive under the contraction bound."""
        g = self._profile_gradient(x)
        return 1.0 + g @ self.amplitude

    def invert(self, u) -> np.ndarray:
        """Solve phi(w) = u by damped Newton (rank-one Jacobian inverse).

        Converges for every parameter set accepted by the constructor;
        failure to reach |phi(w) - u| < 1e-12 raises.
        """
        u = np.asarray(u, dtype=float)
        single = u.ndim == 1
        u2 = np.atleast_2d(u)
        # Fixed-point seed w = u - a beta(t(u))
        w = u2 - self.displacement(u2)
        res_vec = self.apply(w) - u2
        res = np.sqrt((res_vec ** 2).sum(axis=1))
        for _ in range(200):
            if (res < 1e-12).all():
                break
            g = self._profile_gradient(w)
            ga = g @ self.amplitude
            gr = (g * res_vec).sum(axis=1)
            # (I + a g^T)^{-1} r = r - a (g . r) / (1 + g . a)
            step = res_vec - self.amplitude * (gr / (1.0 + ga))[:, None]
            w_new = w - step
            new_vec = self.apply(w_new) - u2
            new_res = np.sqrt((new_vec ** 2).sum(axis=1))
            worse = new_res >= res
            if worse.any():
                # Fall back to the contraction iteration on stubborn rows.
                w_new[worse] = u2[worse] - self.displacement(w[worse])
                new_vec[worse] = self.apply(w_new[worse]) - u2[worse]
                new_res[worse] = np.sqrt((new_vec[worse] ** 2).sum(axis=1))
            w, res_vec, res = w_new, new_vec, new_res
        if not (res < 1e-12).all():
            raise RuntimeError("diffeomorphism inverse did not converge")
        return w[0] if single else w


def apply_diffeo(phi: Diffeomorphism, x) -> np.ndarray:
    return phi.apply(x)


def jacobian_det(phi: Diffeomorphism, x):
    return phi.jacobian_det(x)


def invert_diffeo(phi: Diffeomorphism, x) -> np.ndarray:
    return phi.invert(x)


class VectorField(_BumpField):
    """v(x) = a * beta(|x - c|^2 / r^2), with analytic divergence."""

    __slots__ = ()

    def value(self, x) -> np.ndarray:
        return self.displacement(x)

    def divergence(self, x) -> np.ndarray:
        g = self._profile_gradient(x)
        return g @ self.amplitude


class SmoothBump:
    """Scalar test function height * beta(|x - c|^2 / r^2)."""

    __slots__ = ("center", "radius", "height")

    def __init__(self, center, radius, height=1.0):
        self.center = as_point(center)
        radius = float(radius)
        if not (radius > 0 and math.isfinite(radius)):
            raise ValueError("bump radius must be positive and finite")
        self.radius = radius
        self.height = float(height)

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    def __call__(self, x) -> np.ndarray:
        return self.values(x)

    def values(self, x) -> np.ndarray:
        t = _bump_t(np.asarray(x, dtype=float), self.center, self.radius)
        return self.height * bump_profile(t)

    def gradients(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = _bump_t(x, self.center, self.radius)
        db = bump_profile_deriv(t)
        return self.height * db[..., None] * 2.0 * (x - self.center) / self.radius ** 2


class TanhPoly:
    """Outer function f(t) = tanh(c0 + sum_i c_i t_i + sum_i q_i t_i^2)."""

    __slots__ = ("const", "linear", "quad")

    def __init__(self, const, linear, quad=None):
        self.const = float(const)
        self.linear = np.atleast_1d(np.asarray(linear, dtype=float)).copy()
        if quad is None:
            quad = np.zeros_like(self.linear)
        self.quad = np.atleast_1d(np.asarray(quad, dtype=float)).copy()
        if self.linear.shape != self.quad.shape:
            raise ValueError("linear and quad coefficient vectors must match")
        self.linear.flags.writeable = False
        self.quad.flags.writeable = False

    @property
    def arity(self) -> int:
        return self.linear.shape[0]

    def value(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=float))
        w = self.const + t @ self.linear + (t ** 2) @ self.quad
        return np.tanh(w)

    def partials(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=float))
        w = self.const + t @ self.linear + (t ** 2) @ self.quad
        sech2 = 1.0 / np.cosh(w) ** 2
        return sech2[:, None] * (self.linear + 2.0 * self.quad * t)


class ProductTanh:
    """Outer function f(t) = prod_i tanh(a_i t_i + b_i)."""

    __slots__ = ("slopes", "intercepts")

    def __init__(self, slopes, intercepts):
        self.slopes = np.atleast_1d(np.asarray(slopes, dtype=float)).copy()
        self.intercepts = np.atleast_1d(np.asarray(intercepts, dtype=float)).copy()
        if self.slopes.shape != self.intercepts.shape:
            raise ValueError("slopes and intercepts must have equal length")
        self.slopes.flags.writeable = False
        self.intercepts.flags.writeable = False

    @property
    def arity(self) -> int:
        return self.slopes.shape[0]

    def value(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=float))
        return np.prod(np.tanh(self.slopes * t + self.intercepts), axis=1)

    def partials(self, t: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=float))
        th = np.tanh(self.slopes * t + self.intercepts)
        out = np.empty_like(th)
        for j in range(self.arity):
            others = np.prod(np.delete(th, j, axis=1), axis=1)
            out[:, j] = self.slopes[j] * (1.0 - th[:, j] ** 2) * others
        return out


class CylinderFunction:
    """F(gamma) = f(<phi_1, gamma>, ..., <phi_k, gamma>) with bump inner
    functions and a bounded outer function with analytic partials."""

    __slots__ = ("outer", "bumps")

    def __init__(self, outer, bumps):
        bumps = tuple(bumps)
        if len(bumps) < 1:
            raise ValueError("a cylinder function needs at least one inner bump")
        if outer.arity != len(bumps):
            raise ValueError("outer arity must equal the number of inner bumps")
        self.outer = outer
        self.bumps = bumps

    @property
    def arity(self) -> int:
        return len(self.bumps)

    def inner_sums(self, points: np.ndarray) -> np.ndarray:
        """(k,) vector of <phi_j, gamma> for the points of one configuration."""
        if points.shape[0] == 0:
            return np.zeros(self.arity)
        return np.array([float(b.values(points).sum()) for b in self.bumps])

    def value_at_points(self, points: np.ndarray) -> float:
        return float(self.outer.value(self.inner_sums(points)[None, :])[0])

    def point_gradients(self, points: np.ndarray) -> np.ndarray:
        """(n, d) gradient of F in each point of the configuration."""
        if points.shape[0] == 0:
            return np.zeros_like(points)
        part = self.outer.partials(self.inner_sums(points)[None, :])[0]
        grads = np.zeros_like(points)
        for j, b in enumerate(self.bumps):
            grads += part[j] * b.gradients(points)
        return grads


def eval_cylinder(F: CylinderFunction, gamma) -> float:
    """F evaluated on a configuration (or raw point array)."""
    pts = gamma.points if isinstance(gamma, GroundConfiguration) else np.atleast_2d(gamma)
    return F.value_at_points(pts)


def grad_cylinder(F: CylinderFunction, gamma):
    """Sparse gradient [(point index, gradient vector), ...]; only points in
    the union of the inner supports appear."""
    pts = gamma.points if isinstance(gamma, GroundConfiguration) else np.atleast_2d(gamma)
    if pts.shape[0] == 0:
        return []
    grads = F.point_gradients(pts)
    support = np.zeros(pts.shape[0], dtype=bool)
    for b in F.bumps:
        support |= _bump_t(pts, b.center, b.radius) < 1.0
    return [(int(i), grads[i]) for i in np.nonzero(support)[0]]


def hat_phi(phi: Diffeomorphism, marked: MarkedConfiguration) -> MarkedConfiguration:
    """Lifted action: centers fixed, each offset y -> phi(y + x) - x.

    Offsets whose projected point lies outside supp phi are reused verbatim,
    so the map is exactly the identity there.
    """
    new_points = []
    for mp in marked.marked_points:
        if mp.cluster.size == 0:
            new_points.append(mp)
            continue
        u = mp.projected()
        affected = phi.t_of(u) < 1.0
        if not affected.any():
            new_points.append(mp)
            continue
        moved = mp.cluster.offsets.copy()
        moved[affected] = phi.apply(u[affected]) - mp.center
        new_points.append(MarkedPoint(mp.center, ClusterVector(moved)))
    return MarkedConfiguration(new_points, marked.window)


def log_rho_phi(phi: Diffeomorphism, z: MarkedPoint, law: ClusterLaw) -> float:
    """log of the per-mark Radon-Nikodym factor.

    Change of variables for the image measure of eta under the shifted map:
    each offset whose projected point u = y + x meets supp phi contributes
    log g(w - x) - log g(y) - log J_phi(w) with w = phi^{-1}(u); offsets
    outside the support contribute 0. Returns 0 (rho = 1) when h vanishes.
    """
    if law.size_pmf(z.cluster.size) == 0.0:
        return 0.0
    if z.cluster.size == 0:
        return 0.0
    u = z.projected()
    affected = phi.t_of(u) < 1.0
    if not affected.any():
        return 0.0
    w = phi.invert(u[affected])
    ubar = w - z.center
    y = z.cluster.offsets[affected]
    s2 = law.offset_std ** 2
    log_gauss = ((y ** 2).sum(axis=1) - (ubar ** 2).sum(axis=1)) / (2.0 * s2)
    log_det = np.log(phi.jacobian_det(w))
    return float((log_gauss - log_det).sum())


def rho_phi(phi: Diffeomorphism, z: MarkedPoint, law: ClusterLaw) -> float:
    """Radon-Nikodym density of the lifted action at one marked point."""
    return math.exp(log_rho_phi(phi, z, law))


def rnd_density_R(phi: Diffeomorphism, marked: MarkedConfiguration, law: ClusterLaw) -> float:
    """R(gamma-hat) = product over marked points of rho_phi, accumulated in
    log space; only finitely many factors differ from 1."""
    log_total = sum(log_rho_phi(phi, mp, law) for mp in marked.marked_points)
    return math.exp(log_total)


def beta_eta(law: ClusterLaw, ybar: ClusterVector) -> np.ndarray:
    """Logarithmic derivative of h at the cluster: component i is -y_i / s^2."""
    if law.size_pmf(ybar.size) == 0.0:
        raise ValueError("cluster size has probability zero under the law")
    return law.offset_score(ybar.offsets)


def beta_v(law: ClusterLaw, v: VectorField, x, ybar: ClusterVector) -> float:
    """Logarithmic derivative of eta along the lifted field v-hat at (x, ybar):
    sum_i beta_eta(ybar)_i . v(y_i + x) + (div v)(y_i + x)."""
    score = beta_eta(law, ybar)
    if ybar.size == 0:
        return 0.0
    u = ybar.offsets + as_point(x)
    vals = v.value(u)
    div = v.divergence(u)
    return float((score * vals).sum() + div.sum())
