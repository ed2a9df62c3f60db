"""Run configuration: a single JSON document describing window, potential,
reference intensity, cluster law, sampler settings, verification tasks,
dynamics, and diagnostics.

Errors carry the JSON path of the offending entry ($.block.key) or, for
syntax errors, the line and column reported by the parser.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .calculus import (
    CylinderFunction,
    Diffeomorphism,
    ProductTanh,
    SmoothBump,
    TanhPoly,
    VectorField,
)
from .clusters import ClusterLaw, FixedSize, PoissonSize
from .configurations import Ball, Window
from .dynamics import DynamicsParams
from .identities import FirstOffsetWithin, GNZFunctional, IndicatorBox, SizeEquals
from .potentials import (
    HardCore,
    LennardJonesType,
    LJ612,
    PairPotential,
    SoftRepulsive,
    ZeroPotential,
)
from .sampler import GibbsRunParams, ReferenceMeasure

__all__ = ["ConfigError", "RunConfig", "VerifyTask", "load_config"]


class ConfigError(Exception):
    """Invalid run configuration; the message points at the offending entry."""


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _as_dict(obj, path) -> dict:
    if not isinstance(obj, dict):
        _fail(path, f"expected an object, got {type(obj).__name__}")
    return obj


def _get(obj: dict, key: str, path: str, required=True, default=None):
    if key not in obj:
        if required:
            _fail(path, f"missing required key '{key}'")
        return default
    return obj[key]


def _number(obj, key, path, required=True, default=None):
    v = _get(obj, key, path, required, default)
    if v is None and not required:
        return default
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(f"{path}.{key}", "expected a number")
    if not math.isfinite(v):
        _fail(f"{path}.{key}", "must be finite")
    return float(v)


def _integer(obj, key, path, required=True, default=None):
    v = _get(obj, key, path, required, default)
    if v is None and not required:
        return default
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(f"{path}.{key}", "expected an integer")
    return int(v)


def _vector(obj, key, path, dimension, required=True, default=None):
    v = _get(obj, key, path, required, default)
    if v is None and not required:
        return default
    if not isinstance(v, list) or len(v) != dimension:
        _fail(f"{path}.{key}", f"expected a list of {dimension} numbers")
    if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
        _fail(f"{path}.{key}", "expected numeric entries")
    return np.asarray(v, dtype=float)


def _wrap(path: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ValueError as e:
        _fail(path, str(e))


def _parse_window(block, path, dimension) -> Window:
    block = _as_dict(block, path)
    lower = _vector(block, "lower", path, dimension)
    upper = _vector(block, "upper", path, dimension)
    return _wrap(path, Window, lower, upper)


def _parse_region(block, path, dimension):
    block = _as_dict(block, path)
    if "radius" in block:
        center = _vector(block, "center", path, dimension)
        radius = _number(block, "radius", path)
        return _wrap(path, Ball, center, radius)
    return _parse_window(block, path, dimension)


def _parse_potential(block, path, dimension) -> PairPotential:
    block = _as_dict(block, path)
    kind = _get(block, "kind", path)
    if kind == "zero":
        return ZeroPotential()
    if kind == "hard_core":
        return _wrap(path, HardCore, _number(block, "r0", path))
    if kind == "soft_repulsive":
        return _wrap(
            path, SoftRepulsive, _number(block, "amplitude", path), _number(block, "radius", path)
        )
    if kind == "lennard_jones_type":
        return _wrap(
            path,
            LennardJonesType,
            _number(block, "c", path),
            _number(block, "r1", path),
            _number(block, "r2", path),
            _number(block, "alpha", path),
            dimension=dimension,
        )
    if kind == "lj_6_12":
        cutoff = _number(block, "cutoff", path, required=False)
        return _wrap(path, LJ612, _number(block, "c", path), cutoff=cutoff)
    _fail(f"{path}.kind", f"unknown potential kind '{kind}'")


def _parse_law(block, path, dimension) -> ClusterLaw:
    block = _as_dict(block, path)
    sizes = _as_dict(_get(block, "sizes", path), f"{path}.sizes")
    kind = _get(sizes, "kind", f"{path}.sizes")
    if kind == "fixed":
        dist = _wrap(f"{path}.sizes", FixedSize, _integer(sizes, "n", f"{path}.sizes"))
    elif kind == "poisson":
        dist = _wrap(f"{path}.sizes", PoissonSize, _number(sizes, "rate", f"{path}.sizes"))
    else:
        _fail(f"{path}.sizes.kind", f"unknown size distribution '{kind}'")
    return _wrap(path, ClusterLaw, dist, _number(block, "offset_std", path))


def _parse_bump(block, path, dimension) -> SmoothBump:
    block = _as_dict(block, path)
    return _wrap(
        path,
        SmoothBump,
        _vector(block, "center", path, dimension),
        _number(block, "radius", path),
        _number(block, "height", path, required=False, default=1.0),
    )


def _parse_outer(block, path):
    block = _as_dict(block, path)
    kind = _get(block, "kind", path)
    if kind == "tanh_poly":
        linear = _get(block, "linear", path)
        if not isinstance(linear, list):
            _fail(f"{path}.linear", "expected a list of numbers")
        quad = _get(block, "quad", path, required=False)
        return _wrap(
            path,
            TanhPoly,
            _number(block, "const", path, required=False, default=0.0),
            np.asarray(linear, dtype=float),
            None if quad is None else np.asarray(quad, dtype=float),
        )
    if kind == "product_tanh":
        slopes = _get(block, "slopes", path)
        intercepts = _get(block, "intercepts", path)
        if not isinstance(slopes, list) or not isinstance(intercepts, list):
            _fail(path, "expected 'slopes' and 'intercepts' lists")
        return _wrap(
            path,
            ProductTanh,
            np.asarray(slopes, dtype=float),
            np.asarray(intercepts, dtype=float),
        )
    _fail(f"{path}.kind", f"unknown outer function kind '{kind}'")


def _parse_cylinder(block, path, dimension) -> CylinderFunction:
    block = _as_dict(block, path)
    outer = _parse_outer(_get(block, "outer", path), f"{path}.outer")
    bumps_raw = _get(block, "bumps", path)
    if not isinstance(bumps_raw, list) or not bumps_raw:
        _fail(f"{path}.bumps", "expected a nonempty list of bumps")
    bumps = [
        _parse_bump(b, f"{path}.bumps[{i}]", dimension) for i, b in enumerate(bumps_raw)
    ]
    return _wrap(path, CylinderFunction, outer, tuple(bumps))


def _parse_field_block(block, path, dimension, cls):
    block = _as_dict(block, path)
    return _wrap(
        path,
        cls,
        _vector(block, "amplitude", path, dimension),
        _vector(block, "center", path, dimension),
        _number(block, "radius", path),
    )


def _parse_event(block, path):
    block = _as_dict(block, path)
    kind = _get(block, "kind", path)
    if kind == "size_equals":
        return SizeEquals(_integer(block, "n", path))
    if kind == "first_offset_within":
        return FirstOffsetWithin(_number(block, "c", path))
    _fail(f"{path}.kind", f"unknown offset event '{kind}'")


_TASK_KINDS = ("gnz", "laplace", "correlation", "quasi_invariance", "ibp")


@dataclass(frozen=True)
class VerifyTask:
    identity: str
    objects: dict = field(default_factory=dict)


def _parse_task(block, path, dimension) -> VerifyTask:
    block = _as_dict(block, path)
    identity = _get(block, "identity", path)
    if identity not in _TASK_KINDS:
        _fail(f"{path}.identity", f"unknown identity '{identity}', expected one of {_TASK_KINDS}")
    objs: dict = {}
    if identity == "gnz":
        h = _as_dict(_get(block, "H", path), f"{path}.H")
        space_block = _as_dict(_get(h, "space", f"{path}.H"), f"{path}.H.space")
        if "radius" in space_block:
            space = _parse_bump(space_block, f"{path}.H.space", dimension)
        else:
            space = IndicatorBox(_parse_window(space_block, f"{path}.H.space", dimension))
        cyl = _get(h, "cylinder", f"{path}.H", required=False)
        cylinder = None if cyl is None else _parse_cylinder(cyl, f"{path}.H.cylinder", dimension)
        objs["H"] = GNZFunctional(space, cylinder)
        objs["n_inner"] = _integer(block, "n_inner", path, required=False, default=1)
    elif identity == "laplace":
        objs["f"] = _parse_bump(_get(block, "f", path), f"{path}.f", dimension)
        objs["n_outer"] = _integer(block, "n_outer", path, required=False, default=2000)
        objs["n_inner"] = _integer(block, "n_inner", path, required=False, default=32)
    elif identity == "correlation":
        objs["b1"] = _parse_region(_get(block, "b1", path), f"{path}.b1", dimension)
        objs["b2"] = _parse_region(_get(block, "b2", path), f"{path}.b2", dimension)
        objs["a1"] = _parse_event(_get(block, "a1", path), f"{path}.a1")
        objs["a2"] = _parse_event(_get(block, "a2", path), f"{path}.a2")
    elif identity == "quasi_invariance":
        objs["phi"] = _parse_field_block(
            _get(block, "diffeomorphism", path), f"{path}.diffeomorphism", dimension, Diffeomorphism
        )
        fb = _get(block, "F", path, required=False)
        objs["F"] = None if fb is None else _parse_cylinder(fb, f"{path}.F", dimension)
    elif identity == "ibp":
        objs["v"] = _parse_field_block(
            _get(block, "vector_field", path), f"{path}.vector_field", dimension, VectorField
        )
        fb = _get(block, "F", path, required=False)
        objs["F"] = None if fb is None else _parse_cylinder(fb, f"{path}.F", dimension)
    return VerifyTask(identity, objs)


@dataclass(frozen=True)
class DynamicsBlock:
    params: DynamicsParams
    n_replicas: int
    bumps: tuple


@dataclass(frozen=True)
class DiagnoseBlock:
    region: object
    n_mc: int


@dataclass(frozen=True)
class RunConfig:
    """Parsed and validated run configuration with defaults materialized."""

    dimension: int
    window: Window
    potential: PairPotential
    theta: ReferenceMeasure
    law: ClusterLaw | None
    gibbs: GibbsRunParams
    tol_sigma: float
    verify_tasks: tuple
    dynamics: DynamicsBlock | None
    diagnose: DiagnoseBlock | None
    output_dir: str
    raw: dict

    def describe(self) -> dict:
        """Fully materialized configuration for run metadata."""
        from .identities import describe_params

        out = {
            "dimension": self.dimension,
            "window": describe_params(self.window),
            "potential": describe_params(self.potential),
            "theta_intensity": self.theta.intensity,
            "cluster_law": describe_params(self.law),
            "sampler": describe_params(self.gibbs),
            "tol_sigma": self.tol_sigma,
            "verify_tasks": [
                {"identity": t.identity, **{k: describe_params(v) for k, v in t.objects.items()}}
                for t in self.verify_tasks
            ],
            "output_dir": self.output_dir,
        }
        if self.dynamics is not None:
            out["dynamics"] = {
                "params": describe_params(self.dynamics.params),
                "n_replicas": self.dynamics.n_replicas,
                "bumps": [describe_params(b) for b in self.dynamics.bumps],
            }
        if self.diagnose is not None:
            out["diagnose"] = {
                "region": describe_params(self.diagnose.region),
                "n_mc": self.diagnose.n_mc,
            }
        return out


def load_config(source, seed_override=None, out_override=None) -> RunConfig:
    """Parse a config from a file path or a dict, applying CLI overrides."""
    if isinstance(source, dict):
        data = source
        label = "<config>"
    else:
        label = str(source)
        try:
            text = open(source).read()
        except OSError as e:
            raise ConfigError(f"{label}: {e.strerror or e}") from e
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{label}:{e.lineno}:{e.colno}: {e.msg}") from e
    data = _as_dict(data, "$")

    dimension = _integer(data, "dimension", "$", required=False, default=2)
    if dimension < 1:
        _fail("$.dimension", "must be a positive integer")
    window = _parse_window(_get(data, "window", "$"), "$.window", dimension)

    pot_block = _get(data, "potential", "$", required=False)
    potential = (
        ZeroPotential()
        if pot_block is None
        else _parse_potential(pot_block, "$.potential", dimension)
    )

    theta_block = _as_dict(_get(data, "theta", "$"), "$.theta")
    intensity = _number(theta_block, "intensity", "$.theta")
    theta = _wrap("$.theta", ReferenceMeasure, intensity, window)

    law_block = _get(data, "cluster_law", "$", required=False)
    law = None if law_block is None else _parse_law(law_block, "$.cluster_law", dimension)

    samp = _as_dict(_get(data, "sampler", "$", required=False, default={}), "$.sampler")
    seed = _integer(samp, "seed", "$.sampler", required=False, default=0)
    if seed_override is not None:
        seed = seed_override
    move_mix = _get(samp, "move_mix", "$.sampler", required=False, default=[0.35, 0.35, 0.30])
    if not isinstance(move_mix, list) or len(move_mix) != 3:
        _fail("$.sampler.move_mix", "expected a list of three probabilities")
    gibbs = _wrap(
        "$.sampler",
        GibbsRunParams,
        potential=potential,
        theta=theta,
        n_samples=_integer(samp, "n_samples", "$.sampler", required=False, default=1000),
        seed=seed,
        burn_in=_integer(samp, "burn_in", "$.sampler", required=False, default=100_000),
        thinning=_integer(samp, "thinning", "$.sampler", required=False, default=100),
        move_mix=tuple(float(v) for v in move_mix),
        move_scale=_number(samp, "move_scale", "$.sampler", required=False),
    )

    ver = _as_dict(_get(data, "verify", "$", required=False, default={}), "$.verify")
    tol_sigma = _number(ver, "tol_sigma", "$.verify", required=False, default=4.0)
    tasks_raw = _get(ver, "tasks", "$.verify", required=False, default=[])
    if not isinstance(tasks_raw, list):
        _fail("$.verify.tasks", "expected a list")
    tasks = tuple(
        _parse_task(t, f"$.verify.tasks[{i}]", dimension) for i, t in enumerate(tasks_raw)
    )
    needs_law = [t.identity for t in tasks if t.identity != "gnz"]
    if needs_law and law is None:
        _fail("$.cluster_law", f"required by verify tasks {needs_law}")

    dyn_block = _get(data, "dynamics", "$", required=False)
    dynamics = None
    if dyn_block is not None:
        dyn = _as_dict(dyn_block, "$.dynamics")
        if law is None:
            _fail("$.cluster_law", "required by the dynamics block")
        mode = _get(dyn, "mode", "$.dynamics", required=False, default="offsets_only")
        params = _wrap(
            "$.dynamics",
            DynamicsParams,
            dt=_number(dyn, "dt", "$.dynamics"),
            t_end=_number(dyn, "t_end", "$.dynamics"),
            mode=mode,
            law=law,
            potential=potential,
            seed=seed,
            record_every=_integer(dyn, "record_every", "$.dynamics", required=False),
            allow_oversized_dt=bool(
                _get(dyn, "allow_oversized_dt", "$.dynamics", required=False, default=False)
            ),
        )
        bumps_raw = _get(dyn, "bumps", "$.dynamics", required=False, default=[])
        if not isinstance(bumps_raw, list):
            _fail("$.dynamics.bumps", "expected a list")
        bumps = tuple(
            _parse_bump(b, f"$.dynamics.bumps[{i}]", dimension) for i, b in enumerate(bumps_raw)
        )
        n_replicas = _integer(dyn, "n_replicas", "$.dynamics", required=False, default=1000)
        dynamics = DynamicsBlock(params=params, n_replicas=n_replicas, bumps=bumps)

    diag_block = _get(data, "diagnose", "$", required=False)
    diagnose = None
    if diag_block is not None:
        dg = _as_dict(diag_block, "$.diagnose")
        if law is None:
            _fail("$.cluster_law", "required by the diagnose block")
        region = _parse_region(_get(dg, "region", "$.diagnose"), "$.diagnose.region", dimension)
        n_mc = _integer(dg, "n_mc", "$.diagnose", required=False, default=2000)
        diagnose = DiagnoseBlock(region=region, n_mc=n_mc)

    output_dir = _get(data, "output_dir", "$", required=False, default="gcl_out")
    if out_override is not None:
        output_dir = out_override
    if not isinstance(output_dir, str):
        _fail("$.output_dir", "expected a string")

    return RunConfig(
        dimension=dimension,
        window=window,
        potential=potential,
        theta=theta,
        law=law,
        gibbs=gibbs,
        tol_sigma=tol_sigma,
        verify_tasks=tasks,
        dynamics=dynamics,
        diagnose=diagnose,
        output_dir=output_dir,
        raw=data,
    )
