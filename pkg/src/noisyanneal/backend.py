"""Pick the compiled kernel when available, else the pure-Python one.

Set ``NOISY_ANNEAL_PURE=1`` to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from .geometry import DYKSTRA_MAX_SWEEPS, ConvexBody
from .noise import ConstantNoise, NoisyOracle, Ripple
from . import _kernel_py

_BODY_KINDS = {"ball": 0, "box": 1, "polytope": 2}
_OBJ_KINDS = {"quadratic": 0, "scaled_norm": 1, "smoothed_max_affine": 2, "flat_valley": 3}


def _load():
    if os.environ.get("NOISY_ANNEAL_PURE", "") not in ("", "0"):
        return _kernel_py
    try:
        from . import _kernel
    except ImportError:
        return _kernel_py
    return _kernel


kernel = _load()
BACKEND = kernel.BACKEND


def get_kernel(name: str | None = None):
    if name is None:
        return kernel
    if name == "python":
        return _kernel_py
    if name == "cython":
        from . import _kernel

        return _kernel
    raise ValueError(f"unknown backend {name!r}")


def compilable(oracle: NoisyOracle) -> bool:
    ok_field = lambda f: isinstance(f, (Ripple, ConstantNoise))
    return (
        oracle.direct is None
        and oracle.base.kind in _OBJ_KINDS
        and ok_field(oracle.psi)
        and ok_field(oracle.phi)
    )


def _field_spec(prefix, f, d):
    if isinstance(f, Ripple):
        return {
            prefix + "_kind": 1,
            prefix + "_amp": f.amplitude,
            prefix + "_w": f.weights,
            prefix + "_freq": f.freqs,
            prefix + "_phase": f.phases,
            prefix + "_const": 0.0,
        }
    return {
        prefix + "_kind": 0,
        prefix + "_amp": 0.0,
        prefix + "_w": np.zeros(0),
        prefix + "_freq": np.zeros((1, d)),
        prefix + "_phase": np.zeros(0),
        prefix + "_const": float(f.value),
    }


def problem_spec(oracle: NoisyOracle, body: ConvexBody) -> dict:
    """Flatten body, zero-extension domain, objective and noise into arrays."""
    if not compilable(oracle):
        raise TypeError("oracle is not expressible in the compiled kernel")
    d = body.dimension
    inner = body.inner
    spec = {
        "d": d,
        "body_kind": _BODY_KINDS[inner.kind],
        "center": getattr(inner, "center", np.zeros(d)),
        "radius": getattr(inner, "radius", 0.0),
        "lo": getattr(inner, "lo", np.zeros(d)),
        "hi": getattr(inner, "hi", np.zeros(d)),
        "normals": getattr(inner, "normals", np.zeros((1, d))),
        "offsets": getattr(inner, "offsets", np.zeros(0)),
        "dyk_tol": 1e-10 * body.bounding_radius,
        "dyk_max": DYKSTRA_MAX_SWEEPS,
        "rprime": body.rounding_radius,
        "tol": 1e-12 * body.bounding_radius,
    }
    dom = oracle.domain
    if dom is not None:
        if dom.inner is not inner and dom.inner != inner:
            raise TypeError("oracle domain must be a thickening of the body")
        spec["dom_enabled"] = 1
        spec["dom_rprime"] = dom.rounding_radius
    else:
        spec["dom_enabled"] = 0
        spec["dom_rprime"] = np.inf
    obj = oracle.base
    p = obj.params
    spec.update(
        obj_kind=_OBJ_KINDS[obj.kind],
        xstar=obj.minimizer,
        A=p.get("A", np.zeros((d, d))),
        scale=p.get("scale", 0.0),
        width=p.get("width", 1.0),
        slopes=p.get("slopes", np.zeros((1, d))),
        tau=p.get("tau", 1.0),
        curv=p.get("curvature", 0.0),
        offset=oracle.offset,
    )
    spec.update(_field_spec("psi", oracle.psi, d))
    spec.update(_field_spec("phi", oracle.phi, d))
    return spec


def compile_problem(oracle: NoisyOracle, body: ConvexBody, backend: str | None = None):
    return get_kernel(backend).Problem(problem_spec(oracle, body))
