"""Versioned default tolerances shared by the checks and the command line.

Keys ending in ``_h`` are multiples of the lattice spacing of the space under
test; the others are absolute or relative numbers as named.
"""

from __future__ import annotations

import math
from types import MappingProxyType

VERSION = 1

DEFAULTS = MappingProxyType(
    {
        # transport
        "mass": 1e-12,
        "marginal": 1e-10,
        "slack": 1e-9,
        "duality": 1e-9,
        "ccc": 1e-12,
        "abc_h": 2.0,
        # curvature
        "bg_tol": 0.1,
        "cd_cells": 3.0,
        "density_rtol": 0.25,
        # calculus
        "hilbert": 1e-2,
        "hilbert_linf": 1e-6,
        "lap_rtol": 0.1,
        "lap_linear": 1e-10,
        "heat_mass": 1e-9,
        "semigroup": 1e-8,
        "kernel_mass": 1e-9,
        "be_h": 5.0,
        # splitting
        "gap": 1e-9,
        "determined_rtol": 1e-6,
        "lipschitz": 1e-9,
        "harmonic_h": 1.0,
        "flow_tol": 1e-9,
        "tie_tol": 1e-9,
        "unreachable_cap": 0.2,
        "group_h": 1.0,
        "push_h": 1.0,
        "energy_h": 1.0,
        "isometry_h": 1.0,
        "pythagoras": 0.05,
        "pythagoras_fail": 0.2,
        "bilip": math.sqrt(2.0),
        "bilip_rtol": 1e-12,
        "embed_h": 1.0,
        "smap_cells": 1.0,
    }
)


def resolve(overrides=None) -> dict:
    """Defaults with ``overrides`` applied; unknown keys are rejected."""
    table = dict(DEFAULTS)
    for key, value in (overrides or {}).items():
        if key not in table:
            raise KeyError(f"unknown tolerance {key!r}")
        table[key] = float(value)
    return table
