"""Ready-made configuration dictionaries for the bundled example studies.

Each preset is a complete configuration (see ``copdex.cli.parse_config``)
for one study scenario: a Poisson quadratic dose model on [-1, 1] with a
dependence family and strength, or a six-level binary materials comparison.
Presets are plain dictionaries so callers can tweak fields before parsing.
"""

from __future__ import annotations

import copy

from .errors import DomainError

__all__ = ["preset", "preset_names", "TAU_EPS"]

# a numerically tiny dependence level standing in for the independence limit
TAU_EPS = 1e-9

_GEE_REFERENCE = {
    "blocks": [[[0.03], [1.0]], [[0.60], [1.0]], [[-0.40], [0.78]]],
    "weights": [0.355, 0.310, 0.335],
}

_POISSON_BASE = {
    "schema_version": 1,
    "margin": {
        "response": "poisson",
        "link": "log",
        "basis": ["intercept", ["linear", 0], ["quad", 0]],
    },
    "parameters": {"beta": [0.0, 4.5, 1.0]},
    "prior": {
        "kind": "box",
        "lower": [-1.0, 4.0, 0.5],
        "upper": [1.0, 5.0, 1.5],
        "nodes_per_dim": 3,
    },
    "criterion": {"kind": "D"},
    "candidates": {"kind": "grid", "lower": -1.0, "upper": 1.0, "points": 41},
    "estimator": {"kind": "monte_carlo", "n": 20000, "seed": 1},
    "optimizer": {
        "max_iters": 3000,
        "convergence_tol": 1e-4,
        "refine_every": 20,
        "refine_iters": 1500,
    },
    "verify": {"points": 81, "tolerance": 0.01},
    "reference_design": _GEE_REFERENCE,
    "seed": 1,
    "output": {"formats": ["csv", "json"]},
}

_MATERIALS_BASE = {
    "schema_version": 1,
    "margin": {
        "response": "bernoulli",
        "link": "logit",
        "basis": [
            "intercept",
            ["indicator", 1],
            ["indicator", 2],
            ["indicator", 3],
            ["indicator", 4],
            ["indicator", 5],
        ],
    },
    "copula": {"family": "gumbel", "tau": 0.33},
    "include_dependence": False,
    "parameters": {"beta": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]},
    "prior": {"kind": "point"},
    "criterion": {"kind": "D"},
    "candidates": {"kind": "level_pairs", "levels": 6, "include_pure": True},
    "estimator": {"kind": "exact", "cell_budget": 1000000, "tail_tol": 1e-8},
    "optimizer": {
        "max_iters": 3000,
        "convergence_tol": 1e-4,
        "refine_every": 20,
        "refine_iters": 1500,
    },
    "verify": {"tolerance": 0.01},
    "seed": 0,
    "output": {"formats": ["csv", "json"]},
}

_MATERIALS_SKEWED_BETA = [0.0, -1.0, 2.0, -3.0, 4.0, -5.0]


def _poisson(family, tau, include_dependence):
    cfg = copy.deepcopy(_POISSON_BASE)
    if family == "product":
        cfg["copula"] = {"family": "product"}
        cfg["include_dependence"] = False
    else:
        cfg["copula"] = {"family": family, "tau": tau}
        cfg["include_dependence"] = include_dependence
    return cfg


def _materials(beta, prior=None):
    cfg = copy.deepcopy(_MATERIALS_BASE)
    cfg["parameters"]["beta"] = list(beta)
    if prior is not None:
        cfg["prior"] = prior
    return cfg


def _materials_simulate():
    cfg = _materials([0.0] * 6)
    cfg["copula"] = {"family": "clayton", "tau": 1.0 / 3.0}
    pairs = [
        [[float(a)], [float(b)]]
        for a in range(1, 7)
        for b in range(a + 1, 7)
    ]
    cfg["design"] = {
        "blocks": pairs,
        "weights": [1.0 / len(pairs)] * len(pairs),
    }
    cfg["simulate"] = {
        "n_blocks": 120,
        "replications": 20000,
        "threshold": 0.10,
        "max_nonconverged": 0.02,
    }
    return cfg


_BUILDERS = {
    "poisson-product": lambda: _poisson("product", None, False),
    "poisson-clayton-eps": lambda: _poisson("clayton", TAU_EPS, True),
    "poisson-clayton-tenth": lambda: _poisson("clayton", 0.1, True),
    "poisson-clayton-third": lambda: _poisson("clayton", 1.0 / 3.0, True),
    "poisson-gumbel-eps": lambda: _poisson("gumbel", TAU_EPS, True),
    "poisson-gumbel-tenth": lambda: _poisson("gumbel", 0.1, True),
    "poisson-gumbel-third": lambda: _poisson("gumbel", 1.0 / 3.0, True),
    "materials-point-uniform": lambda: _materials([0.0] * 6),
    "materials-point-skewed": lambda: _materials(_MATERIALS_SKEWED_BETA),
    "materials-bayes-centered": lambda: _materials(
        [0.0] * 6,
        prior={
            "kind": "box",
            "lower": [-1.0] * 6,
            "upper": [1.0] * 6,
            "nodes_per_dim": 3,
        },
    ),
    "materials-bayes-skewed": lambda: _materials(
        _MATERIALS_SKEWED_BETA,
        prior={
            "kind": "box",
            "lower": [-1.0, -2.0, 1.0, -4.0, 3.0, -6.0],
            "upper": [1.0, 0.0, 3.0, -2.0, 5.0, -4.0],
            "nodes_per_dim": 3,
        },
    ),
    "materials-simulate": _materials_simulate,
}


def preset_names():
    """Names of all bundled presets, sorted."""
    return sorted(_BUILDERS)


def preset(name):
    """A fresh configuration dictionary for a named preset."""
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise DomainError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        ) from None
    return builder()
