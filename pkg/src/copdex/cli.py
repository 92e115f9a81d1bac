"""Configuration-driven command line interface.

One JSON configuration file describes a complete study: the marginal model,
the dependence family, the parameter prior, the criterion, the candidate
blocks, and the estimator backend.  Subcommands then act on it:

``design``    compute an optimal design and write it out
``eval``      evaluate the criterion value of a given design
``eff``       efficiency of a design relative to a reference design
``check``     certify a design against the equivalence bound
``tau``       dependence-strength summary for the configured copula
``simulate``  compare model information against simulated estimator spread

Every run writes a ``summary.json`` when ``--out`` is given; designs go to
CSV with one row per unit, sensitivities to CSV with one row per candidate
block.  All file writes are atomic (temp file plus rename).
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import copula as _cop
from . import criteria as _crit
from . import equivalence as _eq
from . import information as _info
from . import margins as _marg
from . import optimizer as _opt
from . import validation as _val
from .errors import ConfigError, CopdexError, DomainError

__all__ = ["Config", "parse_config", "execute", "main",
           "design_to_csv", "design_from_csv"]

_KNOWN_TOP = {
    "schema_version", "margin", "copula", "include_dependence", "parameters",
    "prior", "criterion", "candidates", "estimator", "optimizer", "design",
    "reference_design", "verify", "simulate", "tau", "seed", "output",
}
_OPTIMIZER_KEYS = {
    "max_iters", "convergence_tol", "weight_prune_tol", "merge_radius",
    "step_rule", "refine_every", "refine_iters",
}
_OUTPUT_FORMATS = {"csv", "json", "svg"}


@dataclass(frozen=True)
class Config:
    """A parsed, validated configuration with its built model objects."""

    raw: dict
    base_dir: Path
    model: object
    param: object
    prior: object
    criterion: object
    candidates: object
    estimator: object
    optimizer_options: object
    design: object
    reference_design: object
    verify_points: object
    verify_tolerance: float
    simulate_opts: object
    tau_opts: dict
    seed: int
    output_formats: tuple

    def to_dict(self):
        """The normalized configuration dictionary (round-trip stable)."""
        return copy.deepcopy(self.raw)

    def config_hash(self):
        """SHA-256 hash of the canonical JSON form of the configuration."""
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _as_float_list(value, path, length, bag):
    try:
        vals = [float(v) for v in value]
    except (TypeError, ValueError):
        bag.append(f"{path}: expected a list of numbers")
        return None
    if length is not None and len(vals) != length:
        bag.append(f"{path}: expected {length} entries, got {len(vals)}")
        return None
    if not all(np.isfinite(vals)):
        bag.append(f"{path}: entries must be finite")
        return None
    return vals


def _parse_margin(data, bag):
    m = data.get("margin")
    if not isinstance(m, dict):
        bag.append("margin: required section missing or not an object")
        return None
    response = m.get("response")
    link = m.get("link")
    basis_cfg = m.get("basis")
    if not isinstance(basis_cfg, list) or not basis_cfg:
        bag.append("margin.basis: required nonempty list")
        return None
    terms = []
    for i, entry in enumerate(basis_cfg):
        try:
            if isinstance(entry, str):
                terms.append(_marg.basis_term(entry))
            elif isinstance(entry, (list, tuple)) and len(entry) == 2:
                terms.append(_marg.basis_term(entry[0], entry[1]))
            else:
                raise DomainError("expected a name or [name, argument] pair")
        except (DomainError, TypeError, ValueError) as err:
            bag.append(f"margin.basis[{i}]: {err}")
    if len(terms) != len(basis_cfg):
        return None
    try:
        return _marg.MarginalModelSpec(response=response, link=link, basis=tuple(terms))
    except DomainError as err:
        bag.append(f"margin: {err}")
        return None


def _parse_copula(data, bag):
    c = data.get("copula")
    if not isinstance(c, dict):
        bag.append("copula: required section missing or not an object")
        return None, None
    family = c.get("family")
    if family not in _cop.FAMILIES:
        bag.append(
            f"copula.family: expected one of {sorted(_cop.FAMILIES)}, got {family!r}"
        )
        return None, None
    has_tau = "tau" in c
    has_alpha = "alpha" in c
    if family == "product":
        if has_tau or has_alpha:
            bag.append("copula: the product family takes no tau or alpha")
            return None, None
        return family, None
    if has_tau == has_alpha:
        bag.append("copula: give exactly one of tau or alpha")
        return None, None
    try:
        if has_tau:
            alpha = _cop.tau_alpha_map(family, float(c["tau"]), "tau_to_alpha")
        else:
            alpha = float(c["alpha"])
        _cop.CopulaSpec(family, alpha)
    except (DomainError, TypeError, ValueError) as err:
        field = "tau" if has_tau else "alpha"
        bag.append(f"copula.{field}: {err}")
        return None, None
    return family, alpha


def _parse_prior(data, param, r, bag):
    p = data.get("prior")
    kind = p.get("kind") if isinstance(p, dict) else None
    if kind == "point":
        return _crit.PriorSpec(kind="point", point=param)
    if kind == "box":
        lower = _as_float_list(p.get("lower"), "prior.lower", r, bag)
        upper = _as_float_list(p.get("upper"), "prior.upper", r, bag)
        nodes = p.get("nodes_per_dim", 3)
        if not isinstance(nodes, int) or nodes < 1:
            bag.append("prior.nodes_per_dim: expected a positive integer")
            return None
        if lower is None or upper is None:
            return None
        try:
            return _crit.PriorSpec(
                kind="box", lower=tuple(lower), upper=tuple(upper),
                nodes_per_dim=nodes, template=param,
            )
        except DomainError as err:
            bag.append(f"prior: {err}")
            return None
    bag.append("prior.kind: expected 'point' or 'box'")
    return None


def _parse_criterion(c, bag):
    kind = c.get("kind") if isinstance(c, dict) else None
    if kind == "D":
        return _crit.criterion_d()
    if kind == "Ds":
        interest = c.get("interest")
        if not isinstance(interest, list) or not interest:
            bag.append("criterion.interest: required nonempty list for Ds")
            return None
        try:
            return _crit.criterion_ds(tuple(interest))
        except DomainError as err:
            bag.append(f"criterion.interest: {err}")
            return None
    if kind == "DA":
        a = c.get("A")
        try:
            a_mat = np.asarray(a, dtype=float)
            if a_mat.ndim != 2:
                raise ValueError("expected a matrix")
            return _crit.criterion_da(a_mat)
        except (DomainError, TypeError, ValueError) as err:
            bag.append(f"criterion.A: {err}")
            return None
    bag.append("criterion.kind: expected 'D', 'DA', or 'Ds'")
    return None


def _parse_candidates(data, bag):
    c = data.get("candidates")
    if c is None:
        return None
    kind = c.get("kind") if isinstance(c, dict) else None
    if kind == "grid":
        lower = c.get("lower")
        upper = c.get("upper")
        points = c.get("points")
        if not isinstance(points, int) or points < 2:
            bag.append("candidates.points: expected an integer >= 2")
            return None
        try:
            lower = float(lower)
            upper = float(upper)
        except (TypeError, ValueError):
            bag.append("candidates: lower and upper must be numbers")
            return None
        if not (np.isfinite(lower) and np.isfinite(upper) and lower < upper):
            bag.append("candidates: need finite lower < upper")
            return None
        return _opt.grid_candidates(np.linspace(lower, upper, points))
    if kind == "level_pairs":
        levels = c.get("levels")
        include_pure = c.get("include_pure", True)
        if not isinstance(levels, int) or levels < 2:
            bag.append("candidates.levels: expected an integer >= 2")
            return None
        if not isinstance(include_pure, bool):
            bag.append("candidates.include_pure: expected true or false")
            return None
        return _opt.level_pair_candidates(levels, include_pure)
    bag.append("candidates.kind: expected 'grid' or 'level_pairs'")
    return None


def _parse_estimator(data, bag):
    e = data.get("estimator")
    kind = e.get("kind") if isinstance(e, dict) else None
    if kind == "exact":
        try:
            return _info.ExactSum(
                cell_budget=int(e.get("cell_budget", 10 ** 6)),
                tail_tol=float(e.get("tail_tol", 1e-8)),
            )
        except (DomainError, TypeError, ValueError) as err:
            bag.append(f"estimator: {err}")
            return None
    if kind == "monte_carlo":
        try:
            return _info.MonteCarlo(
                n=int(e.get("n", 20000)),
                seed=int(e.get("seed", 0)),
                tail_tol=float(e.get("tail_tol", 1e-8)),
            )
        except (DomainError, TypeError, ValueError) as err:
            bag.append(f"estimator: {err}")
            return None
    bag.append("estimator.kind: expected 'exact' or 'monte_carlo'")
    return None


def _parse_inline_design(d, path, bag):
    blocks_cfg = d.get("blocks")
    weights_cfg = d.get("weights")
    if not isinstance(blocks_cfg, list) or not isinstance(weights_cfg, list):
        bag.append(f"{path}: expected 'blocks' and 'weights' lists")
        return None
    if len(blocks_cfg) != len(weights_cfg):
        bag.append(f"{path}: blocks and weights differ in length")
        return None
    try:
        blocks = tuple(
            _info.Block(tuple(tuple(float(v) for v in unit) for unit in b))
            for b in blocks_cfg
        )
        return _crit.Design(blocks=blocks, weights=tuple(float(w) for w in weights_cfg))
    except (DomainError, TypeError, ValueError) as err:
        bag.append(f"{path}: {err}")
        return None


def _parse_design_section(data, key, base_dir, bag):
    d = data.get(key)
    if d is None:
        return None
    if not isinstance(d, dict):
        bag.append(f"{key}: expected an object")
        return None
    if "csv" in d:
        path = Path(d["csv"])
        if not path.is_absolute():
            path = base_dir / path
        try:
            return design_from_csv(path)
        except (OSError, DomainError, ValueError) as err:
            bag.append(f"{key}.csv: {err}")
            return None
    return _parse_inline_design(d, key, bag)


def parse_config(source):
    """Parse and validate a configuration from a path or a dictionary.

    All violations are collected and reported together in a ConfigError,
    each prefixed with the offending field path.  Returns a Config whose
    ``to_dict`` output parses back to an identical configuration.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        base_dir = path.resolve().parent
        try:
            text = path.read_text()
        except OSError as err:
            raise ConfigError([f"config: cannot read {path}: {err}"]) from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError([f"config: invalid JSON: {err}"]) from None
    elif isinstance(source, dict):
        data = copy.deepcopy(source)
        base_dir = Path.cwd()
    else:
        raise ConfigError(["config: expected a file path or a dictionary"])
    if not isinstance(data, dict):
        raise ConfigError(["config: top level must be an object"])

    bag = []
    unknown = sorted(set(data) - _KNOWN_TOP)
    for key in unknown:
        bag.append(f"{key}: unknown top-level field")
    if data.get("schema_version") != 1:
        bag.append("schema_version: expected 1")

    margin = _parse_margin(data, bag)
    family, alpha = _parse_copula(data, bag)
    include_dep = data.get("include_dependence", False)
    if not isinstance(include_dep, bool):
        bag.append("include_dependence: expected true or false")
        include_dep = False
    if include_dep and family == "product":
        bag.append("include_dependence: the product family has no dependence parameter")

    params_cfg = data.get("parameters")
    beta = None
    if not isinstance(params_cfg, dict):
        bag.append("parameters: required section missing or not an object")
    else:
        length = margin.r if margin is not None else None
        beta = _as_float_list(params_cfg.get("beta"), "parameters.beta", length, bag)

    model = None
    param = None
    if margin is not None and family is not None and beta is not None:
        try:
            model = _info.BlockModel(margin=margin, copula_family=family)
            param = _info.make_parameter(
                beta,
                alpha=(alpha,) if family != "product" else (),
                include_dependence=include_dep,
            )
        except DomainError as err:
            bag.append(f"parameters: {err}")

    prior = None
    if param is not None and margin is not None:
        prior = _parse_prior(data, param, margin.r, bag)

    criterion = _parse_criterion(data.get("criterion", {"kind": "D"}), bag)
    candidates = _parse_candidates(data, bag)
    estimator = _parse_estimator(data, bag)

    opt_cfg = data.get("optimizer", {})
    optimizer_options = None
    if not isinstance(opt_cfg, dict):
        bag.append("optimizer: expected an object")
    else:
        for key in sorted(set(opt_cfg) - _OPTIMIZER_KEYS):
            bag.append(f"optimizer.{key}: unknown field")
        try:
            optimizer_options = _opt.OptimizerOptions(
                **{k: v for k, v in opt_cfg.items() if k in _OPTIMIZER_KEYS}
            )
        except (DomainError, TypeError) as err:
            bag.append(f"optimizer: {err}")

    design = _parse_design_section(data, "design", base_dir, bag)
    reference = _parse_design_section(data, "reference_design", base_dir, bag)

    verify_cfg = data.get("verify", {})
    verify_points = None
    verify_tol = 0.01
    if not isinstance(verify_cfg, dict):
        bag.append("verify: expected an object")
    else:
        verify_points = verify_cfg.get("points")
        if verify_points is not None and (
            not isinstance(verify_points, int) or verify_points < 2
        ):
            bag.append("verify.points: expected an integer >= 2")
            verify_points = None
        verify_tol = verify_cfg.get("tolerance", 0.01)
        if not isinstance(verify_tol, (int, float)) or verify_tol <= 0:
            bag.append("verify.tolerance: expected a positive number")
            verify_tol = 0.01

    sim_cfg = data.get("simulate")
    simulate_opts = None
    if sim_cfg is not None:
        if not isinstance(sim_cfg, dict):
            bag.append("simulate: expected an object")
        else:
            simulate_opts = {
                "n_blocks": sim_cfg.get("n_blocks"),
                "replications": sim_cfg.get("replications", 1000),
                "threshold": sim_cfg.get("threshold", 0.10),
                "max_nonconverged": sim_cfg.get("max_nonconverged", 0.02),
                "seed": sim_cfg.get("seed", 0),
            }
            if not isinstance(simulate_opts["n_blocks"], int) or simulate_opts["n_blocks"] < 1:
                bag.append("simulate.n_blocks: expected a positive integer")
            if (not isinstance(simulate_opts["replications"], int)
                    or simulate_opts["replications"] < 2):
                bag.append("simulate.replications: expected an integer >= 2")
            if not (isinstance(simulate_opts["threshold"], (int, float))
                    and simulate_opts["threshold"] > 0):
                bag.append("simulate.threshold: expected a positive number")

    tau_cfg = data.get("tau", {})
    tau_opts = {"n": 1000000, "seed": 0}
    if not isinstance(tau_cfg, dict):
        bag.append("tau: expected an object")
    else:
        tau_opts["n"] = tau_cfg.get("n", 1000000)
        tau_opts["seed"] = tau_cfg.get("seed", 0)
        if not isinstance(tau_opts["n"], int) or tau_opts["n"] < 1000:
            bag.append("tau.n: expected an integer >= 1000")
        if not isinstance(tau_opts["seed"], int) or tau_opts["seed"] < 0:
            bag.append("tau.seed: expected a nonnegative integer")

    seed = data.get("seed", 0)
    if not isinstance(seed, int) or not (0 <= seed < 2 ** 64):
        bag.append("seed: expected an integer in [0, 2^64)")
        seed = 0

    out_cfg = data.get("output", {"formats": ["csv", "json"]})
    formats = ("csv", "json")
    if not isinstance(out_cfg, dict):
        bag.append("output: expected an object")
    else:
        fmts = out_cfg.get("formats", ["csv", "json"])
        if (not isinstance(fmts, list)
                or not set(fmts) <= _OUTPUT_FORMATS):
            bag.append(
                f"output.formats: expected a list drawn from {sorted(_OUTPUT_FORMATS)}"
            )
        else:
            formats = tuple(fmts)

    if bag:
        raise ConfigError(bag)

    # normalize the raw dictionary so round-tripping is stable
    data.setdefault("include_dependence", include_dep)
    data.setdefault("prior", {"kind": "point"})
    data.setdefault("criterion", {"kind": "D"})
    data.setdefault("optimizer", {})
    data.setdefault("verify", {})
    data.setdefault("tau", {})
    data["tau"] = {**tau_opts}
    data.setdefault("seed", seed)
    data.setdefault("output", {"formats": list(formats)})

    return Config(
        raw=data,
        base_dir=base_dir,
        model=model,
        param=param,
        prior=prior,
        criterion=criterion,
        candidates=candidates,
        estimator=estimator,
        optimizer_options=optimizer_options,
        design=design,
        reference_design=reference,
        verify_points=verify_points,
        verify_tolerance=float(verify_tol),
        simulate_opts=simulate_opts,
        tau_opts=tau_opts,
        seed=seed,
        output_formats=formats,
    )


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_json(path, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def design_to_csv(design, path):
    """Write a design as one row per unit.

    Columns: block_id, unit_index, one column per factor (x1, x2, ...), and
    the block weight repeated on each of its rows.
    """
    d = len(design.blocks[0].points[0])
    header = ["block_id", "unit_index"] + [f"x{i + 1}" for i in range(d)] + ["weight"]
    lines = [",".join(header)]
    for bi, (block, w) in enumerate(zip(design.blocks, design.weights), start=1):
        for ui, unit in enumerate(block.points, start=1):
            cells = [str(bi), str(ui)]
            cells += [f"{v:.12g}" for v in unit]
            cells.append(f"{w:.12g}")
            lines.append(",".join(cells))
    _atomic_write(path, "\n".join(lines) + "\n")


def design_from_csv(path):
    """Read a design written by ``design_to_csv``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DomainError(f"{path}: empty design file")
    factor_cols = [
        c for c in rows[0] if c not in ("block_id", "unit_index", "weight")
    ]
    if not factor_cols or "block_id" not in rows[0] or "weight" not in rows[0]:
        raise DomainError(f"{path}: missing required design columns")
    factor_cols.sort(key=lambda c: int(c.lstrip("x")))
    grouped = {}
    weights = {}
    for row in rows:
        bid = int(row["block_id"])
        unit = tuple(float(row[c]) for c in factor_cols)
        grouped.setdefault(bid, []).append((int(row["unit_index"]), unit))
        w = float(row["weight"])
        if bid in weights and abs(weights[bid] - w) > 1e-12:
            raise DomainError(f"{path}: inconsistent weight within block {bid}")
        weights[bid] = w
    blocks = []
    wlist = []
    for bid in sorted(grouped):
        units = [u for _, u in sorted(grouped[bid], key=lambda t: t[0])]
        blocks.append(_info.Block(tuple(units)))
        wlist.append(weights[bid])
    return _crit.Design(blocks=tuple(blocks), weights=tuple(wlist))


def _sensitivity_to_csv(blocks, values, path):
    k = blocks[0].k
    d = len(blocks[0].points[0])
    header = [f"u{j + 1}_x{i + 1}" for j in range(k) for i in range(d)]
    header.append("sensitivity")
    lines = [",".join(header)]
    for block, val in zip(blocks, values):
        cells = [f"{v:.12g}" for unit in block.points for v in unit]
        cells.append(f"{val:.12g}")
        lines.append(",".join(cells))
    _atomic_write(path, "\n".join(lines) + "\n")


def _with_seed(config, seed):
    raw = config.to_dict()
    raw["seed"] = seed
    if raw.get("estimator", {}).get("kind") == "monte_carlo":
        raw["estimator"]["seed"] = seed
    raw.setdefault("tau", {})["seed"] = seed
    if "simulate" in raw and isinstance(raw["simulate"], dict):
        raw["simulate"]["seed"] = seed
    return parse_config(raw)


def _require(config, *fields):
    missing = []
    for f in fields:
        if getattr(config, f) is None:
            missing.append(f)
    if missing:
        raise ConfigError(
            [f"{f.replace('_opts', '')}: section required for this command"
             for f in missing]
        )


def _summary_base(command, config):
    return {
        "command": command,
        "criterion": config.raw["criterion"]["kind"],
        "config_sha256": config.config_hash(),
        "seeds": {
            "config": config.seed,
            "estimator": getattr(config.estimator, "seed", None),
        },
    }


def _cert_candidates(config):
    c = config.raw.get("candidates")
    if c is None:
        raise ConfigError(["candidates: section required for this command"])
    if c["kind"] == "grid":
        points = config.verify_points or 2 * c["points"] - 1
        return _opt.grid_candidates(np.linspace(c["lower"], c["upper"], points))
    return config.candidates


def execute(command, config, out_dir=None, seed=None, threads=1, store=None):
    """Run one subcommand against a parsed configuration.

    Returns the summary dictionary, which always carries an ``exit_code``
    field (0 success, 3 failed certification or simulation check, 4
    optimizer stopped before reaching its convergence tolerance).  When
    ``out_dir`` is given, artifacts are written there.
    """
    if seed is not None:
        config = _with_seed(config, seed)
    if store is None:
        store = _info.default_store()
    out = Path(out_dir) if out_dir is not None else None
    t0 = time.perf_counter()
    summary = _summary_base(command, config)
    exit_code = 0

    if command == "design":
        _require(config, "candidates", "model", "prior", "criterion")
        cert = _cert_candidates(config)
        result, report = _opt.optimize_certified(
            config.model, config.prior, config.criterion, config.candidates,
            cert, options=config.optimizer_options,
            estimator=config.estimator, store=store, threads=threads,
            tolerance=config.verify_tolerance,
        )
        profile = _eq.sensitivity_profile(
            config.candidates.blocks, result.design, config.model,
            config.prior, config.criterion, estimator=config.estimator,
            store=store, threads=threads,
        )
        summary.update({
            "criterion_value": result.psi,
            "s": result.s,
            "max_sensitivity": report.max_sensitivity,
            "gap": result.gap,
            "converged": result.converged,
            "certified": report.passed,
            "iterations": result.iterations,
            "n_support_blocks": result.design.n_blocks,
        })
        if not result.converged:
            exit_code = 4
        if out is not None:
            design_to_csv(result.design, out / "design.csv")
            _sensitivity_to_csv(config.candidates.blocks, profile,
                                out / "sensitivity.csv")
            _write_json(out / "convergence.json", result.history)
            if "svg" in config.output_formats:
                from . import plots
                plots.design_support_svg(result.design, out / "design.svg")
                plots.sensitivity_svg(
                    config.candidates.blocks, profile, result.s,
                    out / "sensitivity.svg",
                )

    elif command == "eval":
        _require(config, "design")
        value = _crit.criterion_value(
            config.design, config.model, config.prior, config.criterion,
            estimator=config.estimator, store=store, threads=threads,
        )
        labels = _crit._labels_for(config.model, config.param)
        summary.update({
            "criterion_value": float(value),
            "s": config.criterion.s_for(labels),
            "n_design_blocks": config.design.n_blocks,
        })

    elif command == "eff":
        _require(config, "design", "reference_design")
        labels = _crit._labels_for(config.model, config.param)
        val_d = _crit.criterion_value(
            config.design, config.model, config.prior, config.criterion,
            estimator=config.estimator, store=store, threads=threads,
        )
        val_r = _crit.criterion_value(
            config.reference_design, config.model, config.prior,
            config.criterion, estimator=config.estimator, store=store,
            threads=threads,
        )
        s = config.criterion.s_for(labels)
        summary.update({
            "criterion_value": float(val_d),
            "reference_criterion_value": float(val_r),
            "s": s,
            "efficiency": float(np.exp((val_d - val_r) / s)),
        })

    elif command == "check":
        _require(config, "design")
        cert = _cert_candidates(config)
        report = _eq.verify(
            config.design, config.model, config.prior, config.criterion,
            cert, tolerance=config.verify_tolerance,
            estimator=config.estimator, store=store, threads=threads,
        )
        summary.update({
            "passed": report.passed,
            "s": report.s,
            "max_sensitivity": report.max_sensitivity,
            "gap": report.gap,
            "trace_identity": report.trace_identity,
            "n_candidates": report.n_candidates,
            "argmax_block": [list(u) for u in report.argmax_block.points],
        })
        if not report.passed:
            exit_code = 3
        if out is not None:
            profile = _eq.sensitivity_profile(
                cert.blocks, config.design, config.model, config.prior,
                config.criterion, estimator=config.estimator, store=store,
                threads=threads,
            )
            _sensitivity_to_csv(cert.blocks, profile, out / "sensitivity.csv")
            if "svg" in config.output_formats:
                from . import plots
                plots.sensitivity_svg(cert.blocks, profile, report.s,
                                      out / "sensitivity.svg")

    elif command == "tau":
        family = config.raw["copula"]["family"]
        alpha = config.param.alpha[0] if config.param.alpha else None
        spec = _cop.CopulaSpec(family, alpha)
        closed = _cop.tau_alpha_map(family, alpha, "alpha_to_tau")
        estimate = _cop.tau_numeric(
            spec, n=config.tau_opts["n"], seed=config.tau_opts["seed"]
        )
        summary.update({
            "family": family,
            "alpha": alpha,
            "tau_closed_form": closed,
            "tau_estimate": estimate.tau,
            "tau_se": estimate.se,
            "n": estimate.n,
        })

    elif command == "simulate":
        _require(config, "design", "simulate_opts")
        opts = config.simulate_opts
        comp = _val.fim_vs_empirical(
            config.design, config.model, config.param,
            n_blocks=opts["n_blocks"], replications=opts["replications"],
            seed=opts["seed"], estimator=config.estimator,
            threshold=opts["threshold"],
            max_nonconverged=opts["max_nonconverged"],
        )
        summary.update({
            "passed": comp.passed,
            "valid": comp.valid,
            "rel_frobenius": comp.rel_frobenius,
            "threshold": comp.threshold,
            "n_replications": comp.n_replications,
            "n_converged": comp.n_converged,
            "n_total_blocks": comp.n_total_blocks,
            "reason": comp.reason,
        })
        if not comp.passed:
            exit_code = 3

    else:
        raise ConfigError([f"command: unknown command {command!r}"])

    summary["runtime_seconds"] = time.perf_counter() - t0
    summary["exit_code"] = exit_code
    if out is not None:
        _write_json(out / "summary.json", summary)
    return summary


def main(argv=None):
    """Command line entry point."""
    parser = argparse.ArgumentParser(
        prog="copdex",
        description=(
            "Robust optimal block designs for dependent discrete responses"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("design", "compute an optimal design"),
        ("eval", "evaluate the criterion value of a design"),
        ("eff", "efficiency of a design against a reference design"),
        ("check", "certify a design against the equivalence bound"),
        ("tau", "dependence-strength summary for the configured copula"),
        ("simulate", "compare model information with simulated estimates"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="path to a JSON configuration")
        p.add_argument("--out", default=None, help="directory for output artifacts")
        p.add_argument("--seed", type=int, default=None,
                       help="override every seed in the configuration")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for information-matrix batches")
    args = parser.parse_args(argv)
    try:
        config = parse_config(args.config)
        summary = execute(
            args.command, config, out_dir=args.out, seed=args.seed,
            threads=args.threads,
        )
    except ConfigError as err:
        for v in err.violations:
            print(f"config error: {v}", file=sys.stderr)
        return 2
    except CopdexError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(json.dumps(summary, indent=2, sort_keys=True))
    return summary["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
