"""Exchange-type optimization of approximate block designs.

The optimizer walks a finite candidate set of blocks: vertex steps mix the
current design toward the block with the highest sensitivity (the
Fedorov-Wynn direction), and periodic multiplicative passes rebalance the
weights on the current support.  Convergence is declared on the equivalence
bound: the maximum candidate sensitivity must come within a tolerance of the
criterion dimension s.

All candidate-by-node information matrices are computed once up front and
reused, so a fixed Monte Carlo seed makes the whole run deterministic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import criteria as _crit
from . import information as _info
from .errors import DomainError, InfeasibleError

__all__ = [
    "CandidateSet",
    "OptimizerOptions",
    "OptimizeResult",
    "grid_candidates",
    "level_pair_candidates",
    "optimize",
    "optimize_certified",
    "refine_weights",
    "canonicalize",
]


@dataclass(frozen=True)
class CandidateSet:
    """A finite, canonical, duplicate-free set of candidate blocks.

    ``grid_step`` records the resolution of a continuous grid (used as the
    default merge radius); it is None for enumerated categorical candidates.
    """

    blocks: tuple
    provenance: str = ""
    grid_step: float = None

    def __post_init__(self):
        blocks = tuple(b.canonical() for b in self.blocks)
        if not blocks:
            raise DomainError("candidate set must be nonempty")
        seen = set()
        uniq = []
        for b in blocks:
            if b.points not in seen:
                seen.add(b.points)
                uniq.append(b)
        object.__setattr__(self, "blocks", tuple(sorted(uniq, key=lambda b: b.points)))


def grid_candidates(points, k=2):
    """All unordered k-tuples (with repeats) from a 1-factor grid."""
    pts = np.sort(np.asarray(points, dtype=float))
    if pts.size < 2:
        raise DomainError("grid needs at least two points")
    if k != 2:
        raise DomainError("grid candidates support blocks of size 2")
    blocks = [
        _info.Block(((float(a),), (float(b),)))
        for i, a in enumerate(pts)
        for b in pts[i:]
    ]
    step = float(np.min(np.diff(pts)))
    return CandidateSet(
        blocks=tuple(blocks),
        provenance=f"grid[{pts.size} points, step {step:g}]",
        grid_step=step,
    )


def level_pair_candidates(n_levels, include_pure=True):
    """All unordered level pairs from a categorical factor."""
    if n_levels < 2:
        raise DomainError("need at least two levels")
    blocks = []
    for a in range(1, n_levels + 1):
        for b in range(a, n_levels + 1):
            if a == b and not include_pure:
                continue
            blocks.append(_info.Block(((float(a),), (float(b),))))
    return CandidateSet(
        blocks=tuple(blocks),
        provenance=f"level pairs[{n_levels} levels, pure={include_pure}]",
        grid_step=None,
    )


@dataclass(frozen=True)
class OptimizerOptions:
    """Controls for the exchange algorithm.

    ``convergence_tol`` applies to the equivalence bound: stop when the
    maximum sensitivity is at most s * (1 + tol).  ``step_rule`` is
    ``"wynn"`` for the 1/(t+1) schedule (with a monotonicity safeguard) or
    ``"golden"`` for a bounded line search on each vertex step.
    """

    max_iters: int = 600
    convergence_tol: float = 1e-3
    weight_prune_tol: float = 1e-4
    merge_radius: float = None
    step_rule: str = "wynn"
    refine_every: int = 20
    refine_iters: int = 300

    def __post_init__(self):
        if self.max_iters < 1:
            raise DomainError("max_iters must be at least 1")
        for name in ("convergence_tol", "weight_prune_tol"):
            if getattr(self, name) <= 0.0:
                raise DomainError(f"{name} must be positive")
        if self.merge_radius is not None and self.merge_radius < 0.0:
            raise DomainError("merge_radius must be nonnegative")
        if self.step_rule not in ("wynn", "golden"):
            raise DomainError(f"unknown step rule {self.step_rule!r}")


@dataclass
class OptimizeResult:
    """Outcome of one optimization run."""

    design: _crit.Design
    converged: bool
    gap: float
    iterations: int
    psi: float
    s: int
    runtime_seconds: float
    history: list = field(default_factory=list)


def _psi_of(weights, tensor, wq):
    m_nodes = np.einsum("c,ncij->nij", weights, tensor)
    signs, logdets = np.linalg.slogdet(m_nodes)
    if np.any(signs <= 0.0):
        return -np.inf, m_nodes
    return float(wq @ logdets), m_nodes


def _psi_general(weights, tensor, wq, criterion, labels):
    m_nodes = np.einsum("c,ncij->nij", weights, tensor)
    try:
        vals = _crit.node_values(m_nodes, criterion, labels)
    except Exception:
        return -np.inf, m_nodes
    return float(wq @ vals), m_nodes


def _phi_all(m_nodes, tensor, wq, criterion, labels):
    b_nodes = _crit.sensitivity_weight_matrices(m_nodes, criterion, labels)
    return np.einsum("n,nij,ncij->c", wq, b_nodes, tensor)


def _seed_weights(tensor, n_candidates, q, wq):
    size = q + 1
    while True:
        idx = np.unique(np.linspace(0, n_candidates - 1, size).astype(int))
        w = np.zeros(n_candidates)
        w[idx] = 1.0 / idx.size
        m_nodes = np.einsum("c,ncij->nij", w, tensor)
        eigs = np.linalg.eigvalsh(m_nodes)
        if np.all(eigs[:, 0] > 1e-12 * np.maximum(eigs[:, -1], 1e-300)):
            return w
        if size >= n_candidates:
            raise InfeasibleError(
                "no nonsingular starting design exists on this candidate set"
            )
        size = min(2 * size, n_candidates)


def _golden_lambda(weights, j_star, tensor, wq, criterion, labels):
    from scipy.optimize import minimize_scalar

    e_j = np.zeros(weights.size)
    e_j[j_star] = 1.0

    def neg_psi(lam):
        psi, _ = _psi_general((1 - lam) * weights + lam * e_j, tensor, wq, criterion, labels)
        return -psi

    res = minimize_scalar(neg_psi, bounds=(0.0, 0.999), method="bounded",
                          options={"xatol": 1e-6})
    return float(res.x)


def _refine_pass(weights, tensor, wq, criterion, labels, s, iters, gain_tol=1e-10):
    """Multiplicative weight rebalancing on the current support; monotone by
    construction (a decreasing step is rejected and ends the pass)."""
    psi, m_nodes = _psi_general(weights, tensor, wq, criterion, labels)
    for _ in range(iters):
        phi = _phi_all(m_nodes, tensor, wq, criterion, labels)
        new_w = weights * np.clip(phi, 0.0, None) / s
        total = new_w.sum()
        if total <= 0.0 or not np.isfinite(total):
            break
        new_w /= total
        new_psi, new_m = _psi_general(new_w, tensor, wq, criterion, labels)
        if not np.isfinite(new_psi) or new_psi < psi - 1e-12:
            break
        gain = new_psi - psi
        weights, psi, m_nodes = new_w, new_psi, new_m
        if gain < gain_tol:
            break
    return weights, psi, m_nodes


def _prune(weights, tol):
    w = np.where(weights < tol, 0.0, weights)
    total = w.sum()
    if total <= 0.0:
        return weights
    return w / total


def optimize(
    model,
    prior,
    criterion,
    candidates,
    options=None,
    estimator=None,
    store=None,
    threads=1,
):
    """Find a robust optimal approximate design on a candidate set.

    Returns an OptimizeResult whose design satisfies the equivalence bound
    within ``options.convergence_tol`` when ``converged`` is True; otherwise
    the achieved gap is reported (never a silent success).
    """
    t0 = time.perf_counter()
    options = options if options is not None else OptimizerOptions()
    estimator = estimator if estimator is not None else _info.ExactSum()
    nodes = _crit.quad_grid(prior)
    params = [p for p, _ in nodes]
    wq = np.array([w for _, w in nodes])
    labels = _crit._labels_for(model, params[0])
    s = criterion.s_for(labels)
    blocks = candidates.blocks
    tensor = _info.fim_tensor(blocks, model, params, estimator, store=store, threads=threads)
    n_cand = len(blocks)
    weights = _seed_weights(tensor, n_cand, params[0].q, wq)

    psi, m_nodes = _psi_general(weights, tensor, wq, criterion, labels)
    if not np.isfinite(psi):
        raise InfeasibleError("starting design has a singular criterion value")
    gap = np.inf
    history = []
    iters_done = 0
    converged = False
    for t in range(1, options.max_iters + 1):
        iters_done = t
        phi = _phi_all(m_nodes, tensor, wq, criterion, labels)
        gap = float(phi.max() / s - 1.0)
        if t % 10 == 1 or gap <= options.convergence_tol:
            history.append({"iter": t, "psi": psi, "gap": gap,
                            "support": int(np.count_nonzero(weights))})
        if gap <= options.convergence_tol:
            converged = True
            break
        j_star = int(np.argmax(phi))
        if options.step_rule == "golden":
            lam = _golden_lambda(weights, j_star, tensor, wq, criterion, labels)
        else:
            lam = 1.0 / (t + 1.0)
        # reject steps that lower the criterion; halve until they do not
        accepted = False
        for _ in range(12):
            new_w = (1.0 - lam) * weights
            new_w[j_star] += lam
            new_psi, new_m = _psi_general(new_w, tensor, wq, criterion, labels)
            if np.isfinite(new_psi) and new_psi >= psi - 1e-12:
                weights, psi, m_nodes = new_w, new_psi, new_m
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            pass  # weights unchanged; refinement may still improve them
        if t % options.refine_every == 0:
            weights, psi, m_nodes = _refine_pass(
                weights, tensor, wq, criterion, labels, s, options.refine_iters
            )
            weights = _prune(weights, options.weight_prune_tol)
            psi, m_nodes = _psi_general(weights, tensor, wq, criterion, labels)

    # final polish on the support, then prune and re-check the bound
    weights, psi, m_nodes = _refine_pass(
        weights, tensor, wq, criterion, labels, s, options.refine_iters * 4
    )
    weights = _prune(weights, options.weight_prune_tol)
    psi, m_nodes = _psi_general(weights, tensor, wq, criterion, labels)
    phi = _phi_all(m_nodes, tensor, wq, criterion, labels)
    gap = float(phi.max() / s - 1.0)
    converged = gap <= options.convergence_tol

    support = np.flatnonzero(weights)
    design = _crit.Design(
        blocks=tuple(blocks[i] for i in support),
        weights=tuple(weights[support]),
    )
    radius = options.merge_radius
    if radius is None:
        radius = candidates.grid_step if candidates.grid_step else 0.0
    if radius > 0.0:
        merged = _merge_near_duplicates(design, radius)
        if merged.n_blocks < design.n_blocks:
            # merging moves mass between coordinates, so the merged design
            # must re-pass the equivalence bound before it may replace the
            # converged one
            index_of = {b: i for i, b in enumerate(blocks)}
            w_m = np.zeros(n_cand)
            for b, w in zip(merged.blocks, merged.weights):
                w_m[index_of[b]] += w
            w_m, psi_m, m_m = _refine_pass(
                w_m, tensor, wq, criterion, labels, s, options.refine_iters * 4
            )
            phi_m = _phi_all(m_m, tensor, wq, criterion, labels)
            gap_m = float(phi_m.max() / s - 1.0)
            if gap_m <= max(gap, options.convergence_tol):
                sup_m = np.flatnonzero(w_m)
                design = _crit.Design(
                    blocks=tuple(blocks[i] for i in sup_m),
                    weights=tuple(w_m[sup_m]),
                )
                psi, gap = psi_m, gap_m
                converged = gap <= options.convergence_tol
    history.append({"iter": iters_done, "psi": psi, "gap": gap,
                    "support": design.n_blocks})
    return OptimizeResult(
        design=design,
        converged=bool(converged),
        gap=gap,
        iterations=iters_done,
        psi=float(psi),
        s=int(s),
        runtime_seconds=time.perf_counter() - t0,
        history=history,
    )


def optimize_certified(
    model,
    prior,
    criterion,
    candidates,
    cert_candidates,
    options=None,
    estimator=None,
    store=None,
    threads=1,
    tolerance=1e-2,
    max_rounds=3,
):
    """Optimize, then certify against a finer candidate set, folding any
    violating blocks back into the candidate pool and re-optimizing.

    A candidate grid coarse enough to optimize over quickly can miss an
    off-grid support coordinate; the design then maximizes the criterion on
    the grid yet exceeds the sensitivity bound between grid points.  Each
    round adds the certification set's violating blocks as candidates, so
    the support can settle on the missing coordinates.  Returns the last
    round's (OptimizeResult, VerificationReport); certification success is
    ``report.passed``.

    A certified design can still carry support clusters one grid step wide
    that stand in for a single off-grid coordinate.  After certification
    passes, each cluster is collapsed onto its heaviest block and the weights
    re-refined; the collapsed design replaces the certified one only when its
    own verification holds at least as tightly.  The returned report then
    describes the collapsed design.
    """
    from . import equivalence as _eq

    pool = candidates
    result = None
    report = None
    for _ in range(max(1, max_rounds)):
        result = optimize(
            model, prior, criterion, pool, options=options,
            estimator=estimator, store=store, threads=threads,
        )
        report = _eq.verify(
            result.design, model, prior, criterion, cert_candidates,
            tolerance=tolerance, estimator=estimator, store=store,
            threads=threads,
        )
        if report.passed or not result.converged:
            break
        known = {b.points for b in pool.blocks}
        extra = tuple(
            b for b, _ in report.violations if b.points not in known
        )
        if not extra:
            break
        pool = CandidateSet(
            blocks=pool.blocks + extra,
            provenance=pool.provenance + " + certification refinements",
            grid_step=pool.grid_step,
        )
    radius = pool.grid_step if pool.grid_step else 0.0
    if report.passed and radius > 0.0:
        merged = _merge_near_duplicates(result.design, radius)
        if merged.n_blocks < result.design.n_blocks:
            merged = refine_weights(
                merged, model, prior, criterion, estimator=estimator,
                store=store, threads=threads,
                max_iters=(options.refine_iters * 4 if options is not None else 6000),
            )
            rep_m = _eq.verify(
                merged, model, prior, criterion, cert_candidates,
                tolerance=tolerance, estimator=estimator, store=store,
                threads=threads,
            )
            if rep_m.passed and rep_m.max_sensitivity <= report.max_sensitivity:
                psi_m = _crit.criterion_value(
                    merged, model, prior, criterion, estimator=estimator,
                    store=store, threads=threads,
                )
                result = dataclasses.replace(
                    result,
                    design=merged,
                    psi=float(psi_m),
                    gap=float(rep_m.max_sensitivity / rep_m.s - 1.0),
                )
                report = rep_m
    return result, report


def _merge_near_duplicates(design, radius):
    """Greedily absorb blocks within an infinity-norm radius of a heavier
    block, summing weights and keeping the heavier block's coordinates."""
    order = np.argsort(design.weight_array())[::-1]
    blocks = [design.blocks[i] for i in order]
    weights = [design.weights[i] for i in order]
    kept_blocks = []
    kept_weights = []
    for b, w in zip(blocks, weights):
        coords = np.asarray(b.points, dtype=float).ravel()
        absorbed = False
        for i, kb in enumerate(kept_blocks):
            k_coords = np.asarray(kb.points, dtype=float).ravel()
            if coords.size == k_coords.size and np.max(np.abs(coords - k_coords)) <= radius + 1e-12:
                kept_weights[i] += w
                absorbed = True
                break
        if not absorbed:
            kept_blocks.append(b)
            kept_weights.append(w)
    return _crit.Design(blocks=tuple(kept_blocks), weights=tuple(kept_weights))


def refine_weights(
    design,
    model,
    prior,
    criterion,
    estimator=None,
    store=None,
    threads=1,
    prune_tol=0.0,
    max_iters=2000,
):
    """Multiplicative weight refinement holding the support fixed.

    The criterion value is nondecreasing across iterations; the pass stops
    when the per-iteration gain falls below 1e-10.
    """
    estimator = estimator if estimator is not None else _info.ExactSum()
    nodes = _crit.quad_grid(prior)
    params = [p for p, _ in nodes]
    wq = np.array([w for _, w in nodes])
    labels = _crit._labels_for(model, params[0])
    s = criterion.s_for(labels)
    tensor = _info.fim_tensor(design.blocks, model, params, estimator, store=store, threads=threads)
    weights = design.weight_array()
    weights, _, _ = _refine_pass(weights, tensor, wq, criterion, labels, s, max_iters)
    if prune_tol > 0.0:
        weights = _prune(weights, prune_tol)
    keep = np.flatnonzero(weights)
    return _crit.Design(
        blocks=tuple(design.blocks[i] for i in keep),
        weights=tuple(weights[keep]),
    )


def canonicalize(design, prune_tol=0.0):
    """Canonical form of a design: sorted units and blocks, merged duplicates,
    optional pruning of negligible weights, renormalized weights.  Idempotent."""
    weights = design.weight_array()
    if prune_tol > 0.0:
        keep = weights >= prune_tol
        if not np.any(keep):
            raise DomainError("pruning removed every block")
        blocks = tuple(b for b, k in zip(design.blocks, keep) if k)
        weights = weights[keep]
    else:
        blocks = design.blocks
    weights = weights / weights.sum()
    return _crit.Design(blocks=blocks, weights=tuple(weights))
