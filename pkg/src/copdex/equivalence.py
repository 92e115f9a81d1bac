"""Equivalence-theorem sensitivity analysis and design certification.

For a candidate block, the sensitivity is the prior-weighted trace of the
criterion's weighting matrix against the block's information matrix.  An
optimal design's sensitivity is bounded by the criterion dimension s over
every candidate, and equals s on the design's own support; ``verify`` checks
both facts on an independent (typically finer) candidate set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import criteria as _crit
from . import information as _info

__all__ = [
    "sensitivity",
    "sensitivity_profile",
    "VerificationReport",
    "verify",
]


def _context(design, model, prior, criterion, estimator, store, threads):
    nodes = _crit.quad_grid(prior)
    params = [p for p, _ in nodes]
    wq = np.array([w for _, w in nodes])
    labels = _crit._labels_for(model, params[0])
    s = criterion.s_for(labels)
    m_nodes = _crit.design_matrices(design, model, nodes, estimator, store=store, threads=threads)
    b_nodes = _crit.sensitivity_weight_matrices(m_nodes, criterion, labels)
    return params, wq, labels, s, b_nodes


def sensitivity_profile(
    blocks,
    design,
    model,
    prior,
    criterion,
    estimator=None,
    store=None,
    threads=1,
):
    """Sensitivity of each block in ``blocks`` with respect to ``design``.

    Returns a float array aligned with ``blocks``.
    """
    estimator = estimator if estimator is not None else _info.ExactSum()
    params, wq, labels, s, b_nodes = _context(
        design, model, prior, criterion, estimator, store, threads
    )
    tensor = _info.fim_tensor(blocks, model, params, estimator, store=store, threads=threads)
    return np.einsum("n,nij,ncij->c", wq, b_nodes, tensor)


def sensitivity(
    block,
    design,
    model,
    prior,
    criterion,
    estimator=None,
    store=None,
    threads=1,
):
    """Sensitivity of a single candidate block with respect to a design."""
    profile = sensitivity_profile(
        (block,), design, model, prior, criterion,
        estimator=estimator, store=store, threads=threads,
    )
    return float(profile[0])


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of an equivalence-bound certification.

    ``passed`` requires both the bound (no candidate sensitivity above
    s * (1 + tolerance)) and the support identity (the design-weighted mean
    sensitivity equals s within ``trace_tol``).
    """

    passed: bool
    s: int
    tolerance: float
    max_sensitivity: float
    gap: float
    argmax_block: object
    trace_identity: float
    trace_tol: float
    n_candidates: int
    violations: tuple

    def summary(self):
        status = "pass" if self.passed else "fail"
        return (
            f"equivalence check: {status} "
            f"(max sensitivity {self.max_sensitivity:.6f}, bound {self.s}, "
            f"gap {self.gap:.3e}, {self.n_candidates} candidates)"
        )


def verify(
    design,
    model,
    prior,
    criterion,
    candidates,
    tolerance=1e-2,
    trace_tol=1e-8,
    estimator=None,
    store=None,
    threads=1,
):
    """Certify a design against the equivalence bound on a candidate set.

    The candidate set should be finer than (or at least cover) the grid the
    design was optimized on.  Returns a VerificationReport; ``passed`` is
    False whenever any candidate's sensitivity exceeds s * (1 + tolerance)
    or the design-weighted mean sensitivity misses s by more than
    ``trace_tol`` relative to s.
    """
    estimator = estimator if estimator is not None else _info.ExactSum()
    blocks = candidates.blocks if hasattr(candidates, "blocks") else tuple(candidates)
    params, wq, labels, s, b_nodes = _context(
        design, model, prior, criterion, estimator, store, threads
    )
    tensor = _info.fim_tensor(blocks, model, params, estimator, store=store, threads=threads)
    profile = np.einsum("n,nij,ncij->c", wq, b_nodes, tensor)
    own_tensor = _info.fim_tensor(
        design.blocks, model, params, estimator, store=store, threads=threads
    )
    own = np.einsum("n,nij,ncij->c", wq, b_nodes, own_tensor)
    trace_val = float(design.weight_array() @ own)
    bound = s * (1.0 + tolerance)
    over = np.flatnonzero(profile > bound)
    order = over[np.argsort(profile[over])[::-1]][:10]
    violations = tuple((blocks[i], float(profile[i])) for i in order)
    i_max = int(np.argmax(profile))
    max_sens = float(profile[i_max])
    passed = (over.size == 0) and (abs(trace_val - s) <= trace_tol * s)
    return VerificationReport(
        passed=bool(passed),
        s=int(s),
        tolerance=float(tolerance),
        max_sensitivity=max_sens,
        gap=float(max_sens / s - 1.0),
        argmax_block=blocks[i_max],
        trace_identity=trace_val,
        trace_tol=float(trace_tol),
        n_candidates=len(blocks),
        violations=violations,
    )
