"""Design objects, prior quadrature, and robust design criteria.

A design is a finite set of canonical blocks with positive weights summing
to one.  Criteria are log-determinant functionals of the weighted information
matrix: the full-determinant form, the linear-combination form for a matrix
of interest A, and the subset form through a Schur complement.  Robust
(pseudo-Bayesian) values average the per-parameter-node functional over a
quadrature grid on the prior box.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import information as _info
from .errors import DomainError, SingularInformationError

__all__ = [
    "Design",
    "PriorSpec",
    "CriterionSpec",
    "criterion_d",
    "criterion_da",
    "criterion_ds",
    "quad_grid",
    "criterion_value",
    "efficiency",
]

_WEIGHT_SUM_TOL = 1e-6
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class Design:
    """An approximate block design: canonical blocks with normalized weights.

    Construction canonicalizes the state: unit order inside each block is
    sorted, duplicate blocks are merged with summed weights, blocks are
    sorted, and weights are renormalized to sum to one exactly.
    """

    blocks: tuple
    weights: tuple

    def __post_init__(self):
        blocks = [b.canonical() for b in self.blocks]
        weights = np.asarray(self.weights, dtype=float)
        if len(blocks) != weights.size or not blocks:
            raise DomainError("blocks and weights must be nonempty and aligned")
        if np.any(weights <= 0.0):
            raise DomainError("design weights must be positive")
        total = float(weights.sum())
        if abs(total - 1.0) > _WEIGHT_SUM_TOL:
            raise DomainError(
                f"design weights sum to {total:.8f}, expected 1 within "
                f"{_WEIGHT_SUM_TOL}"
            )
        merged = {}
        for b, w in zip(blocks, weights):
            merged[b.points] = merged.get(b.points, 0.0) + float(w)
        items = sorted(merged.items())
        out_blocks = tuple(_info.Block(pts) for pts, _ in items)
        out_weights = np.array([w for _, w in items])
        out_weights = out_weights / out_weights.sum()
        object.__setattr__(self, "blocks", out_blocks)
        object.__setattr__(self, "weights", tuple(float(w) for w in out_weights))

    @property
    def n_blocks(self):
        return len(self.blocks)

    def weight_array(self):
        return np.asarray(self.weights, dtype=float)


@dataclass(frozen=True)
class PriorSpec:
    """Point prior or uniform-box prior with a product quadrature rule.

    For the box kind, ``template`` supplies the dependence parameters and the
    estimable selection while the box spans the marginal parameters beta.
    """

    kind: str
    point: _info.ParameterPoint = None
    lower: tuple = None
    upper: tuple = None
    nodes_per_dim: int = 3
    template: _info.ParameterPoint = None

    def __post_init__(self):
        if self.kind == "point":
            if self.point is None:
                raise DomainError("point prior requires a parameter point")
            return
        if self.kind != "box":
            raise DomainError(f"unknown prior kind {self.kind!r}")
        if self.template is None:
            raise DomainError("box prior requires a template parameter point")
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lower) != len(upper) or not lower:
            raise DomainError("box bounds must be nonempty and aligned")
        if not all(np.isfinite(lower)) or not all(np.isfinite(upper)):
            raise DomainError("box bounds must be finite")
        if any(lo >= hi for lo, hi in zip(lower, upper)):
            raise DomainError("box requires lower < upper in every dimension")
        if len(lower) != self.template.r:
            raise DomainError("box dimension must match the beta length")
        if self.nodes_per_dim < 1:
            raise DomainError("nodes_per_dim must be at least 1")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)


def quad_grid(prior):
    """Quadrature nodes and weights representing the prior.

    A point prior yields a single node of weight one.  A box prior yields the
    product Gauss-Legendre rule mapped to the box, with weights normalized to
    sum to one (a uniform prior average).

    Returns
    -------
    list of (ParameterPoint, float)
    """
    if prior.kind == "point":
        return [(prior.point, 1.0)]
    d = len(prior.lower)
    x, w = np.polynomial.legendre.leggauss(prior.nodes_per_dim)
    axes = []
    axis_w = []
    for lo, hi in zip(prior.lower, prior.upper):
        axes.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        axis_w.append(0.5 * w)
    mesh = np.meshgrid(*axes, indexing="ij")
    mesh_w = np.meshgrid(*axis_w, indexing="ij")
    betas = np.stack([m.reshape(-1) for m in mesh], axis=1)
    weights = np.prod(np.stack([m.reshape(-1) for m in mesh_w], axis=1), axis=1)
    weights = weights / weights.sum()
    template = prior.template
    out = []
    for b_row, wq in zip(betas, weights):
        node = _info.ParameterPoint(
            beta=tuple(b_row),
            alpha=template.alpha,
            estimable_mask=template.estimable_mask,
        )
        out.append((node, float(wq)))
    return out


@dataclass(frozen=True)
class CriterionSpec:
    """Log-determinant design criterion.

    kind ``"D"`` uses the full matrix; ``"DA"`` uses the linear combinations
    in the column matrix A; ``"Ds"`` targets a named subset of estimable
    coordinates through the Schur complement.
    """

    kind: str
    A: tuple = None
    interest: tuple = None

    def __post_init__(self):
        if self.kind not in ("D", "DA", "Ds"):
            raise DomainError(f"unknown criterion kind {self.kind!r}")
        if self.kind == "DA":
            if self.A is None:
                raise DomainError("DA criterion requires a matrix A")
            arr = np.asarray(self.A, dtype=float)
            if arr.ndim != 2 or arr.shape[1] < 1:
                raise DomainError("A must be a matrix with at least one column")
            object.__setattr__(
                self, "A", tuple(tuple(float(v) for v in row) for row in arr)
            )
        if self.kind == "Ds":
            if not self.interest:
                raise DomainError("Ds criterion requires a nonempty interest set")
            object.__setattr__(self, "interest", tuple(self.interest))

    def s_for(self, labels):
        """Criterion dimension s given the estimable coordinate labels."""
        if self.kind == "D":
            return len(labels)
        if self.kind == "DA":
            return len(self.A[0])
        return len(self._interest_indices(labels))

    def _interest_indices(self, labels):
        idx = []
        for item in self.interest:
            if isinstance(item, str):
                if item not in labels:
                    raise DomainError(
                        f"interest coordinate {item!r} is not estimable; "
                        f"estimable coordinates are {labels}"
                    )
                idx.append(labels.index(item))
            else:
                i = int(item)
                if not 0 <= i < len(labels):
                    raise DomainError(f"interest index {i} out of range")
                idx.append(i)
        if len(set(idx)) != len(idx):
            raise DomainError("interest coordinates must be distinct")
        if len(idx) >= len(labels):
            raise DomainError("interest set must be a proper subset")
        return idx

    def a_matrix(self, labels):
        """The equivalent column matrix A of shape (q, s), or None for D."""
        q = len(labels)
        if self.kind == "D":
            return None
        if self.kind == "DA":
            arr = np.asarray(self.A, dtype=float)
            if arr.shape[0] != q:
                raise DomainError(
                    f"A has {arr.shape[0]} rows but there are {q} estimable "
                    "coordinates"
                )
            if arr.shape[1] >= q:
                raise DomainError("A must have fewer columns than rows")
            if np.linalg.matrix_rank(arr) < arr.shape[1]:
                raise DomainError("A must have full column rank")
            return arr
        idx = self._interest_indices(labels)
        arr = np.zeros((q, len(idx)))
        for col, i in enumerate(idx):
            arr[i, col] = 1.0
        return arr


def criterion_d():
    return CriterionSpec(kind="D")


def criterion_da(A):
    return CriterionSpec(kind="DA", A=tuple(tuple(row) for row in np.asarray(A, dtype=float)))


def criterion_ds(interest):
    return CriterionSpec(kind="Ds", interest=tuple(interest))


def _check_conditioning(m_mat, node_index, gamma):
    eig = np.linalg.eigvalsh(m_mat)
    if eig[-1] <= 0.0 or eig[0] <= 0.0 or eig[-1] / eig[0] > _COND_LIMIT:
        where = (
            f" (gamma = {np.round(gamma, 6).tolist()})" if gamma is not None else ""
        )
        raise SingularInformationError(
            f"information matrix is singular or ill-conditioned at quadrature "
            f"node {node_index}{where}",
            node_index=node_index,
            gamma=gamma,
        )


def node_values(m_nodes, criterion, labels, nodes=None):
    """Per-node criterion values for a stack of design information matrices.

    Raises SingularInformationError naming the offending node.
    """
    a_mat = criterion.a_matrix(labels)
    vals = np.empty(len(m_nodes))
    for ni, m_mat in enumerate(m_nodes):
        gamma = nodes[ni][0].gamma if nodes is not None else None
        _check_conditioning(m_mat, ni, gamma)
        if criterion.kind == "D":
            vals[ni] = np.linalg.slogdet(m_mat)[1]
        else:
            inner = a_mat.T @ np.linalg.solve(m_mat, a_mat)
            sign, logdet = np.linalg.slogdet(inner)
            if sign <= 0.0:
                raise SingularInformationError(
                    f"A^T M^-1 A is singular at quadrature node {ni}",
                    node_index=ni,
                    gamma=gamma,
                )
            vals[ni] = -logdet
    return vals


def sensitivity_weight_matrices(m_nodes, criterion, labels):
    """Per-node matrices B with sensitivity(block) = sum_n w_n tr(B_n M_n(block))."""
    a_mat = criterion.a_matrix(labels)
    out = np.empty_like(m_nodes)
    for ni, m_mat in enumerate(m_nodes):
        _check_conditioning(m_mat, ni, None)
        if criterion.kind == "D":
            out[ni] = np.linalg.inv(m_mat)
        else:
            x = np.linalg.solve(m_mat, a_mat)
            inner = np.linalg.inv(a_mat.T @ x)
            out[ni] = x @ inner @ x.T
    return out


def design_matrices(design, model, nodes, estimator, store=None, threads=1):
    """Stack of design information matrices, one per quadrature node."""
    params = [p for p, _ in nodes]
    tensor = _info.fim_tensor(
        design.blocks, model, params, estimator, store=store, threads=threads
    )
    w = design.weight_array()
    return np.einsum("c,ncij->nij", w, tensor)


def criterion_value(design, model, prior, criterion, estimator=None, store=None, threads=1):
    """Robust criterion value: the quadrature-weighted average of the
    per-node log-determinant functional (larger is better)."""
    estimator = estimator if estimator is not None else _info.ExactSum()
    nodes = quad_grid(prior)
    labels = _labels_for(model, nodes[0][0])
    m_nodes = design_matrices(design, model, nodes, estimator, store, threads)
    vals = node_values(m_nodes, criterion, labels, nodes)
    wq = np.array([w for _, w in nodes])
    return float(wq @ vals)


def efficiency(design, reference, model, prior, criterion, estimator=None, store=None, threads=1):
    """Relative efficiency of ``design`` against ``reference``:
    exp((Psi(design) - Psi(reference)) / s)."""
    nodes = quad_grid(prior)
    labels = _labels_for(model, nodes[0][0])
    s = criterion.s_for(labels)
    psi_d = criterion_value(design, model, prior, criterion, estimator, store, threads)
    psi_r = criterion_value(reference, model, prior, criterion, estimator, store, threads)
    return float(np.exp((psi_d - psi_r) / s))


def _labels_for(model, param):
    names = model.coordinate_names()
    return tuple(names[i] for i in param.estimable_indices())
