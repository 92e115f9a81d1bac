"""Joint block distributions and Fisher information matrices.

The joint pmf of a block couples the unit margins through a copula: the
probability of an outcome vector is the copula volume of the rectangle whose
corners are consecutive margin CDF values.  Information matrices are computed
through the identity FIM = E[score score^T], with scores obtained by central
finite differences of the log joint pmf in the estimable parameters.

Two expectation backends are provided: exact summation over a truncated
outcome window, and a seeded Monte Carlo estimator that shares one copula
sample across every block and parameter node so that repeated evaluations are
deterministic and cache-friendly.
"""

from __future__ import annotations

import hashlib
import os
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product as _iter_product

import numpy as np

from . import copula as _cop
from . import margins as _marg
from .errors import (
    DomainError,
    ExcludedOutcomeError,
    GridTooLargeError,
)

__all__ = [
    "Block",
    "BlockModel",
    "ParameterPoint",
    "InfoMatrix",
    "ExactSum",
    "MonteCarlo",
    "FimStore",
    "default_store",
    "joint_pmf",
    "score",
    "block_fim",
    "design_fim",
    "fim_tensor",
]

# finite-difference step floor and relative scale
_FD_ABS = 1e-5
_FD_REL = 1e-5

_ROUND = 12


def _canonical_point(x):
    return tuple(round(float(v), _ROUND) for v in np.atleast_1d(x))


@dataclass(frozen=True)
class Block:
    """An ordered group of k treatment points sharing one copula.

    The supported copulas are exchangeable, so blocks are canonicalized by
    sorting their points lexicographically.
    """

    points: tuple

    def __post_init__(self):
        pts = tuple(_canonical_point(p) for p in self.points)
        if len(pts) < 2:
            raise DomainError("a block needs at least two units")
        m = len(pts[0])
        if any(len(p) != m for p in pts):
            raise DomainError("all block points must share one factor dimension")
        object.__setattr__(self, "points", pts)

    @property
    def k(self):
        return len(self.points)

    @property
    def m(self):
        return len(self.points[0])

    def canonical(self):
        """The same block with unit order sorted."""
        return Block(tuple(sorted(self.points)))


@dataclass(frozen=True)
class BlockModel:
    """Marginal model plus copula family for blocks of size k."""

    margin: _marg.MarginalModelSpec
    copula_family: str
    k: int = 2

    def __post_init__(self):
        if self.copula_family not in _cop.FAMILIES:
            raise DomainError(f"unknown copula family {self.copula_family!r}")
        if self.k < 2:
            raise DomainError("block size k must be at least 2")

    @property
    def n_alpha(self):
        """Number of dependence parameters (0 for the product family)."""
        return 0 if self.copula_family == "product" else 1

    def coordinate_names(self):
        names = [f"beta{i}" for i in range(self.margin.r)]
        if self.n_alpha:
            names.append("alpha")
        return tuple(names)

    def signature(self):
        return (
            self.margin.response,
            self.margin.link,
            self.margin.basis,
            self.copula_family,
            self.k,
        )


@dataclass(frozen=True)
class ParameterPoint:
    """A full parameter vector with its estimable-coordinate selection.

    gamma concatenates the marginal parameters beta with the dependence
    parameters alpha; ``estimable_mask`` selects which coordinates carry
    information-matrix rows.
    """

    beta: tuple
    alpha: tuple = ()
    estimable_mask: tuple = None

    def __post_init__(self):
        beta = tuple(float(v) for v in np.atleast_1d(self.beta))
        alpha = tuple(float(v) for v in np.atleast_1d(self.alpha)) if len(
            np.atleast_1d(self.alpha)
        ) else ()
        mask = self.estimable_mask
        if mask is None:
            mask = (True,) * len(beta) + (False,) * len(alpha)
        mask = tuple(bool(b) for b in mask)
        if len(mask) != len(beta) + len(alpha):
            raise DomainError("estimable mask length must equal len(beta) + len(alpha)")
        if not any(mask):
            raise DomainError("at least one coordinate must be estimable")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "estimable_mask", mask)

    @property
    def gamma(self):
        return np.array(self.beta + self.alpha, dtype=float)

    @property
    def r(self):
        return len(self.beta)

    @property
    def n_alpha(self):
        return len(self.alpha)

    @property
    def q(self):
        return int(sum(self.estimable_mask))

    def estimable_indices(self):
        return np.flatnonzero(np.asarray(self.estimable_mask))

    def with_gamma(self, gamma):
        """Same estimable selection at a new full parameter vector."""
        gamma = np.asarray(gamma, dtype=float)
        if gamma.shape != (self.r + self.n_alpha,):
            raise DomainError("gamma length mismatch")
        return ParameterPoint(
            beta=tuple(gamma[: self.r]),
            alpha=tuple(gamma[self.r :]),
            estimable_mask=self.estimable_mask,
        )


def make_parameter(beta, alpha=(), include_dependence=False):
    """Build a ParameterPoint with the conventional estimable selection:
    every beta coordinate, plus the alpha coordinates when requested."""
    beta = tuple(float(v) for v in np.atleast_1d(beta))
    alpha_arr = np.atleast_1d(alpha) if np.ndim(alpha) else np.array([alpha])
    alpha = tuple(float(v) for v in alpha_arr) if alpha_arr.size else ()
    mask = (True,) * len(beta) + (bool(include_dependence),) * len(alpha)
    return ParameterPoint(beta=beta, alpha=alpha, estimable_mask=mask)


@dataclass(frozen=True)
class InfoMatrix:
    """A symmetric information matrix with coordinate labels.

    ``se`` carries per-entry Monte Carlo standard errors when the estimator
    reports them, else None.
    """

    matrix: np.ndarray
    labels: tuple
    se: np.ndarray = None


@dataclass(frozen=True)
class ExactSum:
    """Exact expectation over the truncated outcome window."""

    cell_budget: int = 10 ** 6
    tail_tol: float = 1e-8

    def signature(self):
        return ("exact", self.cell_budget, self.tail_tol)


@dataclass(frozen=True)
class MonteCarlo:
    """Seeded Monte Carlo expectation using conditional-inverse sampling."""

    n: int = 20000
    seed: int = 0
    tail_tol: float = 1e-8

    def __post_init__(self):
        if self.n < 10 ** 3:
            raise DomainError("Monte Carlo estimator requires n >= 1000")

    def signature(self):
        return ("monte_carlo", self.n, self.seed, self.tail_tol)


# ---------------------------------------------------------------------------
# joint pmf and pointwise scores


def _check_block(block, model):
    if block.k != model.k:
        raise DomainError(
            f"block has {block.k} units but the model couples {model.k}"
        )


def _log_joint_pmf_at(model, gamma, block, y, tail_tol=1e-8):
    """Log joint pmf at one outcome for a raw gamma vector (extended range)."""
    r = model.margin.r
    beta = gamma[:r]
    alpha = gamma[r] if model.n_alpha else None
    fam = model.copula_family
    t_corners = np.empty((block.k, 2))
    for j, (x, yj) in enumerate(zip(block.points, y)):
        yj = int(yj)
        f_hi, p = _marg.marginal_cdf_pmf(model.margin, beta, x, yj)
        f_lo = f_hi - p
        with np.errstate(divide="ignore"):
            ln_pair = np.log(np.clip([f_lo, f_hi], 0.0, 1.0))
        t_corners[j] = _cop.generator_transform(fam, ln_pair, alpha)
    total = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for bits in _iter_product((0, 1), repeat=block.k):
            t_sum = sum(t_corners[j, b] for j, b in enumerate(bits))
            val = float(np.exp(_cop.log_inv_generator(fam, t_sum, alpha)))
            if not np.isfinite(val):
                val = 0.0
            sign = (-1.0) ** (block.k - sum(bits))
            total += sign * val
    if total <= 0.0:
        return -np.inf
    return float(np.log(total))


def joint_pmf(block, model, param, y, tail_tol=1e-8):
    """Joint probability of the outcome vector y in one block.

    Computed as the copula volume of the cell with corners at the margin CDF
    values F(y_j - 1) and F(y_j).
    """
    _check_block(block, model)
    y = np.atleast_1d(y)
    if y.shape != (block.k,):
        raise DomainError("outcome vector length must equal the block size")
    lp = _log_joint_pmf_at(model, param.gamma, block, y, tail_tol)
    return float(np.exp(lp)) if np.isfinite(lp) else 0.0


def _fd_steps(gamma, est_idx):
    return np.maximum(_FD_ABS, _FD_REL * np.abs(gamma[est_idx]))


def score(block, model, param, y, tail_tol=1e-8):
    """Central finite-difference score of the log joint pmf at y.

    Raises ExcludedOutcomeError when the pmf vanishes at the base parameter
    or under any perturbation, signalling a zero-probability cell.
    """
    _check_block(block, model)
    gamma = param.gamma
    est_idx = param.estimable_indices()
    h = _fd_steps(gamma, est_idx)
    base = _log_joint_pmf_at(model, gamma, block, y, tail_tol)
    if not np.isfinite(base):
        raise ExcludedOutcomeError(
            f"outcome {tuple(int(v) for v in np.atleast_1d(y))} has vanishing probability"
        )
    out = np.empty(len(est_idx))
    for i, (v, hv) in enumerate(zip(est_idx, h)):
        g_plus = gamma.copy()
        g_plus[v] += hv
        g_minus = gamma.copy()
        g_minus[v] -= hv
        lp_p = _log_joint_pmf_at(model, g_plus, block, y, tail_tol)
        lp_m = _log_joint_pmf_at(model, g_minus, block, y, tail_tol)
        if not (np.isfinite(lp_p) and np.isfinite(lp_m)):
            raise ExcludedOutcomeError(
                "pmf vanishes under a finite-difference perturbation"
            )
        out[i] = (lp_p - lp_m) / (2.0 * hv)
    return out


# ---------------------------------------------------------------------------
# bulk FIM kernel


@lru_cache(maxsize=8)
def _copula_sample(family, alpha, n, seed):
    spec = _cop.CopulaSpec(family, alpha, 2)
    return _cop.sample_pairs(spec, n, seed=seed, engine="pcg")


class _NodeTables:
    """Per-parameter-node margin tables shared by every block.

    For each distinct treatment point this holds the base outcome window, the
    per-FD-setting generator-transform vectors on that window, and (for Monte
    Carlo) the per-unit-column sampled window indices.
    """

    def __init__(self, model, gamma, est_idx, h, points, estimator):
        self.model = model
        margin = model.margin
        fam = model.copula_family
        r = margin.r
        base_alpha = gamma[r] if model.n_alpha else None
        # settings: per estimable coordinate, the +h and -h gamma vectors
        self.settings = []
        for v, hv in zip(est_idx, h):
            for sgn in (1.0, -1.0):
                g = gamma.copy()
                g[v] += sgn * hv
                self.settings.append(g)
        mc = isinstance(estimator, MonteCarlo)
        if mc:
            sample = _copula_sample(
                fam, base_alpha, estimator.n, estimator.seed
            )
        # independence blocks factor into margin pmfs, so their cells are
        # summed on the log-pmf scale at full relative accuracy instead of
        # through the corner inclusion-exclusion, which cancels catastrophically
        # on deep-tail cells
        self.factorized = fam == "product"
        self.win = {}
        self.t_base = {}
        self.t_set = {}
        self.pm_base = {}
        self.pm_set = {}
        self.idx_cols = {}
        tail = estimator.tail_tol
        for x in points:
            beta = gamma[:r]
            lo, hi = _marg.window_bounds(margin, beta, x, tail)
            self.win[x] = (lo, hi)
            if self.factorized:
                self.pm_base[x] = _marg.log_pmf_vector(margin, beta, x, lo, hi)
                self.pm_set[x] = [
                    _marg.log_pmf_vector(margin, g[:r], x, lo, hi)
                    for g in self.settings
                ]
            else:
                f_base = _marg.cdf_vector(margin, beta, x, lo, hi)
                with np.errstate(divide="ignore"):
                    ln_base = np.log(np.clip(f_base, 0.0, 1.0))
                self.t_base[x] = _transform_vec(fam, ln_base, base_alpha)
                per_setting = []
                for g in self.settings:
                    s_alpha = g[r] if model.n_alpha else None
                    if np.array_equal(g[:r], beta):
                        # dependence-only perturbation reuses the base margins
                        per_setting.append(_transform_vec(fam, ln_base, s_alpha))
                        continue
                    f_s = _marg.cdf_vector(margin, g[:r], x, lo, hi)
                    with np.errstate(divide="ignore"):
                        ln_s = np.log(np.clip(f_s, 0.0, 1.0))
                    per_setting.append(_transform_vec(fam, ln_s, s_alpha))
                self.t_set[x] = per_setting
            if mc:
                if self.factorized:
                    f_base = _marg.cdf_vector(margin, beta, x, lo, hi)
                width = hi - lo + 1
                cols = []
                for col in range(2):
                    i = np.searchsorted(f_base[1:], sample[:, col], side="left")
                    cols.append(np.minimum(i, width - 1).astype(np.int64))
                self.idx_cols[x] = cols
        self.n_mc = estimator.n if mc else None


def _transform_vec(family, ln_f, alpha):
    # ln F = -inf at a zero-CDF corner maps to the generator's absorbing
    # value in every family, so no special-casing is needed
    with np.errstate(over="ignore", invalid="ignore"):
        return np.asarray(_cop.generator_transform(family, ln_f, alpha), dtype=float)


def _cell_log_probs(family, alpha, t_vecs, idx_vecs):
    """Log cell probabilities for per-unit transform vectors and cell indices."""
    k = len(t_vecs)
    total = None
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for bits in _iter_product((0, 1), repeat=k):
            t_sum = None
            for j, b in enumerate(bits):
                t = t_vecs[j][idx_vecs[j] + b]
                t_sum = t if t_sum is None else t_sum + t
            vals = np.exp(_cop.log_inv_generator(family, t_sum, alpha))
            vals = np.where(np.isfinite(vals), vals, 0.0)
            sign = (-1.0) ** (k - sum(bits))
            total = sign * vals if total is None else total + sign * vals
        lp = np.log(total)
    lp[~np.isfinite(lp)] = -np.inf
    return lp


def _factor_log_probs(pm_vecs, idx_vecs):
    """Log cell probabilities for independence blocks: sums of margin log pmfs."""
    total = pm_vecs[0][idx_vecs[0]]
    for j in range(1, len(pm_vecs)):
        total = total + pm_vecs[j][idx_vecs[j]]
    return total


def _block_cells(tables, block, estimator):
    """Cell index vectors and weights for one block under an estimator."""
    wins = [tables.win[x] for x in block.points]
    widths = [hi - lo + 1 for lo, hi in wins]
    if isinstance(estimator, ExactSum):
        total = int(np.prod(widths))
        if total > estimator.cell_budget:
            raise GridTooLargeError(
                f"outcome grid has {total} cells, above the exact-summation "
                f"budget of {estimator.cell_budget}; switch to the MonteCarlo "
                "estimator"
            )
        flat = np.arange(total, dtype=np.int64)
        idx_vecs = []
        rem = flat
        for w in reversed(widths):
            idx_vecs.append(rem % w)
            rem = rem // w
        idx_vecs.reverse()
        return idx_vecs, None
    if block.k != 2:
        raise DomainError("Monte Carlo estimation supports blocks of size 2")
    i1 = tables.idx_cols[block.points[0]][0]
    i2 = tables.idx_cols[block.points[1]][1]
    w2 = widths[1]
    flat = i1 * w2 + i2
    grid = widths[0] * w2
    if grid <= 1 << 22:
        counts = np.bincount(flat, minlength=grid)
        nz = np.flatnonzero(counts)
        weights = counts[nz].astype(float) / tables.n_mc
        return [nz // w2, nz % w2], weights
    uniq, counts = np.unique(flat, return_counts=True)
    weights = counts.astype(float) / tables.n_mc
    return [uniq // w2, uniq % w2], weights


def _fims_at_node(model, gamma, est_idx, h, blocks, estimator, with_se):
    fam = model.copula_family
    r = model.margin.r
    q = len(est_idx)
    points = sorted({x for b in blocks for x in b.points})
    tables = _NodeTables(model, gamma, est_idx, h, points, estimator)
    base_alpha = gamma[r] if model.n_alpha else None
    out = np.empty((len(blocks), q, q))
    out_se = np.empty((len(blocks), q, q)) if with_se else None
    for ci, block in enumerate(blocks):
        idx_vecs, mc_weights = _block_cells(tables, block, estimator)
        if mc_weights is None:
            if tables.factorized:
                base_lp = _factor_log_probs(
                    [tables.pm_base[x] for x in block.points], idx_vecs
                )
            else:
                t_base = [tables.t_base[x] for x in block.points]
                base_lp = _cell_log_probs(fam, base_alpha, t_base, idx_vecs)
            with np.errstate(over="ignore"):
                weights = np.exp(base_lp)
            mask = weights > 0.0
        else:
            weights = mc_weights
            mask = np.ones(weights.shape, dtype=bool)
        scores = np.empty((q, len(weights)))
        for vi in range(q):
            if tables.factorized:
                lp_p = _factor_log_probs(
                    [tables.pm_set[x][2 * vi] for x in block.points], idx_vecs
                )
                lp_m = _factor_log_probs(
                    [tables.pm_set[x][2 * vi + 1] for x in block.points], idx_vecs
                )
            else:
                t_plus = [tables.t_set[x][2 * vi] for x in block.points]
                t_minus = [tables.t_set[x][2 * vi + 1] for x in block.points]
                alpha_p = tables.settings[2 * vi][r] if model.n_alpha else None
                alpha_m = tables.settings[2 * vi + 1][r] if model.n_alpha else None
                lp_p = _cell_log_probs(fam, alpha_p, t_plus, idx_vecs)
                lp_m = _cell_log_probs(fam, alpha_m, t_minus, idx_vecs)
            mask &= np.isfinite(lp_p) & np.isfinite(lp_m)
            # cells masked above may hold -inf - -inf; the NaN is discarded
            with np.errstate(invalid="ignore"):
                scores[vi] = (lp_p - lp_m) / (2.0 * h[vi])
        sc = scores[:, mask]
        w = weights[mask]
        fim = np.einsum("c,ic,jc->ij", w, sc, sc)
        fim = 0.5 * (fim + fim.T)
        out[ci] = fim
        if with_se:
            if mc_weights is None:
                out_se[ci] = 0.0
            else:
                second = np.einsum("c,ic,jc->ij", w, sc ** 2, sc ** 2)
                var = np.clip(second - fim ** 2, 0.0, None) / tables.n_mc
                out_se[ci] = np.sqrt(var)
    return out, out_se


def _prepare(model, param):
    if model.n_alpha != param.n_alpha:
        raise DomainError(
            "parameter point carries a different number of dependence "
            "parameters than the model's copula family"
        )
    if param.r != model.margin.r:
        raise DomainError("beta length must match the margin basis size")
    gamma = param.gamma
    est_idx = param.estimable_indices()
    h = _fd_steps(gamma, est_idx)
    return gamma, est_idx, h


def _labels(model, param):
    names = model.coordinate_names()
    return tuple(names[i] for i in param.estimable_indices())


def block_fim(block, model, param, estimator=ExactSum()):
    """Fisher information of one block at one parameter point.

    Exact summation is deterministic; Monte Carlo is deterministic given its
    seed and reports a per-entry standard error.
    """
    _check_block(block, model)
    gamma, est_idx, h = _prepare(model, param)
    with_se = isinstance(estimator, MonteCarlo)
    fims, ses = _fims_at_node(
        model, gamma, est_idx, h, [block.canonical()], estimator, with_se
    )
    return InfoMatrix(
        matrix=fims[0],
        labels=_labels(model, param),
        se=ses[0] if with_se else None,
    )


def design_fim(design, model, param, estimator=ExactSum()):
    """Weighted information matrix of a design: the convex combination of its
    block FIMs."""
    blocks = [b.canonical() for b in design.blocks]
    for b in blocks:
        _check_block(b, model)
    gamma, est_idx, h = _prepare(model, param)
    fims, _ = _fims_at_node(model, gamma, est_idx, h, blocks, estimator, False)
    weights = np.asarray(design.weights, dtype=float)
    return InfoMatrix(
        matrix=np.einsum("c,cij->ij", weights, fims),
        labels=_labels(model, param),
        se=None,
    )


# ---------------------------------------------------------------------------
# caching


class FimStore:
    """In-memory (and optionally on-disk) store for bulk FIM tensors.

    Keys are content hashes over the model, parameter nodes, blocks, and
    estimator, so entries are immutable and safe to delete.
    """

    def __init__(self, cache_dir=None):
        self.cache_dir = cache_dir
        self._memory = {}
        self._lock = threading.Lock()
        if cache_dir:
            os.makedirs(cache_dir, exist_ok=True)

    def get(self, key):
        with self._lock:
            if key in self._memory:
                return self._memory[key]
        if self.cache_dir:
            path = os.path.join(self.cache_dir, key + ".npz")
            if os.path.exists(path):
                with np.load(path) as data:
                    fim = data["fim"]
                    se = data["se"] if "se" in data.files else None
                with self._lock:
                    self._memory[key] = (fim, se)
                return fim, se
        return None

    def put(self, key, fim, se=None):
        with self._lock:
            self._memory[key] = (fim, se)
        if self.cache_dir:
            path = os.path.join(self.cache_dir, key + ".npz")
            tmp = path + ".tmp"
            arrays = {"fim": fim}
            if se is not None:
                arrays["se"] = se
            with open(tmp, "wb") as fh:
                np.savez(fh, **arrays)
            os.replace(tmp, path)


_DEFAULT_STORE = None


def default_store():
    """Process-wide store, with a disk layer when COPDEX_CACHE_DIR is set."""
    global _DEFAULT_STORE
    cache_dir = os.environ.get("COPDEX_CACHE_DIR") or None
    if _DEFAULT_STORE is None or _DEFAULT_STORE.cache_dir != cache_dir:
        _DEFAULT_STORE = FimStore(cache_dir)
    return _DEFAULT_STORE


def _group_key(blocks, model, params, estimator):
    payload = repr(
        (
            model.signature(),
            estimator.signature(),
            tuple(b.points for b in blocks),
            tuple(
                (p.beta, p.alpha, p.estimable_mask) for p in params
            ),
        )
    ).encode()
    return hashlib.sha256(payload).hexdigest()


def fim_tensor(
    blocks,
    model,
    params,
    estimator=ExactSum(),
    store=None,
    threads=1,
    with_se=False,
):
    """Information matrices for every (parameter node, block) pair.

    Parameters
    ----------
    blocks : sequence of Block
    model : BlockModel
    params : sequence of ParameterPoint
        All must share one estimable selection.
    estimator : ExactSum or MonteCarlo
    store : FimStore, optional
        Defaults to the process-wide store.
    threads : int
        Worker threads mapped over parameter nodes; results are identical
        for any thread count.
    with_se : bool
        Also return the per-entry standard-error tensor (zeros for exact).

    Returns
    -------
    ndarray of shape (n_nodes, n_blocks, q, q), and the matching standard
    error tensor when ``with_se``.
    """
    blocks = [b.canonical() for b in blocks]
    params = list(params)
    if not params:
        raise DomainError("at least one parameter node is required")
    mask0 = params[0].estimable_mask
    if any(p.estimable_mask != mask0 for p in params):
        raise DomainError("all parameter nodes must share one estimable mask")
    for b in blocks:
        _check_block(b, model)
    store = store if store is not None else default_store()
    key = _group_key(blocks, model, params, estimator)
    hit = store.get(key)
    if hit is not None:
        fim, se = hit
        return (fim, se) if with_se else fim
    q = params[0].q
    out = np.empty((len(params), len(blocks), q, q))
    out_se = np.empty_like(out)

    def run_node(ni):
        gamma, est_idx, h = _prepare(model, params[ni])
        fims, ses = _fims_at_node(model, gamma, est_idx, h, blocks, estimator, True)
        out[ni] = fims
        out_se[ni] = ses

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_node, range(len(params))))
    else:
        for ni in range(len(params)):
            run_node(ni)
    store.put(key, out, out_se)
    return (out, out_se) if with_se else out
