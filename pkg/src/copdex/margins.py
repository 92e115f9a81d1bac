"""Marginal GLM specifications for unit-level responses.

A margin maps a treatment point to a response distribution through a linear
predictor on declared basis functions and an inverse link: Bernoulli with the
logit link or Poisson with the log link.  The module also provides the
windowed CDF evaluations that the information-matrix kernel consumes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, pdtr
from scipy.stats import poisson as _poisson_dist

from .errors import DomainError

__all__ = [
    "MarginalModelSpec",
    "basis_term",
    "features",
    "mean",
    "marginal_cdf_pmf",
    "truncation_bound",
    "window_bounds",
    "cdf_vector",
    "log_pmf_vector",
]

_RESPONSES = ("bernoulli", "poisson")
_LINK_FOR = {"bernoulli": "logit", "poisson": "log"}

# exp saturates near 709 in double precision
_ETA_MAX = 700.0


def basis_term(form, arg=None):
    """Build one canonical basis term.

    Forms: ``("intercept",)``, ``("linear", j)``, ``("quad", j)`` on factor
    coordinate j, and ``("indicator", level)`` matching a categorical level of
    the first factor.
    """
    if form == "intercept":
        if arg is not None:
            raise DomainError("intercept takes no argument")
        return ("intercept",)
    if form in ("linear", "quad"):
        j = int(arg)
        if j < 0:
            raise DomainError(f"{form} factor index must be nonnegative")
        return (form, j)
    if form == "indicator":
        level = int(arg)
        if level < 1:
            raise DomainError("indicator level must be a positive integer")
        return (form, level)
    raise DomainError(f"unknown basis form {form!r}")


@dataclass(frozen=True)
class MarginalModelSpec:
    """A marginal response model.

    Parameters
    ----------
    response : str
        ``"bernoulli"`` or ``"poisson"``.
    link : str
        ``"logit"`` for Bernoulli, ``"log"`` for Poisson; other pairings are
        rejected.
    basis : tuple of tuples
        Canonical basis terms (see :func:`basis_term`); its length is the
        number of marginal parameters.
    """

    response: str
    link: str
    basis: tuple

    def __post_init__(self):
        if self.response not in _RESPONSES:
            raise DomainError(f"unknown response {self.response!r}")
        if self.link != _LINK_FOR[self.response]:
            raise DomainError(
                f"{self.response} response pairs with the "
                f"{_LINK_FOR[self.response]} link, got {self.link!r}"
            )
        if not self.basis:
            raise DomainError("basis must be nonempty")
        object.__setattr__(
            self, "basis", tuple(basis_term(t[0], *t[1:]) for t in self.basis)
        )

    @property
    def r(self):
        """Number of marginal parameters."""
        return len(self.basis)


def features(spec, x):
    """Basis-function values at a treatment point.

    Parameters
    ----------
    spec : MarginalModelSpec
    x : array_like
        Factor coordinates; categorical levels ride on the first coordinate.

    Returns
    -------
    ndarray of shape (r,)
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty(len(spec.basis))
    for i, term in enumerate(spec.basis):
        kind = term[0]
        if kind == "intercept":
            out[i] = 1.0
        elif kind == "linear":
            out[i] = x[term[1]]
        elif kind == "quad":
            out[i] = x[term[1]] ** 2
        else:  # indicator
            out[i] = 1.0 if int(round(x[0])) == term[1] else 0.0
    return out


def _eta(spec, beta, x):
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (spec.r,):
        raise DomainError(f"beta must have length {spec.r}, got {beta.shape}")
    return float(features(spec, x) @ beta)


def mean(spec, beta, x):
    """Mean response at a treatment point.

    Applies the inverse link to the linear predictor.  A Poisson linear
    predictor beyond the double-precision exp range is saturated with a
    runtime warning rather than overflowing.
    """
    eta = _eta(spec, beta, x)
    if spec.response == "bernoulli":
        return float(expit(eta))
    if abs(eta) > _ETA_MAX:
        warnings.warn(
            "linear predictor saturated at the numeric range", RuntimeWarning
        )
        eta = float(np.clip(eta, -_ETA_MAX, _ETA_MAX))
    return float(np.exp(eta))


def marginal_cdf_pmf(spec, beta, x, y):
    """CDF and pmf of the margin at an outcome value.

    Returns
    -------
    (float, float)
        ``(F(y), p(y))`` with ``p(y) = F(y) - F(y - 1)`` and ``F(-1) = 0``.
    """
    y = int(y)
    if y < 0:
        raise DomainError("outcome y must be a nonnegative integer")
    mu = mean(spec, beta, x)
    if spec.response == "bernoulli":
        if y > 1:
            raise DomainError("bernoulli outcomes lie in {0, 1}")
        cdf = 1.0 - mu if y == 0 else 1.0
        pmf = 1.0 - mu if y == 0 else mu
        return cdf, pmf
    return float(pdtr(y, mu)), float(_poisson_dist.pmf(y, mu))


def truncation_bound(spec, beta, x, tail_tol):
    """Smallest N whose CDF reaches 1 - tail_tol.

    Bernoulli margins return 1 (finite support).  Poisson margins locate the
    bound from the quantile function and then refine it exactly against the
    regularized-gamma CDF.
    """
    tail_tol = float(tail_tol)
    if not 0.0 < tail_tol <= 1e-4:
        raise DomainError("tail_tol must lie in (0, 1e-4]")
    if spec.response == "bernoulli":
        return 1
    mu = mean(spec, beta, x)
    target = 1.0 - tail_tol
    n = int(_poisson_dist.isf(tail_tol, mu))
    while n > 0 and pdtr(n - 1, mu) >= target:
        n -= 1
    while pdtr(n, mu) < target:
        n += 1
    return n


def window_bounds(spec, beta, x, tail_tol=1e-8):
    """Outcome window [lo, hi] carrying all but a negligible tail mass.

    The lower edge sits 12 standard deviations below the mean (clipped at 0),
    the upper edge at :func:`truncation_bound`.
    """
    if spec.response == "bernoulli":
        return 0, 1
    mu = mean(spec, beta, x)
    lo = int(max(0, np.floor(mu - 12.0 * np.sqrt(mu))))
    hi = truncation_bound(spec, beta, x, tail_tol)
    return lo, max(hi, lo + 1)


def cdf_vector(spec, beta, x, lo, hi):
    """Margin CDF evaluated on [lo - 1, .., hi].

    The leading entry is F(lo - 1), so consecutive differences give the pmf
    on the window; F of any negative outcome is 0.
    """
    if spec.response == "bernoulli":
        mu = mean(spec, beta, x)
        full = np.array([0.0, 1.0 - mu, 1.0])
        return full[lo : hi + 2]
    mu = mean(spec, beta, x)
    ks = np.arange(lo - 1, hi + 1, dtype=float)
    return np.where(ks < 0.0, 0.0, pdtr(np.clip(ks, 0.0, None), mu))


def log_pmf_vector(spec, beta, x, lo, hi):
    """Margin log pmf evaluated on [lo, .., hi].

    Computed directly from the log-scale mass function, so deep-tail cells
    keep full relative accuracy instead of degrading through differences of
    near-equal CDF values.
    """
    if spec.response == "bernoulli":
        eta = _eta(spec, beta, x)
        full = np.array([-np.logaddexp(0.0, eta), -np.logaddexp(0.0, -eta)])
        return full[lo : hi + 1]
    mu = mean(spec, beta, x)
    return _poisson_dist.logpmf(np.arange(lo, hi + 1), mu)
