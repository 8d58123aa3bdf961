"""Prediction-error-variance criteria for scoring candidate training sets.

Given marker (or principal-component score) blocks for a training set and a
fixed test set, these functions build the test-set prediction error variance
matrix of a linear marker model, up to the residual-variance constant:

* :func:`pev_ols` — exact least-squares form with a pseudo-inverse,
* :func:`pev_ridge` — ridge form, the quantity actually minimized,
* :func:`pev_pc` — the same ridge form on a truncated principal-component
  basis, cheap enough to sit inside a combinatorial search,

plus :func:`criterion_trace`, the scalar minimized during selection, and the
reliability complement :func:`reliability_vanraden` they are equivalent to.

Shrinkage scaling
-----------------
For ``K = M M' / m`` the identities implemented and pinned by the test suite
are (intercept-free, ``lam > 0``)::

    pev_ridge = (1/lam) * (M_te M_te' - M_te M_tr' (M_tr M_tr' + lam I)^-1 M_tr M_te')
              = (m/lam) * (K22 - K21 (K11 + (lam/m) I)^-1 K21')

so the kinship-side shrinkage is ``delta = lam / m`` and, conversely, a trait
heritability ``h2`` with ``delta = (1 - h2) / h2`` corresponds to the
marker-side shrinkage ``lam = m * delta``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ContractError

__all__ = [
    "CriterionConfig",
    "pev_ols",
    "pev_ridge",
    "pev_pc",
    "criterion_trace",
    "pc_criterion_trace",
    "TraceCriterion",
    "reliability_vanraden",
    "delta_from_heritability",
    "shrinkage_from_heritability",
]


def delta_from_heritability(h2: float) -> float:
    """Kinship-side shrinkage ``(1 - h2) / h2`` for a squared heritability h2."""
    if not 0.0 < h2 < 1.0:
        raise ContractError(f"heritability must lie in (0, 1), got {h2}")
    return (1.0 - h2) / h2


def shrinkage_from_heritability(h2: float, n_markers: int) -> float:
    """Marker-side ridge shrinkage implied by a heritability.

    ``lam = m * (1 - h2) / h2``; the ``m`` factor converts the kinship-side
    noise ratio into the marker-regression penalty (``K = M M' / m``).
    """
    if n_markers < 1:
        raise ContractError("n_markers must be at least 1")
    return n_markers * delta_from_heritability(h2)


@dataclass(frozen=True)
class CriterionConfig:
    """Settings for the selection criterion.

    Exactly one of ``lam`` and ``h2`` should normally be given; when both are
    None the default ``lam = 1.0`` applies (the criterion is insensitive to
    the exact value over a wide range).  ``k`` of None means choose the
    component count automatically when the PC basis is built.
    """

    lam: float = None
    h2: float = None
    k: int = None
    include_intercept: bool = True

    def __post_init__(self):
        if self.lam is not None and self.lam < 0:
            raise ContractError(f"lambda must be >= 0, got {self.lam}")
        if self.h2 is not None and not 0.0 < self.h2 < 1.0:
            raise ContractError(f"heritability must lie in (0, 1), got {self.h2}")
        if self.k is not None and self.k < 1:
            raise ContractError(f"k must be >= 1, got {self.k}")

    def resolved(self, n_markers: int) -> "CriterionConfig":
        """Copy with ``lam`` materialized (from h2, or the 1.0 default)."""
        if self.lam is not None:
            return self
        if self.h2 is not None:
            return replace(self, lam=shrinkage_from_heritability(self.h2, n_markers))
        return replace(self, lam=1.0)

    @property
    def effective_lambda(self) -> float:
        if self.lam is None:
            raise ContractError(
                "shrinkage not resolved; call resolved(n_markers) first"
            )
        return self.lam


def _augment(X: np.ndarray, include_intercept: bool) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not include_intercept:
        return X
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _check_shapes(train: np.ndarray, test: np.ndarray) -> None:
    train = np.atleast_2d(train)
    test = np.atleast_2d(test)
    if train.ndim != 2 or test.ndim != 2:
        raise ContractError("train and test blocks must be 2-d")
    if train.shape[1] != test.shape[1]:
        raise ContractError(
            f"column mismatch: train has {train.shape[1]}, test has {test.shape[1]}"
        )
    if train.shape[0] == 0 or test.shape[0] == 0:
        raise ContractError("train and test blocks must not be empty")


def pev_ols(train: np.ndarray, test: np.ndarray,
            include_intercept: bool = True) -> np.ndarray:
    """Least-squares prediction error variance of the test block.

    Computes ``B (A'A)^- B'`` with ``A``/``B`` the (optionally
    intercept-augmented) training/test blocks and ``^-`` the Moore-Penrose
    pseudo-inverse.  Singular values below ``max(n, p) * eps`` relative to the
    largest are treated as zero.
    """
    _check_shapes(train, test)
    A = _augment(train, include_intercept)
    B = _augment(test, include_intercept)
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((B.shape[0], B.shape[0]))
    cutoff = s[0] * max(A.shape) * np.finfo(float).eps
    r = int(np.sum(s > cutoff))
    # B (A'A)^- B' = (B V S^-1)(B V S^-1)'
    C = (B @ vt[:r].T) / s[:r]
    pev = C @ C.T
    return (pev + pev.T) / 2.0


def _ridge_pev(A: np.ndarray, B: np.ndarray, lam: float) -> np.ndarray:
    G = A.T @ A + lam * np.eye(A.shape[1])
    factor = cho_factor(G, lower=True)
    pev = B @ cho_solve(factor, B.T)
    return (pev + pev.T) / 2.0


def pev_ridge(train: np.ndarray, test: np.ndarray, lam: float,
              include_intercept: bool = True) -> np.ndarray:
    """Ridge prediction error variance ``B (A'A + lam I)^-1 B'``.

    ``lam = 0`` falls through to :func:`pev_ols`.  For every test direction v
    the ridge value ``v' PEV v`` is bounded by the least-squares one on
    full-rank problems.
    """
    if lam < 0:
        raise ContractError(f"lambda must be >= 0, got {lam}")
    if lam == 0:
        return pev_ols(train, test, include_intercept)
    _check_shapes(train, test)
    A = _augment(train, include_intercept)
    B = _augment(test, include_intercept)
    return _ridge_pev(A, B, lam)


def pev_pc(scores_train: np.ndarray, scores_test: np.ndarray, lam: float,
           include_intercept: bool = True) -> np.ndarray:
    """Ridge prediction error variance on a principal-component basis.

    Identical formula to :func:`pev_ridge` applied to score blocks sharing
    the same component count; requires strictly positive shrinkage.  At
    ``k = rank(M)`` this reproduces the full-marker ridge PEV exactly.
    """
    if lam <= 0:
        raise ContractError(f"the PC criterion requires lambda > 0, got {lam}")
    _check_shapes(scores_train, scores_test)
    A = _augment(scores_train, include_intercept)
    B = _augment(scores_test, include_intercept)
    return _ridge_pev(A, B, lam)


def criterion_trace(pev: np.ndarray) -> float:
    """Scalar selection criterion: the trace of a PEV matrix."""
    pev = np.atleast_2d(np.asarray(pev, dtype=float))
    if pev.shape[0] != pev.shape[1]:
        raise ContractError(f"PEV matrix must be square, got {pev.shape}")
    return float(np.trace(pev))


class TraceCriterion:
    """Trace of the PC prediction error variance for a fixed test block.

    Precomputes the test-side quantities once so that evaluating many
    candidate training subsets (the genetic-algorithm hot path) costs a
    single small factorization each.  Uses the identity

        tr[B (A'A + lam I)^-1 B'] = (tr[B B'] - tr[B A'(A A' + lam I)^-1 A B']) / lam

    whenever the training block has fewer rows than columns, which is exact
    algebra, not an approximation.
    """

    def __init__(self, scores_test: np.ndarray, lam: float,
                 include_intercept: bool = True):
        if lam <= 0:
            raise ContractError(f"the PC criterion requires lambda > 0, got {lam}")
        self.lam = float(lam)
        self.include_intercept = bool(include_intercept)
        self._B = _augment(scores_test, include_intercept)
        self._test_sq = float(np.sum(self._B * self._B))
        self._k = self._B.shape[1] - (1 if include_intercept else 0)

    def __call__(self, scores_train: np.ndarray) -> float:
        scores_train = np.atleast_2d(scores_train)
        if scores_train.shape[1] != self._k:
            raise ContractError(
                f"component mismatch: train has {scores_train.shape[1]}, "
                f"criterion expects {self._k}"
            )
        A = _augment(scores_train, self.include_intercept)
        B = self._B
        if A.shape[0] < A.shape[1]:
            # dual route: factorize the (n_train x n_train) Gram instead
            G = A @ A.T + self.lam * np.eye(A.shape[0])
            S = B @ A.T
            X = cho_solve(cho_factor(G, lower=True), S.T)
            return (self._test_sq - float(np.sum(S * X.T))) / self.lam
        G = A.T @ A + self.lam * np.eye(A.shape[1])
        X = cho_solve(cho_factor(G, lower=True), B.T)
        return float(np.sum(B * X.T))


def pc_criterion_trace(scores_train: np.ndarray, scores_test: np.ndarray,
                       lam: float, include_intercept: bool = True) -> float:
    """Trace of :func:`pev_pc` without forming the full matrix."""
    _check_shapes(scores_train, scores_test)
    return TraceCriterion(scores_test, lam, include_intercept)(scores_train)


def reliability_vanraden(k_cross: np.ndarray, k_train: np.ndarray,
                         delta: float) -> np.ndarray:
    """Reliability of test-set breeding value estimates from kinship blocks.

    ``k_cross (k_train + delta I)^-1 k_cross'`` where ``k_cross`` relates each
    test individual to the training individuals and ``k_train`` is the
    training-block kinship.  ``delta`` is the noise-to-genetic variance ratio
    (see :func:`delta_from_heritability`).
    """
    if delta <= 0:
        raise ContractError(f"delta must be > 0, got {delta}")
    k_cross = np.atleast_2d(np.asarray(k_cross, dtype=float))
    k_train = np.atleast_2d(np.asarray(k_train, dtype=float))
    if k_train.shape[0] != k_train.shape[1]:
        raise ContractError(f"training kinship must be square, got {k_train.shape}")
    if k_cross.shape[1] != k_train.shape[0]:
        raise ContractError(
            f"nonconformable blocks: cross {k_cross.shape}, train {k_train.shape}"
        )
    G = k_train + delta * np.eye(k_train.shape[0])
    rel = k_cross @ cho_solve(cho_factor(G, lower=True), k_cross.T)
    return (rel + rel.T) / 2.0
