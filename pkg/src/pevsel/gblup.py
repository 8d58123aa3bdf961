"""Kinship-based mixed model for validating a selected training set.

Fits ``y = X b + Z g + e`` with an intercept-only ``X``, one record per
genotype (``Z`` selects training rows), ``g ~ N(0, sigma_g2 * K)`` and
``e ~ N(0, sigma_e2 * I)``.  Variance components are estimated by REML: a
single spectral decomposition of the training-block kinship reduces the
restricted likelihood to a one-dimensional profile over the variance ratio
``sigma_g2 / sigma_e2``, which is maximized by a dense log-grid sweep plus
local refinement.  Breeding values for all genotypes covered by ``K`` follow
from ``g_hat = sigma_g2 * K[:, train] V^-1 (y - X b_hat)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ContractError, DataError, DegenerateInputError, NumericalError
from .markers import KinshipMatrix, PhenotypeVector

logger = logging.getLogger(__name__)

__all__ = [
    "MixedModelFit",
    "AccuracyReport",
    "restricted_loglik",
    "fit_spmm",
    "predict_gebv",
    "accuracy",
]

RATIO_BOUNDS = (1e-5, 1e5)
_RATIO_HARD_BOUNDS = (1e-10, 1e10)
_GRID_POINTS = 513


@dataclass(frozen=True)
class MixedModelFit:
    """REML estimates and breeding-value predictions of the kinship model."""

    ids: tuple
    train_ids: tuple
    beta: np.ndarray
    sigma_g2: float
    sigma_e2: float
    ratio: float
    blups: np.ndarray
    log_likelihood: float
    trait_name: str = "trait"

    def __post_init__(self):
        if self.sigma_g2 < 0:
            raise NumericalError(f"negative genetic variance {self.sigma_g2}")
        if self.sigma_e2 <= 0:
            raise NumericalError(f"nonpositive residual variance {self.sigma_e2}")
        if not np.isfinite(self.log_likelihood):
            raise NumericalError("restricted log-likelihood is not finite")


@dataclass(frozen=True)
class AccuracyReport:
    """Pearson correlation between predictions and observations."""

    correlation: float
    n_test: int

    def __post_init__(self):
        if not -1.0 - 1e-12 <= self.correlation <= 1.0 + 1e-12:
            raise NumericalError(f"correlation {self.correlation} outside [-1, 1]")


class _SpectralProfile:
    """Profiled restricted log-likelihood over the variance ratio."""

    def __init__(self, y: np.ndarray, K_train: np.ndarray):
        n = y.shape[0]
        X = np.ones((n, 1))
        d, U = np.linalg.eigh((K_train + K_train.T) / 2.0)
        self.d = np.clip(d, 0.0, None)
        self.U = U
        self.y_rot = U.T @ y
        self.X_rot = U.T @ X
        self.n = n
        self.p = X.shape[1]
        self.logdet_xtx = float(np.log(n))

    def _solve(self, ratio: float):
        w = ratio * self.d + 1.0
        Xw = self.X_rot / w[:, None]
        G = self.X_rot.T @ Xw
        beta = np.linalg.solve(G, Xw.T @ self.y_rot)
        resid = self.y_rot - self.X_rot @ beta
        quad = float(np.sum(resid * resid / w))
        return w, G, beta, quad

    def loglik(self, ratio: float) -> float:
        if ratio < 0:
            raise ContractError(f"variance ratio must be >= 0, got {ratio}")
        w, G, _, quad = self._solve(ratio)
        dof = self.n - self.p
        if quad <= 0:
            return -np.inf
        sigma_e2 = quad / dof
        _, logdet_g = np.linalg.slogdet(G)
        return -0.5 * (dof * (np.log(2.0 * np.pi * sigma_e2) + 1.0)
                       + float(np.sum(np.log(w))) + logdet_g - self.logdet_xtx)

    def estimates(self, ratio: float):
        w, G, beta, quad = self._solve(ratio)
        sigma_e2 = quad / (self.n - self.p)
        if not np.isfinite(sigma_e2) or sigma_e2 <= 0:
            raise NumericalError("residual variance collapsed to zero")
        return beta, sigma_e2, ratio * sigma_e2


def restricted_loglik(y_train: PhenotypeVector, K: KinshipMatrix,
                      ratio: float, train_ids=None) -> float:
    """Restricted log-likelihood of the training block at a given ratio.

    Exposed so the fitted optimum can be checked against grid sweeps.
    """
    y, K_train, _, _ = _aligned_blocks(y_train, K, train_ids)
    return _SpectralProfile(y, K_train).loglik(ratio)


def _aligned_blocks(y_train: PhenotypeVector, K: KinshipMatrix, train_ids):
    train_ids = tuple(train_ids) if train_ids is not None else y_train.ids
    if len(train_ids) < 3:
        raise ContractError("at least 3 training individuals are required")
    y = np.array([y_train.value_of(i) for i in train_ids])
    if np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        raise DegenerateInputError("training phenotypes are constant")
    idx = K.rows_of(train_ids)
    K_train = K.values[np.ix_(idx, idx)]
    return y, K_train, train_ids, idx


def _maximize_profile(profile: _SpectralProfile, bounds) -> float:
    """Dense log-grid sweep plus bounded refinement of every local maximum."""
    lo, hi = np.log10(bounds[0]), np.log10(bounds[1])
    while True:
        grid = np.linspace(lo, hi, _GRID_POINTS)
        vals = np.array([profile.loglik(10.0 ** t) for t in grid])
        candidates = [(vals[i], grid[i]) for i in range(len(grid))]
        for i in range(len(grid)):
            left = vals[i - 1] if i > 0 else -np.inf
            right = vals[i + 1] if i < len(grid) - 1 else -np.inf
            if vals[i] >= left and vals[i] >= right and np.isfinite(vals[i]):
                lo_i = grid[max(i - 1, 0)]
                hi_i = grid[min(i + 1, len(grid) - 1)]
                res = minimize_scalar(lambda t: -profile.loglik(10.0 ** t),
                                      bounds=(lo_i, hi_i), method="bounded",
                                      options={"xatol": 1e-10})
                candidates.append((-res.fun, float(res.x)))
        best_val, best_t = max(candidates, key=lambda c: c[0])
        at_edge = best_t <= grid[1] or best_t >= grid[-2]
        can_expand = (lo > np.log10(_RATIO_HARD_BOUNDS[0])
                      or hi < np.log10(_RATIO_HARD_BOUNDS[1]))
        if at_edge and can_expand:
            logger.warning(
                "variance-ratio optimum at search bound 1e%+d; expanding",
                int(round(best_t)),
            )
            lo = max(lo - 2.0, np.log10(_RATIO_HARD_BOUNDS[0]))
            hi = min(hi + 2.0, np.log10(_RATIO_HARD_BOUNDS[1]))
            continue
        return 10.0 ** best_t


def fit_spmm(y_train: PhenotypeVector, K: KinshipMatrix, train_ids=None,
             ratio: float = None) -> MixedModelFit:
    """Fit the kinship mixed model on the training block by REML.

    Parameters
    ----------
    y_train : PhenotypeVector
        Training phenotypes; must cover ``train_ids``.
    K : KinshipMatrix
        Kinship over every genotype needing a breeding value (training and
        test together), built from the full centered/scaled marker matrix.
    train_ids : sequence of str, optional
        Training individuals; defaults to ``y_train.ids``.
    ratio : float, optional
        Fix the variance ratio ``sigma_g2 / sigma_e2`` instead of estimating
        it (the remaining parameters are still profiled).

    Returns
    -------
    MixedModelFit
        Variance components, the GLS intercept, breeding values for all
        ``K.ids`` and the restricted log-likelihood at the optimum.
    """
    y, K_train, train_ids, train_idx = _aligned_blocks(y_train, K, train_ids)
    profile = _SpectralProfile(y, K_train)

    if ratio is None:
        ratio = _maximize_profile(profile, RATIO_BOUNDS)
    elif ratio < 0:
        raise ContractError(f"variance ratio must be >= 0, got {ratio}")

    beta, sigma_e2, sigma_g2 = profile.estimates(ratio)
    loglik = profile.loglik(ratio)

    resid = y - beta[0]
    # V^-1 r via the spectral factors: V = sigma_g2 K_tr + sigma_e2 I
    denom = sigma_g2 * profile.d + sigma_e2
    v_inv_resid = profile.U @ ((profile.U.T @ resid) / denom)
    blups = sigma_g2 * (K.values[:, train_idx] @ v_inv_resid)

    return MixedModelFit(
        ids=K.ids,
        train_ids=train_ids,
        beta=np.asarray(beta, dtype=float).ravel(),
        sigma_g2=float(sigma_g2),
        sigma_e2=float(sigma_e2),
        ratio=float(ratio),
        blups=blups,
        log_likelihood=float(loglik),
        trait_name=y_train.trait_name,
    )


def predict_gebv(fit: MixedModelFit, test_ids) -> PhenotypeVector:
    """Predicted phenotypes ``intercept + g_hat`` for the given ids."""
    index = {i: r for r, i in enumerate(fit.ids)}
    try:
        rows = [index[str(i)] for i in test_ids]
    except KeyError as exc:
        raise DataError(f"id not covered by the fit: {exc.args[0]!r}") from None
    values = fit.beta[0] + fit.blups[rows]
    return PhenotypeVector(tuple(str(i) for i in test_ids), values,
                           trait_name=fit.trait_name)


def accuracy(predicted: PhenotypeVector, observed: PhenotypeVector) -> AccuracyReport:
    """Pearson correlation between predicted and observed phenotypes.

    Requires at least 3 aligned pairs; a constant vector on either side is a
    degenerate input (accuracy is then undefined, not zero).
    """
    if set(predicted.ids) != set(observed.ids):
        raise DataError("predicted and observed phenotypes cover different ids")
    if len(predicted) < 3:
        raise ContractError("accuracy requires at least 3 individuals")
    p = predicted.values
    o = np.array([observed.value_of(i) for i in predicted.ids])
    if np.std(p) <= 1e-14 * max(1.0, float(np.max(np.abs(p)))):
        raise DegenerateInputError("predicted values are constant")
    if np.std(o) <= 1e-14 * max(1.0, float(np.max(np.abs(o)))):
        raise DegenerateInputError("observed values are constant")
    r = float(np.corrcoef(p, o)[0, 1])
    return AccuracyReport(correlation=min(1.0, max(-1.0, r)), n_test=len(predicted))
