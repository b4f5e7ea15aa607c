"""PRBS excitation and least-squares ARX identification of a finger.

Model structure (na=2, nb=2, one sample of delay)::

    y(k) + a1 y(k-1) + a2 y(k-2) = b1 u(k-1) + b2 u(k-2) + e(k)

so ``A(z) = z^2 + a1 z + a2`` and ``B(z) = b1 z + b2``. The nominal finger
has a1 = -0.7655, a2 = 0.03624, b1 = 0.04074, b2 = 0.3601.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y

from .exceptions import InvalidInputError, UnidentifiableError
from .lti import TransferFunction, simulate

__all__ = [
    "ExcitationSignal",
    "ArxEstimate",
    "prbs",
    "arx_regressors",
    "fit_arx",
    "ARXRegressor",
]

COND_WARN = 1e8
MIN_SAMPLES = 20


@dataclass(frozen=True)
class ExcitationSignal:
    samples: np.ndarray
    levels: tuple[float, ...]
    seed: int | None
    sample_time: float = 0.1


def prbs(levels, length: int, seed: int | None = None, sample_time: float = 0.1, duty_limits=(0.0, 100.0)) -> ExcitationSignal:
    """Pseudo-random duty sequence drawing uniformly and independently from ``levels``."""
    levels = tuple(sorted({float(v) for v in levels}))
    if len(levels) < 2:
        raise InvalidInputError("prbs needs at least two distinct levels")
    if length < 1:
        raise InvalidInputError("length must be >= 1")
    lo, hi = duty_limits
    if levels[0] < lo or levels[-1] > hi:
        raise InvalidInputError(f"levels must lie within duty limits {duty_limits}")
    rng = np.random.default_rng(seed)
    samples = rng.choice(np.asarray(levels), size=int(length))
    samples.setflags(write=False)
    return ExcitationSignal(samples=samples, levels=levels, seed=seed, sample_time=sample_time)


def arx_regressors(u, y, na: int = 2, nb: int = 2, delay: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Regressor matrix ``Phi`` and target ``Y`` with ``Y = Phi @ [a..., b...]``."""
    u = np.asarray(u, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if u.shape != y.shape:
        raise InvalidInputError(f"u and y lengths differ ({u.size} vs {y.size})")
    if na < 0 or nb < 1 or delay < 0:
        raise InvalidInputError("need na >= 0, nb >= 1, delay >= 0")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
        raise InvalidInputError("data must be finite")
    start = max(na, nb + delay - 1)
    n = u.size
    if n - start < na + nb:
        raise InvalidInputError("not enough samples for the model order")
    cols = [-y[start - i : n - i] for i in range(1, na + 1)]
    cols += [u[start - delay - j : n - delay - j] for j in range(nb)]
    return np.column_stack(cols), y[start:]


@dataclass(frozen=True)
class ArxEstimate:
    a1: float
    a2: float
    b1: float
    b2: float
    residual_variance: float
    fit_percent: float
    sample_time: float = 0.1

    @property
    def coefficients(self) -> tuple[float, float, float, float]:
        return (self.a1, self.a2, self.b1, self.b2)

    def transfer_function(self) -> TransferFunction:
        return TransferFunction([self.b1, self.b2], [1.0, self.a1, self.a2], sample_time=self.sample_time)

    def to_dict(self) -> dict:
        return {
            "a1": self.a1,
            "a2": self.a2,
            "b1": self.b1,
            "b2": self.b2,
            "residual_variance": self.residual_variance,
            "fit_percent": self.fit_percent,
            "sample_time": self.sample_time,
        }


def _lstsq(phi: np.ndarray, target: np.ndarray) -> np.ndarray:
    q, r, perm = scipy.linalg.qr(phi, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(phi.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    if diag.size < phi.shape[1] or diag[0] == 0.0 or diag[-1] <= tol:
        raise UnidentifiableError("regressor matrix is rank deficient (is the input persistently exciting?)")
    cond = (diag[0] / diag[-1]) ** 2
    if cond > COND_WARN:
        warnings.warn(f"ill-conditioned ARX problem (cond ~ {cond:.2e})", RuntimeWarning, stacklevel=3)
    theta = np.empty(phi.shape[1])
    theta[perm] = scipy.linalg.solve_triangular(r, q.T @ target)
    return theta


def fit_percent(y, y_hat) -> float:
    """Normalized fit, 100 (1 - |y - y_hat| / |y - mean(y)|)."""
    y = np.asarray(y, dtype=float)
    spread = np.linalg.norm(y - y.mean())
    if spread == 0.0:
        return 100.0 if np.allclose(y, y_hat) else -np.inf
    return float(100.0 * (1.0 - np.linalg.norm(y - np.asarray(y_hat)) / spread))


def fit_arx(u, y, na: int = 2, nb: int = 2, delay: int = 1, sample_time: float = 0.1) -> ArxEstimate:
    """Least-squares 2nd-order ARX fit of bending ``y`` to duty ``u``.

    The fit percentage compares ``y`` with a free-run simulation of the
    estimate from zero initial conditions.
    """
    if (na, nb, delay) != (2, 2, 1):
        raise InvalidInputError("only the (na=2, nb=2, delay=1) structure is supported")
    u = np.asarray(u, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if u.size < MIN_SAMPLES:
        raise InvalidInputError(f"need at least {MIN_SAMPLES} samples, got {u.size}")
    phi, target = arx_regressors(u, y, na, nb, delay)
    theta = _lstsq(phi, target)
    resid = target - phi @ theta
    dof = max(target.size - theta.size, 1)
    a1, a2, b1, b2 = (float(v) for v in theta)
    est = ArxEstimate(a1, a2, b1, b2, float(resid @ resid / dof), 0.0, sample_time)
    y_hat = simulate(est.transfer_function(), u)
    return ArxEstimate(a1, a2, b1, b2, est.residual_variance, fit_percent(y, y_hat), sample_time)


class ARXRegressor(RegressorMixin, BaseEstimator):
    """scikit-learn wrapper around :func:`fit_arx`.

    ``X`` is the duty sequence (shape (n,) or (n, 1)) and ``y`` the bending
    sequence; both are time ordered. ``predict`` returns the free-run
    simulated bending for a new duty sequence from zero initial conditions,
    and ``score`` is the usual R^2 of that prediction.
    """

    def __init__(self, sample_time: float = 0.1):
        self.sample_time = sample_time

    def fit(self, X, y):
        X, y = check_X_y(np.asarray(X).reshape(len(X), -1), y, y_numeric=True)
        if X.shape[1] != 1:
            raise InvalidInputError("ARXRegressor takes a single input channel")
        est = fit_arx(X[:, 0], y, sample_time=self.sample_time)
        self.estimate_ = est
        self.coef_ = np.array(est.coefficients)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "estimate_")
        u = np.asarray(X, dtype=float).reshape(len(X), -1)
        if u.shape[1] != 1:
            raise InvalidInputError("ARXRegressor takes a single input channel")
        return simulate(self.estimate_.transfer_function(), u[:, 0])
