"""Discrete-time SISO LTI machinery.

Polynomials are stored in descending powers of ``z``. A transfer function is
a ratio of two such polynomials together with its sample time. Simulation
runs the difference equation implied by ``num/den`` directly, so a model
identified as ``A(z) y = B(z) u`` is reproduced without any realization
error.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import DegenerateLoopError, InvalidInputError, UnstableLoopError

__all__ = [
    "Polynomial",
    "TransferFunction",
    "DifferenceEqState",
    "RootLocus",
    "ReferenceKind",
    "poly_roots",
    "simulate",
    "step",
    "characteristic_polynomial",
    "closed_loop_poles",
    "root_locus",
    "critical_gain",
    "steady_state_error",
    "is_stable",
]


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial, coefficients in descending powers of ``z``.

    Leading exact zeros are dropped so that the leading coefficient is
    nonzero unless the polynomial is identically zero (stored as ``(0.0,)``).
    No magnitude-based trimming is done.
    """

    coeffs: tuple[float, ...]

    def __init__(self, coeffs: Iterable[float]):
        c = [float(v) for v in np.atleast_1d(np.asarray(coeffs, dtype=float))]
        if not c:
            raise InvalidInputError("polynomial needs at least one coefficient")
        if not all(math.isfinite(v) for v in c):
            raise InvalidInputError("polynomial coefficients must be finite")
        while len(c) > 1 and c[0] == 0.0:
            c.pop(0)
        object.__setattr__(self, "coeffs", tuple(c))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.coeffs)

    def __call__(self, z):
        return np.polyval(self.coeffs, z)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coeffs, dtype=dtype)

    def __add__(self, other: Polynomial) -> Polynomial:
        return Polynomial(np.polyadd(self.coeffs, _coeffs(other)))

    def __sub__(self, other: Polynomial) -> Polynomial:
        return Polynomial(np.polysub(self.coeffs, _coeffs(other)))

    def __mul__(self, other) -> Polynomial:
        if np.isscalar(other):
            return Polynomial(np.asarray(self.coeffs) * float(other))
        return Polynomial(np.polymul(self.coeffs, _coeffs(other)))

    __rmul__ = __mul__

    def monic(self) -> Polynomial:
        if self.is_zero:
            raise InvalidInputError("the zero polynomial has no monic form")
        return Polynomial(np.asarray(self.coeffs) / self.coeffs[0])

    def roots(self) -> np.ndarray:
        return poly_roots(self)

    def to_list(self) -> list[float]:
        return list(self.coeffs)


def _coeffs(p) -> np.ndarray:
    return np.asarray(p.coeffs if isinstance(p, Polynomial) else p, dtype=float)


def _as_poly(p) -> Polynomial:
    return p if isinstance(p, Polynomial) else Polynomial(p)


@dataclass(frozen=True)
class TransferFunction:
    """Proper rational transfer function ``num(z) / den(z)``."""

    num: Polynomial
    den: Polynomial
    sample_time: float = 0.1

    def __init__(self, num, den, sample_time: float = 0.1):
        num, den = _as_poly(num), _as_poly(den)
        if den.is_zero:
            raise InvalidInputError("denominator is identically zero")
        if not num.is_zero and num.degree > den.degree:
            raise InvalidInputError(
                f"improper transfer function: deg(num)={num.degree} > deg(den)={den.degree}"
            )
        if not sample_time > 0:
            raise InvalidInputError("sample_time must be positive")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        object.__setattr__(self, "sample_time", float(sample_time))

    @property
    def order(self) -> int:
        return self.den.degree

    def poles(self) -> np.ndarray:
        return poly_roots(self.den) if self.den.degree >= 1 else np.empty(0, complex)

    def zeros(self) -> np.ndarray:
        if self.num.is_zero or self.num.degree < 1:
            return np.empty(0, complex)
        return poly_roots(self.num)

    def dc_gain(self) -> float:
        d = self.den(1.0)
        if d == 0.0:
            return math.copysign(math.inf, self.num(1.0)) if self.num(1.0) else math.nan
        return float(self.num(1.0) / d)

    def __mul__(self, other: TransferFunction) -> TransferFunction:
        if np.isscalar(other):
            return TransferFunction(self.num * other, self.den, self.sample_time)
        return TransferFunction(self.num * other.num, self.den * other.den, self.sample_time)

    __rmul__ = __mul__

    def normalized(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(b, a)`` of equal length with ``a[0] == 1``.

        ``b`` is the numerator zero-padded on the left to the denominator
        length, so ``b[i]`` multiplies ``u(k - i)`` and ``a[i]`` multiplies
        ``y(k - i)``.
        """
        den = np.asarray(self.den.coeffs)
        num = np.asarray(self.num.coeffs)
        b = np.zeros(len(den))
        b[len(den) - len(num):] = num
        return b / den[0], den / den[0]

    @cached_property
    def _recursion(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        b, a = self.normalized()
        return tuple(float(v) for v in b), tuple(float(v) for v in a)

    def to_dict(self) -> dict:
        return {"num": self.num.to_list(), "den": self.den.to_list(), "sample_time": self.sample_time}


@dataclass
class DifferenceEqState:
    """Past inputs and outputs of a difference-equation realization.

    Both rings hold the last ``order`` samples, newest first.
    """

    order: int
    past_inputs: deque = field(init=False)
    past_outputs: deque = field(init=False)

    def __post_init__(self):
        if self.order < 0:
            raise InvalidInputError("order must be >= 0")
        self.reset()

    @classmethod
    def for_system(cls, tf: TransferFunction) -> DifferenceEqState:
        return cls(tf.order)

    def reset(self) -> None:
        self.past_inputs = deque([0.0] * self.order, maxlen=self.order)
        self.past_outputs = deque([0.0] * self.order, maxlen=self.order)

    def output(self, tf: TransferFunction, u: float) -> float:
        """Output for input ``u`` at the current sample, without committing it."""
        b, a = tf._recursion
        y = b[0] * u
        for i in range(1, len(a)):
            y += b[i] * self.past_inputs[i - 1] - a[i] * self.past_outputs[i - 1]
        return float(y)

    def push(self, u: float, y: float) -> None:
        if self.order:
            self.past_inputs.appendleft(float(u))
            self.past_outputs.appendleft(float(y))


def step(tf: TransferFunction, u: float, state: DifferenceEqState) -> float:
    """Advance ``state`` by one sample with input ``u`` and return the output."""
    y = state.output(tf, u)
    state.push(u, y)
    return y


def simulate(
    tf: TransferFunction, u: Sequence[float], state: DifferenceEqState | None = None
) -> np.ndarray:
    """Run the difference equation of ``tf`` over the input sequence ``u``.

    ``state`` (zero initial conditions when omitted) is updated in place.
    """
    u = np.asarray(u, dtype=float).ravel()
    if not np.all(np.isfinite(u)):
        raise InvalidInputError("input sequence must be finite")
    if state is None:
        state = DifferenceEqState.for_system(tf)
    elif state.order != tf.order:
        raise InvalidInputError(f"state order {state.order} does not match system order {tf.order}")
    out = np.empty(len(u))
    for k, uk in enumerate(u):
        out[k] = step(tf, float(uk), state)
    return out


def poly_roots(p) -> np.ndarray:
    """Roots of a real polynomial, sorted by descending real part.

    Degree 1 and 2 use closed forms (the quadratic in its cancellation-free
    variant); higher degrees use the eigenvalues of the companion matrix
    followed by one Newton polishing step. Complex roots are returned in
    exact conjugate pairs.
    """
    p = _as_poly(p)
    if p.is_zero:
        raise InvalidInputError("cannot take roots of the zero polynomial")
    if p.degree < 1:
        raise InvalidInputError("polynomial must have degree >= 1")
    c = np.asarray(p.monic().coeffs)
    n = p.degree
    if n == 1:
        roots = np.array([-c[1]], dtype=complex)
    elif n == 2:
        roots = _quadratic_roots(c[1], c[2])
    else:
        comp = np.zeros((n, n))
        comp[0, :] = -c[1:]
        comp[1:, :-1] = np.eye(n - 1)
        roots = _polish(c, np.linalg.eigvals(comp))
    return _sort_roots(_conjugate_clean(roots, c))


def _quadratic_roots(b: float, c: float) -> np.ndarray:
    disc = b * b - 4.0 * c
    if disc >= 0.0:
        q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
        if q == 0.0:
            return np.array([0.0, 0.0], dtype=complex)
        return np.array([q, c / q], dtype=complex)
    re = -0.5 * b
    im = 0.5 * math.sqrt(-disc)
    return np.array([complex(re, im), complex(re, -im)])


def _polish(c: np.ndarray, roots: np.ndarray) -> np.ndarray:
    dc = np.polyder(c)
    out = roots.astype(complex).copy()
    for i, r in enumerate(out):
        with np.errstate(all="ignore"):
            d = np.polyval(dc, r)
            if d == 0:
                continue
            cand = r - np.polyval(c, r) / d
            if np.isfinite(cand) and abs(np.polyval(c, cand)) <= abs(np.polyval(c, r)):
                out[i] = cand
    return out


def _conjugate_clean(roots: np.ndarray, c: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(roots))) if len(roots) else 1.0)
    real, upper = [], []
    for r in roots:
        if abs(r.imag) <= 1e-12 * scale:
            real.append(complex(r.real, 0.0))
        elif r.imag > 0:
            upper.append(r)
    if len(real) + 2 * len(upper) != len(roots):
        # pairing broke down; keep the raw eigenvalues
        return roots
    return np.array(real + upper + [u.conjugate() for u in upper], dtype=complex)


def _sort_roots(roots: np.ndarray) -> np.ndarray:
    order = sorted(range(len(roots)), key=lambda i: (-roots[i].real, -roots[i].imag))
    return roots[order]


def characteristic_polynomial(controller: TransferFunction, plant: TransferFunction) -> Polynomial:
    """``den_c * den_p + num_c * num_p`` of the unity negative feedback loop."""
    return controller.den * plant.den + controller.num * plant.num


def closed_loop_poles(controller: TransferFunction, plant: TransferFunction) -> np.ndarray:
    char = characteristic_polynomial(controller, plant)
    if char.is_zero:
        raise DegenerateLoopError("closed-loop characteristic polynomial is identically zero")
    if char.degree < 1:
        return np.empty(0, complex)
    return poly_roots(char)


def is_stable(poles: Iterable[complex], margin: float = 0.0) -> bool:
    """True iff every pole lies strictly inside the circle of radius ``1 - margin``."""
    return all(abs(p) < 1.0 - margin for p in poles)


@dataclass(frozen=True)
class RootLocus:
    """Closed-loop poles of ``1 + K * L(z) = 0`` sampled over a gain grid.

    ``poles[i, j]`` is branch ``j`` at ``gains[i]``; branches are kept
    continuous by nearest-neighbour assignment between consecutive gains.
    """

    gains: np.ndarray
    poles: np.ndarray

    @property
    def n_branches(self) -> int:
        return self.poles.shape[1]

    def first_unstable_gain(self) -> float | None:
        for g, ps in zip(self.gains, self.poles):
            if not is_stable(ps):
                return float(g)
        return None


def root_locus(loop_gain: TransferFunction, gains: Sequence[float]) -> RootLocus:
    gains = np.asarray(gains, dtype=float).ravel()
    if gains.size == 0:
        raise InvalidInputError("gain grid is empty")
    if np.any(gains <= 0) or np.any(np.diff(gains) < 0):
        raise InvalidInputError("gains must be positive and sorted ascending")
    n = loop_gain.den.degree
    rows = []
    prev = None
    for g in gains:
        char = loop_gain.den + loop_gain.num * g
        ps = poly_roots(char)
        if prev is not None:
            cost = np.abs(prev[:, None] - ps[None, :])
            _, col = linear_sum_assignment(cost)
            ps = ps[col]
        rows.append(ps)
        prev = ps
    poles = np.vstack(rows) if n else np.empty((len(gains), 0), complex)
    return RootLocus(gains=gains, poles=poles)


def critical_gain(loop_gain: TransferFunction, k_stable: float, k_unstable: float, rtol: float = 1e-10) -> float:
    """Bisect for the gain at which ``1 + K L(z) = 0`` first loses stability.

    ``k_stable`` must give a stable loop and ``k_unstable`` an unstable one;
    the result is the stable end of the final bracket.
    """

    def stable(k):
        return is_stable(poly_roots(loop_gain.den + loop_gain.num * k))

    lo, hi = float(k_stable), float(k_unstable)
    if not (0 < lo < hi):
        raise InvalidInputError("need 0 < k_stable < k_unstable")
    if not stable(lo) or stable(hi):
        raise InvalidInputError("bracket does not straddle the stability boundary")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return lo


class ReferenceKind(str, enum.Enum):
    STEP = "step"
    RAMP = "ramp"


def _deflate_at_one(p: np.ndarray, tol: float) -> tuple[np.ndarray, int]:
    """Divide out ``(z - 1)`` factors; return quotient and multiplicity."""
    m = 0
    p = np.asarray(p, dtype=float)
    while len(p) > 1 and abs(np.polyval(p, 1.0)) <= tol * max(1.0, np.sum(np.abs(p))):
        q, _ = np.polydiv(p, [1.0, -1.0])
        p = np.atleast_1d(q)
        m += 1
    return p, m


def steady_state_error(
    controller: TransferFunction,
    plant: TransferFunction,
    ref_kind: ReferenceKind | str,
    magnitude: float,
) -> float:
    """Final-value-theorem limit of the tracking error ``e = r - y``.

    For a step of height ``R`` the reference transform is ``R z / (z - 1)``;
    for a ramp of slope ``R`` (units per second) it is
    ``R T z / (z - 1)^2``. The sensitivity ``S = 1 / (1 + C G)`` is written
    as ``den_c den_p / char`` and its zeros at ``z = 1`` are cancelled
    exactly, so an integrator count that suffices yields exactly ``0.0``.
    Returns ``±inf`` when the error grows without bound.
    """
    kind = ReferenceKind(ref_kind)
    poles = closed_loop_poles(controller, plant)
    if not is_stable(poles):
        raise UnstableLoopError("closed loop is not stable; final value theorem does not apply")
    if magnitude == 0:
        return 0.0
    sens_num = np.asarray((controller.den * plant.den).coeffs)
    char = characteristic_polynomial(controller, plant)
    reduced, m = _deflate_at_one(sens_num, tol=1e-12)
    needed = 1 if kind is ReferenceKind.STEP else 2
    if m >= needed:
        return 0.0
    scale = magnitude if kind is ReferenceKind.STEP else magnitude * controller.sample_time
    if m == needed - 1:
        # (z-1) Ref(z) S(z) -> scale * reduced(1) / char(1) at z = 1
        return float(scale * np.polyval(reduced, 1.0) / char(1.0))
    return math.copysign(math.inf, scale * np.polyval(reduced, 1.0) / char(1.0))
