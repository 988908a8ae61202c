"""Reproduction-rate profiles and their integral transforms.

Only two profiles exist: a constant rate ``k`` and an exponentially decaying
rate ``k * exp(-alpha * t)``.  Every method accepts scalars or numpy arrays of
ages; the speed parameter lambda is always applied by the caller.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

# bracket width used by the bisection fallback of ExpDecay.inverse_cumulative
_BISECT_SPAN = 100.0
_BISECT_TOL = 1e-12


def _check_age(t: ArrayLike) -> None:
    if np.any(np.asarray(t) < 0):
        raise ValueError(f"age must be non-negative, got {t!r}")


@dataclass(frozen=True)
class Constant:
    k: float

    def __post_init__(self):
        if not (self.k >= 0 and math.isfinite(self.k)):
            raise ValueError(f"rate k must be finite and >= 0, got {self.k}")

    @property
    def total_mass(self) -> float:
        return math.inf if self.k > 0 else 0.0

    @property
    def is_zero(self) -> bool:
        return self.k == 0

    def value(self, t: ArrayLike) -> ArrayLike:
        _check_age(t)
        if np.ndim(t):
            return np.full(np.shape(t), float(self.k))
        return float(self.k)

    def cumulative(self, t: ArrayLike) -> ArrayLike:
        _check_age(t)
        return self.k * t

    def inverse_cumulative(self, u: float) -> float | None:
        if u < 0:
            raise ValueError(f"mass must be non-negative, got {u}")
        if u == 0:
            return 0.0
        if self.k == 0:
            return None
        return u / self.k

    def first_moment(self) -> float:
        return float(self.k)

    def scaled(self, c: float) -> "Constant":
        return Constant(self.k * c)

    def to_dict(self) -> dict:
        return {"type": "constant", "k": self.k}


@dataclass(frozen=True)
class ExpDecay:
    k: float
    alpha: float

    def __post_init__(self):
        if not (self.k >= 0 and math.isfinite(self.k)):
            raise ValueError(f"rate k must be finite and >= 0, got {self.k}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"decay alpha must be finite and > 0, got {self.alpha}")

    @property
    def total_mass(self) -> float:
        return self.k / self.alpha

    @property
    def is_zero(self) -> bool:
        return self.k == 0

    def value(self, t: ArrayLike) -> ArrayLike:
        _check_age(t)
        return self.k * np.exp(-self.alpha * np.asarray(t, dtype=float)) if np.ndim(t) \
            else self.k * math.exp(-self.alpha * t)

    def cumulative(self, t: ArrayLike) -> ArrayLike:
        _check_age(t)
        if np.ndim(t):
            return -self.k * np.expm1(-self.alpha * np.asarray(t, dtype=float)) / self.alpha
        return -self.k * math.expm1(-self.alpha * t) / self.alpha

    def inverse_cumulative(self, u: float) -> float | None:
        """Smallest age at which the cumulative rate reaches ``u``.

        Returns None when ``u`` is at or beyond the total mass ``k/alpha``,
        i.e. the corresponding arrival never happens.
        """
        if u < 0:
            raise ValueError(f"mass must be non-negative, got {u}")
        if u == 0:
            return 0.0
        x = self.alpha * u / self.k if self.k > 0 else math.inf
        if x >= 1:
            return None
        t = -math.log1p(-x) / self.alpha
        if math.isfinite(t):
            return t
        return self._bisect_inverse(u)

    def _bisect_inverse(self, u: float) -> float:
        lo, hi = 0.0, _BISECT_SPAN / self.alpha
        while hi - lo > _BISECT_TOL:
            mid = 0.5 * (lo + hi)
            if self.cumulative(mid) < u:
                lo = mid
            else:
                hi = mid
        return hi

    def first_moment(self) -> float:
        return self.k / (self.alpha + 1.0)

    def scaled(self, c: float) -> "ExpDecay":
        return ExpDecay(self.k * c, self.alpha)

    def to_dict(self) -> dict:
        return {"type": "exp_decay", "k": self.k, "alpha": self.alpha}


RateFunction = Union[Constant, ExpDecay]

ZERO = Constant(0.0)


def decaying(k: float, alpha: float) -> RateFunction:
    """``k * exp(-alpha t)``, collapsing to a constant rate when alpha is 0."""
    if alpha == 0:
        return Constant(k)
    return ExpDecay(k, alpha)


def rate_from_dict(data: dict) -> RateFunction:
    kind = data.get("type")
    if kind == "constant":
        return Constant(float(data["k"]))
    if kind == "exp_decay":
        return ExpDecay(float(data["k"]), float(data["alpha"]))
    raise ValueError(f"unknown rate type {kind!r}")


# Module-level aliases so callers can write rates.cumulative(rf, t).
def value(rf: RateFunction, t: ArrayLike) -> ArrayLike:
    return rf.value(t)


def cumulative(rf: RateFunction, t: ArrayLike) -> ArrayLike:
    return rf.cumulative(t)


def inverse_cumulative(rf: RateFunction, u: float) -> float | None:
    return rf.inverse_cumulative(u)


def first_moment(rf: RateFunction) -> float:
    return rf.first_moment()
