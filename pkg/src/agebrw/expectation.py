"""Expected population of the single-site ageing branching process.

The process breeds with intensity ``lam * exp(-alpha * age)`` and each
individual dies at rate 1.  ``V_t`` is its expected size; ``S_t`` is the
expected size of the classical process with the same mean offspring
(constant breeding rate ``lam / (1 + alpha)``).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

# Below this |lam - alpha| the two-exponential form is replaced by its
# first-order expansion e^{-t}(1 + lam t (1 + delta t / 2)).  The dropped
# term is lam delta^2 t^3 / 6, i.e. < 1e-16 t^3 relative, while the
# unexpanded form loses about eps / |delta| ~ 1e-8 to cancellation there.
RESONANCE_TOL = 1e-8

CASE_TOL = 1e-12

STEP_ERROR_TOL = 1e-6


@dataclass(frozen=True)
class ExpectationParams:
    lam: float
    alpha: float
    v0: float = 1.0

    def __post_init__(self):
        for name in ("lam", "alpha", "v0"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")


def _check_t(t):
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be non-negative")


def v_closed(p: ExpectationParams, t):
    """Expected population at time ``t`` (scalar or array)."""
    _check_t(t)
    t = np.asarray(t, dtype=float)
    lam, a = p.lam, p.alpha
    delta = lam - a
    if abs(delta) < RESONANCE_TOL:
        out = p.v0 * np.exp(-t) * (1.0 + lam * t * (1.0 + 0.5 * delta * t))
    else:
        # lam/delta e^{(delta-1)t} - a/delta e^{-t} = e^{-t}(1 + lam expm1(delta t)/delta)
        out = p.v0 * np.exp(-t) * (1.0 + lam * np.expm1(delta * t) / delta)
    return float(out) if out.ndim == 0 else out


def v_dot_closed(p: ExpectationParams, t):
    """Time derivative of :func:`v_closed`."""
    _check_t(t)
    t = np.asarray(t, dtype=float)
    lam, a = p.lam, p.alpha
    delta = lam - a
    if abs(delta) < RESONANCE_TOL:
        # derivative of e^{-t}(1 + lam t + lam delta t^2/2)
        out = p.v0 * np.exp(-t) * (lam - 1.0 + lam * t * (delta - 1.0) - 0.5 * lam * delta * t * t)
    else:
        out = p.v0 * (lam * (delta - 1.0) / delta * np.exp((delta - 1.0) * t)
                      + a / delta * np.exp(-t))
    return float(out) if out.ndim == 0 else out


def n_dot(p: ExpectationParams, t):
    """Birth rate ``V' + V`` (expected births per unit time)."""
    return v_dot_closed(p, t) + v_closed(p, t)


def s_closed(p: ExpectationParams, t):
    """Expected population of the equivalent classical process."""
    _check_t(t)
    t = np.asarray(t, dtype=float)
    out = p.v0 * np.exp((p.lam / (1.0 + p.alpha) - 1.0) * t)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# numeric oracle

def rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class OdeResult:
    t: np.ndarray
    v: np.ndarray  # shape (len(t),) or (len(t), batch)
    v_dot: np.ndarray
    max_step_error: float
    step_ok: bool


def integrate_ode(p: ExpectationParams | None = None, h: float = 1e-3, T: float = 10.0, *,
                  lam=None, alpha=None, v0=None, check_every: int = 100) -> OdeResult:
    """Fixed-step RK4 for ``V'' = V'(lam-alpha-2) + V(lam-alpha-1)``,
    ``V(0) = v0``, ``V'(0) = (lam-1) v0``.

    Pass ``p`` for a single trajectory or arrays ``lam``/``alpha``/``v0`` to
    integrate a batch at once.  Every ``check_every`` steps the local error
    is estimated by step doubling; ``step_ok`` is False when the relative
    estimate exceeds 1e-6.
    """
    if not (h > 0 and T > 0):
        raise ValueError("step h and horizon T must be positive")
    if p is not None:
        lam, alpha, v0 = p.lam, p.alpha, p.v0
    lam = np.asarray(lam, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    v0 = np.asarray(1.0 if v0 is None else v0, dtype=float)
    lam, alpha, v0 = np.broadcast_arrays(lam, alpha, v0)
    a1 = lam - alpha - 2.0
    a0 = lam - alpha - 1.0

    def f(y):
        return np.stack([y[1], a1 * y[1] + a0 * y[0]])

    n = int(round(T / h))
    y = np.stack([v0, (lam - 1.0) * v0]).astype(float)
    vs = np.empty((n + 1,) + v0.shape)
    ds = np.empty_like(vs)
    vs[0], ds[0] = y[0], y[1]
    worst = 0.0
    for i in range(1, n + 1):
        y_next = rk4_step(f, y, h)
        if i % check_every == 1 and i + 1 <= n:
            two = rk4_step(f, y_next, h)
            big = rk4_step(f, y, 2.0 * h)
            err = np.abs(two[0] - big[0]) / 15.0 / np.maximum(np.abs(two[0]), 1e-300)
            worst = max(worst, float(np.max(err)))
        y = y_next
        vs[i], ds[i] = y[0], y[1]
    t = np.linspace(0.0, n * h, n + 1)
    return OdeResult(t, vs, ds, worst, worst <= STEP_ERROR_TOL)


# ---------------------------------------------------------------------------
# regimes

CASE_TEXT = {
    1: "lam > alpha+1: V and S diverge; V ~ lam/(lam-alpha) V0 e^((lam-alpha-1)t) eventually exceeds S",
    2: "lam = alpha+1: S constant at V0; V increases to lam V0",
    3: "alpha < lam < alpha+1: V and S vanish; V ~ lam/(lam-alpha) V0 e^((lam-alpha-1)t); S eventually larger",
    4: "lam = alpha: V and S vanish; V ~ alpha t V0 e^(-t); S eventually larger",
    5: "lam < alpha: V and S vanish; V ~ alpha/(alpha-lam) V0 e^(-t); S eventually larger",
}


@dataclass
class Regime:
    case: int
    description: str
    prefactor: float  # V_t ~ prefactor * t^power * e^(rate t)
    power: int
    rate: float

    def asymptotic(self, t):
        t = np.asarray(t, dtype=float)
        return self.prefactor * t ** self.power * np.exp(self.rate * t)


def compare_regime(p: ExpectationParams, tol: float = CASE_TOL) -> Regime:
    lam, a, v0 = p.lam, p.alpha, p.v0
    if abs(lam - (a + 1.0)) <= tol:
        return Regime(2, CASE_TEXT[2], lam * v0, 0, 0.0)
    if abs(lam - a) <= tol:
        return Regime(4, CASE_TEXT[4], a * v0, 1, -1.0)
    if lam > a + 1.0:
        return Regime(1, CASE_TEXT[1], lam / (lam - a) * v0, 0, lam - a - 1.0)
    if lam > a:
        return Regime(3, CASE_TEXT[3], lam / (lam - a) * v0, 0, lam - a - 1.0)
    return Regime(5, CASE_TEXT[5], a / (a - lam) * v0, 0, -1.0)


def log_v_closed(p: ExpectationParams, t: float) -> float:
    """``log V_t`` without overflow for large ``t``."""
    lam, a = p.lam, p.alpha
    delta = lam - a
    if abs(delta) < RESONANCE_TOL:
        return math.log(p.v0) - t + math.log1p(lam * t * (1.0 + 0.5 * delta * t))
    if delta > 0:
        return math.log(p.v0) + (delta - 1.0) * t + math.log((lam - a * math.exp(-delta * t)) / delta)
    return math.log(p.v0) - t + math.log((a - lam * math.exp(delta * t)) / -delta)


def crossing_time(p: ExpectationParams, t_max: float = 1e4) -> Optional[float]:
    """Last time ``t > 0`` where ``V_t = S_t``, or None if they never cross."""
    def g(t):
        return log_v_closed(p, t) - (math.log(p.v0) + (p.lam / (1.0 + p.alpha) - 1.0) * t)

    grid = np.concatenate([np.linspace(0, 10, 1001)[1:], np.geomspace(10, t_max, 2000)[1:]])
    vals = np.array([g(t) for t in grid])
    sign = np.sign(vals)
    idx = np.nonzero(sign[1:] * sign[:-1] < 0)[0]
    if len(idx) == 0:
        return None
    i = idx[-1]
    return brentq(g, grid[i], grid[i + 1], xtol=1e-12)


def peak_time(p: ExpectationParams) -> Optional[float]:
    """Interior maximiser of ``V_t`` when ``1 < lam < alpha + 1``, else None."""
    lam, a = p.lam, p.alpha
    if not (1.0 < lam < a + 1.0):
        return None
    hi = 1.0
    while v_dot_closed(p, hi) > 0:
        hi *= 2.0
        if hi > 1e6:
            return None
    return brentq(lambda t: v_dot_closed(p, t), 0.0, hi, xtol=1e-14, rtol=1e-14)


# ---------------------------------------------------------------------------
# tables

@dataclass
class ExpectationTrajectory:
    t: np.ndarray
    v: np.ndarray
    s: np.ndarray
    v_rk4: Optional[np.ndarray]
    case: int

    def rows(self):
        for i, ti in enumerate(self.t):
            yield {
                "t": float(ti),
                "V_closed": float(self.v[i]),
                "S_closed": float(self.s[i]),
                "V_rk4": float(self.v_rk4[i]) if self.v_rk4 is not None else "",
                "regime_case": self.case,
            }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["t", "V_closed", "S_closed", "V_rk4", "regime_case"],
                               lineterminator="\n")
            w.writeheader()
            for row in self.rows():
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def trajectory(p: ExpectationParams, T: float = 10.0, dt: float = 0.01,
               h: float | None = 1e-3) -> ExpectationTrajectory:
    """Closed forms on a grid of spacing ``dt`` plus the RK4 oracle when ``h`` is set."""
    n = int(round(T / dt))
    t = np.linspace(0.0, n * dt, n + 1)
    v_rk = None
    if h is not None:
        stride = int(round(dt / h))
        if stride < 1 or abs(stride * h - dt) > 1e-12 * dt:
            raise ValueError("grid spacing must be a multiple of the RK4 step")
        res = integrate_ode(p, h, n * dt)
        v_rk = res.v[::stride]
    return ExpectationTrajectory(t, np.atleast_1d(v_closed(p, t)), np.atleast_1d(s_closed(p, t)),
                                 v_rk, compare_regime(p).case)
