"""Local and global survival critical parameters from first moments.

Everything here works on the lambda-free moment kernel ``k_xy``.  A *source*
is either a :class:`~agebrw.model.BrwModel` (its rates are reduced to first
moments and lumped onto a class graph) or a square non-negative matrix.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .model import (
    DEFAULT_BALL_CAP,
    BrwModel,
    ClassGraph,
    FiniteGraph,
    HomogeneousTree,
    MatrixClasses,
    ModelError,
    VertexClasses,
    class_graph,
    format_vertex,
    is_local_modification,
)

ROOT_TOL = 1e-12
BRANCH_CLAMP = 1e-12

PHASES = ("globally_subcritical", "pure_global", "locally_supercritical", "at_boundary")


class NumericError(RuntimeError):
    """A root or bracket could not be located."""


@dataclass
class PhiSeries:
    center: object
    target: object
    coefficients: np.ndarray  # coefficients[n-1] is phi^(n)
    exact: Optional[list] = None

    @property
    def order(self) -> int:
        return len(self.coefficients)

    def __call__(self, lam: float) -> float:
        return phi_eval(self, lam)


@dataclass
class CriticalEstimate:
    value: Optional[float]
    method: str
    lo: Optional[float] = None
    hi: Optional[float] = None
    heuristic: bool = False

    def __post_init__(self):
        if self.value is not None:
            if self.lo is None:
                self.lo = self.value
            if self.hi is None:
                self.hi = self.value

    def interval(self) -> tuple[float, float]:
        lo = self.lo if self.lo is not None else 0.0
        hi = self.hi if self.hi is not None else math.inf
        return lo, hi


@dataclass
class CriticalReport:
    lambda_s: CriticalEstimate
    lambda_w: CriticalEstimate
    n_root_sequence: list = field(default_factory=list)
    scenario: Optional[dict] = None
    regime: Optional[int] = None
    at_regime_boundary: bool = False
    base: Optional[dict] = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _graph(source, anchor=None) -> ClassGraph:
    if isinstance(source, BrwModel):
        return class_graph(source, anchor)
    if isinstance(source, ClassGraph):
        return source
    return MatrixClasses(source)


def _check_tree_ball(source, radius: int, cap: int) -> None:
    if isinstance(source, BrwModel) and isinstance(source.space, HomogeneousTree):
        size = source.space.ball_size(radius)
        if size > cap:
            raise ModelError(f"explicit ball of radius {radius} in T_{source.space.d} "
                             f"has {size} vertices (cap {cap})")


# ---------------------------------------------------------------------------
# first-return series

def phi_coefficients(source, x, y, N: int, *, exact: bool = False,
                     cap: int = DEFAULT_BALL_CAP) -> PhiSeries:
    """Taboo coefficients ``phi^(1..N)_xy`` by the first-step recursion.

    ``g_1(w) = k_wy`` and ``g_n(w) = sum_{v != y} k_wv g_{n-1}(v)``; then
    ``phi^(n)_xy = g_n(x)``.  A path of length ``n`` from ``x`` never leaves
    the radius-``n`` ball, so the recursion on that ball is exact.  With
    ``exact=True`` the recursion is also run in rational arithmetic on the
    binary values of the moments.
    """
    if N < 1:
        raise ValueError("series order N must be >= 1")
    graph = _graph(source, anchor=y)
    cy = graph.class_of(y)
    if not graph.is_singleton(cy):
        _check_tree_ball(source, N, cap)
        graph = VertexClasses(source)
        cy = graph.class_of(y)
    elif isinstance(graph, VertexClasses):
        _check_tree_ball(source, N, cap)
    cx = graph.class_of(x)
    order, index, L = graph.local_kernel(cx, N, cap=cap)
    coefs = np.zeros(N)
    if cy not in index:
        return PhiSeries(x, y, coefs, [Fraction(0)] * N if exact else None)
    ix, iy = index[cx], index[cy]
    L = L.tocsc()
    g = L[:, iy].toarray().ravel()
    taboo = L.tolil()
    taboo[:, iy] = 0
    taboo = taboo.tocsr()
    coefs[0] = g[ix]
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, N):
            g = taboo @ g
            coefs[n] = g[ix]
    exact_coefs = _exact_taboo(taboo, L[:, iy], ix, N) if exact else None
    return PhiSeries(x, y, coefs, exact_coefs)


def _exact_taboo(taboo: sp.csr_matrix, col, ix: int, N: int) -> list:
    rows = []
    for i in range(taboo.shape[0]):
        lo, hi = taboo.indptr[i], taboo.indptr[i + 1]
        rows.append([(int(j), Fraction(float(w))) for j, w in
                     zip(taboo.indices[lo:hi], taboo.data[lo:hi])])
    col = col.toarray().ravel()
    g = [Fraction(float(v)) for v in col]
    out = [g[ix]]
    for _ in range(1, N):
        g = [sum((w * g[j] for j, w in row), Fraction(0)) for row in rows]
        out.append(g[ix])
    return out


def phi_eval(series: PhiSeries, lam: float) -> float:
    """Partial sum ``sum_{n<=N} phi^(n) lam^n`` (a lower bound for the full series)."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if lam == 0:
        return 0.0
    c = series.coefficients
    nz = c > 0
    if not nz.any():
        return 0.0
    n = np.arange(1, len(c) + 1)[nz]
    with np.errstate(over="ignore", divide="ignore"):
        logs = np.log(c[nz]) + n * math.log(lam)
    top = logs.max()
    if top > 700:
        return math.inf
    return float(np.exp(logs).sum())


def max_root(f, hi: float, *, lo: float = 0.0, tol: float = ROOT_TOL) -> float:
    """Largest ``lam`` in ``[lo, hi]`` with ``f(lam) <= 1`` for increasing ``f``.

    ``f`` may return None outside its domain; such points count as ``> 1``.
    """
    def ok(lam):
        v = f(lam)
        return v is not None and v <= 1.0

    if ok(hi):
        return hi
    if not ok(lo):
        raise NumericError(f"f({lo}) > 1: no admissible lambda")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class SeriesBracket:
    lo: float
    hi: float  # inf when the partial sum never reaches 1
    open_ended: bool
    heuristic: bool
    asymptotic_ratio: Optional[float]
    series: PhiSeries


def _asymptotic_ratio(coefs: np.ndarray) -> Optional[float]:
    """Growth rate of the coefficients from their trailing half.

    Ratios between consecutive non-zero coefficients (taken per unit step,
    which handles bipartite zeros) are extrapolated linearly in ``1/n``.
    """
    N = len(coefs)
    idx = np.nonzero(coefs[N // 2:] > 0)[0] + N // 2 + 1
    if len(idx) < 2:
        return None
    c = coefs[idx - 1]
    with np.errstate(divide="ignore"):
        logc = np.log(c)
    gaps = np.diff(idx)
    ratios = np.exp(np.diff(logc) / gaps)
    if len(ratios) < 3:
        return float(ratios[-1])
    inv_n = 1.0 / idx[1:]
    slope, intercept = np.polyfit(inv_n, ratios, 1)
    if not intercept > 0:
        return float(ratios[-1])
    return float(intercept)


def lambda_s_series(source, x, N: int = 200, tol: float = 1e-3, *,
                    lam_max: float = 1e6, cap: int = DEFAULT_BALL_CAP) -> SeriesBracket:
    """Bracket for ``lambda_s(x)`` from the truncated first-return series.

    ``hi`` is the largest root of ``Phi_N = 1``; since ``Phi_N`` underestimates
    ``Phi`` this is an upper bound.  ``lo`` is a heuristic: the largest lambda
    at which the extrapolated coefficient tail still decays geometrically
    with ratio ``<= 1 - tol``, capped at ``hi``.
    """
    series = phi_coefficients(source, x, x, N, cap=cap)
    top = 1.0
    while phi_eval(series, top) <= 1.0:
        top *= 2.0
        if top > lam_max:
            gamma = _asymptotic_ratio(series.coefficients)
            lo = (1 - tol) / gamma if gamma else math.inf
            return SeriesBracket(lo, math.inf, True, True, gamma, series)
    hi = max_root(lambda lam: phi_eval(series, lam), top)
    gamma = _asymptotic_ratio(series.coefficients)
    lo = hi if gamma is None else min(hi, (1 - tol) / gamma)
    return SeriesBracket(lo, hi, False, True, gamma, series)


# ---------------------------------------------------------------------------
# spectral and row-sum routes

def _finite_kernel(source) -> sp.csr_matrix:
    if isinstance(source, BrwModel):
        if not isinstance(source.space, FiniteGraph):
            raise ModelError("spectral route needs a finite graph")
        n = source.space.n
        g = VertexClasses(source)
        rows, cols, vals = [], [], []
        for xv in range(n):
            for y, mult, rf in g.transitions(xv):
                rows.append(xv)
                cols.append(y)
                vals.append(mult * rf.first_moment())
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    mat = sp.csr_matrix(source, dtype=float)
    if mat.shape[0] != mat.shape[1]:
        raise ModelError("kernel must be square")
    if mat.nnz and mat.data.min() < 0:
        raise ModelError("kernel entries must be non-negative")
    return mat


def is_irreducible(kernel) -> bool:
    mat = sp.csr_matrix(kernel)
    mat.eliminate_zeros()
    n, _ = connected_components(mat, directed=True, connection="strong")
    return n == 1


@dataclass
class SpectralResult:
    value: float  # 1 / spectral radius
    radius: float
    radius_lo: float
    radius_hi: float
    iterations: int


def spectral_radius(kernel, rtol: float = 1e-10, max_iter: int = 1_000_000) -> SpectralResult:
    """Perron root of an irreducible non-negative matrix.

    Power iteration on ``K + cI`` (the shift makes the iteration aperiodic)
    with Collatz-Wielandt bounds ``min/max (Av)_i / v_i`` as stopping rule.
    """
    K = sp.csr_matrix(kernel, dtype=float)
    n = K.shape[0]
    if not is_irreducible(K):
        raise ModelError("kernel is reducible")
    A = K.toarray() if n <= 2000 else K
    shift = float(abs(K).sum(axis=1).max())
    if shift == 0:
        return SpectralResult(math.inf, 0.0, 0.0, 0.0, 0)
    v = np.ones(n)
    lo = hi = shift
    for it in range(1, max_iter + 1):
        w = A @ v + shift * v
        q = w / v
        lo, hi = float(q.min()) - shift, float(q.max()) - shift
        v = w / w.max()
        if hi - lo <= rtol * max(hi, 1e-300):
            break
    else:
        raise NumericError(f"power iteration did not converge in {max_iter} steps")
    rho = 0.5 * (lo + hi)
    return SpectralResult(1.0 / rho, rho, lo, hi, it)


def lambda_s_spectral(source, x=None, rtol: float = 1e-10) -> float:
    """``1/rho(K)``: on a finite irreducible kernel the return-count growth
    rate ``limsup (k^(n)_xx)^(1/n)`` is the Perron root for every ``x``."""
    K = _finite_kernel(source)
    if x is not None and not (0 <= int(x) < K.shape[0]):
        raise ModelError(f"vertex {x!r} outside kernel")
    return spectral_radius(K, rtol).value


@dataclass
class RowSumBound:
    lo: float
    sequence: list  # (sum_y k^(n)_xy)^(1/n), n = 1..N


def rowsum_roots(source, x, N: int, cap: int = DEFAULT_BALL_CAP) -> list:
    # row sums only need x inside a class, not a singleton class
    graph = _graph(source)
    cx = graph.class_of(x)
    _, index, L = graph.local_kernel(cx, N, cap=cap)
    ix = index[cx]
    v = np.ones(L.shape[0])
    log_scale = 0.0
    out = []
    for n in range(1, N + 1):
        v = L @ v
        s = v[ix]
        out.append(math.exp((math.log(s) + log_scale) / n) if s > 0 else 0.0)
        m = v.max()
        if m <= 0:
            out.extend([0.0] * (N - n))
            break
        v /= m
        log_scale += math.log(m)
    return out


def lambda_w_bound(source, x, N: int = 200, *, window: float = 0.5,
                   cap: int = DEFAULT_BALL_CAP) -> RowSumBound:
    """Lower bound ``1/liminf (sum_y k^(n)_xy)^(1/n)`` on ``lambda_w(x)``.

    The liminf is proxied by the max over the trailing ``window`` fraction of
    the computed roots; the whole sequence is returned.
    """
    seq = rowsum_roots(source, x, N, cap)
    tail = seq[int(len(seq) * (1 - window)):] or seq
    top = max(tail)
    return RowSumBound(1.0 / top if top > 0 else math.inf, seq)


def return_roots(source, x, N: int, cap: int = DEFAULT_BALL_CAP) -> list:
    """``(k^(n)_xx)^(1/n)`` for n = 1..N (zeros where no return is possible)."""
    graph = _graph(source, anchor=x if isinstance(source, BrwModel) else None)
    cx = graph.class_of(x)
    if not graph.is_singleton(cx):
        _check_tree_ball(source, N, cap)
        graph = VertexClasses(source)
        cx = graph.class_of(x)
    _, index, L = graph.local_kernel(cx, N, cap=cap)
    ix = index[cx]
    v = np.zeros(L.shape[0])
    v[ix] = 1.0
    LT = L.T.tocsr()
    log_scale = 0.0
    out = []
    for n in range(1, N + 1):
        v = LT @ v
        s = v[ix]
        out.append(math.exp((math.log(s) + log_scale) / n) if s > 0 else 0.0)
        m = v.max()
        v /= m
        log_scale += math.log(m)
    return out


# ---------------------------------------------------------------------------
# reports

def critical_diagnostics(source, x, N: int = 200, cap: int = DEFAULT_BALL_CAP) -> CriticalReport:
    """Generic report from the series bracket and the row-sum bound.

    On finite irreducible graphs the spectral value replaces the series
    bracket for ``lambda_s`` and is also exact for ``lambda_w`` (a finite
    irreducible BRW has no pure global survival phase).
    """
    bound = lambda_w_bound(source, x, N, cap=cap)
    finite = not isinstance(source, BrwModel) or isinstance(source.space, FiniteGraph)
    diag = {}
    if finite:
        K = _finite_kernel(source)
        if is_irreducible(K):
            spec = spectral_radius(K)
            ls = CriticalEstimate(spec.value, "spectral",
                                  1 / spec.radius_hi if spec.radius_hi else math.inf,
                                  1 / spec.radius_lo if spec.radius_lo else math.inf)
            lw = CriticalEstimate(spec.value, "finite_exact", ls.lo, ls.hi)
            return CriticalReport(ls, lw, bound.sequence, diagnostics={"rowsum_bound": bound.lo})
        diag["reducible"] = True
    br = lambda_s_series(source, x, N, cap=cap)
    ls = CriticalEstimate(None if br.open_ended else br.hi, "series_root", br.lo, br.hi, heuristic=True)
    lw_hi = br.hi
    lw = CriticalEstimate(None, "rowsum_bound", bound.lo, max(lw_hi, bound.lo))
    diag.update(series_order=N, series_hi=br.hi, series_lo=br.lo,
                asymptotic_ratio=br.asymptotic_ratio, center=format_vertex(x))
    return CriticalReport(ls, lw, bound.sequence, diagnostics=diag)


def classify_phase(lam: float, report: CriticalReport, tol: float = 1e-9) -> str:
    w_lo, w_hi = report.lambda_w.interval()
    s_lo, s_hi = report.lambda_s.interval()
    if w_lo - tol <= lam <= w_hi + tol or s_lo - tol <= lam <= s_hi + tol:
        return "at_boundary"
    if lam < w_lo:
        return "globally_subcritical"
    if lam < s_lo:
        return "pure_global"
    return "locally_supercritical"


@dataclass
class Relation:
    name: str
    holds: Optional[bool]  # None: not applicable
    active: bool
    detail: str


def maximality_check(base: CriticalReport, modified: CriticalReport, tol: float = 1e-9,
                     *, base_model: BrwModel | None = None,
                     modified_model: BrwModel | None = None,
                     rowsum_lower: float | None = None) -> list[Relation]:
    """Check the three maximality relations between a transitive base with a
    pure global phase and a local modification of it.

    ``rowsum_lower`` optionally supplies the row-sum lower bound for the
    modified ``lambda_w``, checked as a fourth relation.
    """
    if base_model is not None and modified_model is not None:
        if not is_local_modification(base_model, modified_model):
            raise ModelError("modified model is not a local modification of the base")
    lw, ls = base.lambda_w.value, base.lambda_s.value
    lw2, ls2 = modified.lambda_w.value, modified.lambda_s.value
    names = ("lw_star_le_lw", "lw_star_lt_ls_star_implies_equal", "ls_star_vs_lw")
    if None in (lw, ls, lw2, ls2) or not lw < ls - tol:
        why = "base lacks a pure global survival phase" if None not in (lw, ls) else "values unavailable"
        return [Relation(n, None, False, why) for n in names]

    def eq(a, b):
        return abs(a - b) <= tol

    out = [Relation(names[0], lw2 <= lw + tol, True, f"lw*={lw2:.12g} lw={lw:.12g}")]
    if lw2 < ls2 - tol:
        out.append(Relation(names[1], eq(lw2, lw), True, f"lw*={lw2:.12g} ls*={ls2:.12g}"))
    else:
        out.append(Relation(names[1], True, False, "antecedent lw* < ls* is false"))
    if ls2 <= lw + tol:
        ok = eq(lw2, ls2) and ls2 <= lw + tol
        out.append(Relation(names[2], ok, True, "ls* <= lw so lw* = ls* <= lw"))
    else:
        ok = eq(lw2, lw) and lw < ls2
        out.append(Relation(names[2], ok, True, "ls* > lw so lw* = lw < ls*"))
    if rowsum_lower is not None:
        out.append(Relation("rowsum_lower_bound", rowsum_lower <= lw2 + tol, True,
                            f"bound={rowsum_lower:.12g}"))
    return out


# ---------------------------------------------------------------------------
# closed forms on T_d with a modification at the root

def _sqrt_clamped(arg: float) -> float | None:
    if arg < 0:
        if arg < -BRANCH_CLAMP:
            return None
        arg = 0.0
    return math.sqrt(arg)


def phi_tree(d: int, k: float, lam: float) -> float | None:
    """First-return function of the root of T_d with constant edge moment ``k``."""
    r = _sqrt_clamped(1.0 - 4.0 * (d - 1) * lam * lam * k * k)
    if r is None:
        return None
    return d * (1.0 - r) / (2.0 * (d - 1))


def phi_loops(d: int, k: float, k_star: float, lam: float) -> float | None:
    """First-return function on T_d with edge moment ``k`` and loop moment
    ``k_star`` at every vertex (loops at the root count as returns)."""
    c, e = lam * k_star, lam * k
    if c > 1.0:
        return None
    r = _sqrt_clamped((1.0 - c) ** 2 - 4.0 * (d - 1) * e * e)
    if r is None:
        return None
    return d * (1.0 - r) / (2.0 * (d - 1)) + c * (d - 2) / (2.0 * (d - 1))


def _tree_radius(d: int, k: float) -> float:
    return 1.0 / (2.0 * k * math.sqrt(d - 1))


def _scn_radius(scn) -> float:
    a = scn.alpha
    if scn.name in ("homtree", "treeloop"):
        return _tree_radius(scn.d, scn.k)
    if scn.name == "agelooptree":
        return (a + 1.0) * _tree_radius(scn.d, scn.k)
    return (a + 1.0) / (scn.k_star + 2.0 * scn.k * math.sqrt(scn.d - 1))


def phi_closed_tree(scn, lam: float) -> float | None:
    """Exact ``Phi(o,o|lam)`` for a named scenario; None beyond the branch point."""
    from .model import Scenario, SCENARIOS
    if not isinstance(scn, Scenario):
        raise ModelError(f"expected a Scenario, got {scn!r}")
    if scn.name not in SCENARIOS:
        raise ModelError(f"unknown scenario {scn.name!r}")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if lam > _scn_radius(scn) * (1 + 1e-15):
        return None
    d, k, a, ao = scn.d, scn.k, scn.alpha, scn.alpha_o
    if scn.name == "homtree":
        return phi_tree(d, k, lam)
    if scn.name == "treeloop":
        base = phi_tree(d, k, lam)
        return None if base is None else base + scn.k_oo * lam
    if scn.name == "agelooptree":
        base = phi_tree(d, 1.0, lam * k / (a + 1.0))
        if base is None:
            return None
        return (a + 1.0) / (ao + 1.0) * base + lam * scn.k_oo / (ao + 1.0)
    base = phi_loops(d, k / (a + 1.0), scn.k_star / (a + 1.0), lam)
    return None if base is None else (a + 1.0) / (ao + 1.0) * base


def _phi_at_branch(scn) -> float:
    """``Phi*`` at the branch point with the vanishing square root dropped
    exactly; evaluating it numerically leaves an O(sqrt(eps)) error."""
    d, R = scn.d, _scn_radius(scn)
    half = d / (2.0 * (d - 1))
    if scn.name in ("homtree", "treeloop"):
        return half + scn.k_oo * R
    a, ao = scn.alpha, scn.alpha_o
    if scn.name == "agelooptree":
        return (a + 1.0) / (ao + 1.0) * half + R * scn.k_oo / (ao + 1.0)
    c = R * scn.k_star / (a + 1.0)
    return (a + 1.0) / (ao + 1.0) * (half + c * (d - 2) / (2.0 * (d - 1)))


def base_critical(scn) -> tuple[float, float]:
    """``(lambda_w, lambda_s)`` of the transitive base of a scenario."""
    b = scn.base()
    d, k, a = b.d, b.k, b.alpha
    if b.name == "homtree":
        return 1.0 / (k * d), _tree_radius(d, k)
    if b.name == "agelooptree":
        return (a + 1.0) / (k * d), (a + 1.0) * _tree_radius(d, k)
    return (a + 1.0) / (k * d + b.k_star), (a + 1.0) / (b.k_star + 2.0 * k * math.sqrt(d - 1))


def treeloop_lambda_s(d: int, k: float, k_oo: float) -> float:
    """Positive root of ``Phi_T + k_oo lam = 1`` for a loop strong enough to
    push the root below the branch point."""
    return ((d - 2) * k_oo + d * math.sqrt(k_oo ** 2 + 4 * k ** 2)) / \
        (2.0 * ((d * k) ** 2 + (d - 1) * k_oo ** 2))


def treeloop_thresholds(d: int, k: float) -> tuple[float, float]:
    """Loop strengths where ``lambda_s*`` leaves ``lambda_s`` and reaches ``lambda_w``."""
    return k * (d - 2) / math.sqrt(d - 1), k * d * (d - 2) / (d - 1)


def agelooptree_k1(d: int, k: float, alpha: float, alpha_o: float) -> float:
    """Largest root loop strength keeping ``lambda_s*`` equal to ``lambda_s``
    (not positive when the root edges alone already lower ``lambda_s*``)."""
    return ((alpha_o + 1) / (alpha + 1) - d / (2.0 * (d - 1))) * 2.0 * k * math.sqrt(d - 1)


def agelooptree_k2(d: int, k: float, alpha: float, alpha_o: float) -> float:
    """Root loop strength at which ``lambda_s*`` reaches ``lambda_w``: the
    ``k_oo`` solving ``Phi*(o,o|lambda_w) = 1``."""
    return k * d * ((alpha_o + 1) / (alpha + 1) - 1.0 / (d - 1))


def agelooptree_k2_printed(d: int, k: float, alpha: float, alpha_o: float) -> float:
    """Alternative expression ``kd((a_o+1)/(a+1) + d(d-3)/(2(d-1)))`` kept for
    comparison; it does not locate the transition (see the tests)."""
    return k * d * ((alpha_o + 1) / (alpha + 1) + d * (d - 3) / (2.0 * (d - 1)))


def closed_form_critical(scn, tol: float = ROOT_TOL, boundary_tol: float = 1e-9) -> CriticalReport:
    """Critical parameters of a named scenario from its exact ``Phi``.

    ``lambda_s*`` is the branch point when ``Phi*`` there is ``<= 1`` and the
    root of ``Phi* = 1`` otherwise.  ``lambda_w*`` follows from the base
    values: it equals ``lambda_s*`` when ``lambda_s* <= lambda_w`` and stays at
    ``lambda_w`` otherwise.  Regimes: 1 (``lambda_s* = lambda_s``),
    2 (``lambda_w* = lambda_w < lambda_s* < lambda_s``), 3 (``lambda_w* = lambda_s*``).
    """
    w, s = base_critical(scn)
    R = _scn_radius(scn)
    scn_d = scn.to_dict()
    base_d = {"lambda_w": w, "lambda_s": s}
    if scn.name == "homtree":
        return CriticalReport(CriticalEstimate(s, "closed_form"), CriticalEstimate(w, "closed_form"),
                              scenario=scn_d, base=base_d)
    phi = lambda lam: phi_closed_tree(scn, lam)  # noqa: E731
    at_r = _phi_at_branch(scn)
    diag = {"phi_at_branch_point": at_r, "branch_point": R}
    at_branch = at_r <= 1.0
    if at_branch:
        ls, method = R, "closed_form"
    else:
        ls = max_root(phi, R, tol=tol)
        method = "phi_root"
        diag["phi_root"] = ls
        if scn.name == "treeloop":
            ls = treeloop_lambda_s(scn.d, scn.k, scn.k_oo)
            method = "closed_form"
    lw = ls if ls <= w else w
    regime = 1 if at_branch else (3 if ls <= w else 2)
    near = abs(at_r - 1.0) <= boundary_tol or abs(ls - w) <= boundary_tol
    if scn.name == "treeloop":
        diag["thresholds"] = list(treeloop_thresholds(scn.d, scn.k))
    elif scn.name == "agelooptree":
        diag["k1"] = agelooptree_k1(scn.d, scn.k, scn.alpha, scn.alpha_o)
        diag["k2"] = agelooptree_k2(scn.d, scn.k, scn.alpha, scn.alpha_o)
    return CriticalReport(CriticalEstimate(ls, method), CriticalEstimate(lw, "closed_form"),
                          scenario=scn_d, regime=regime, at_regime_boundary=near,
                          base=base_d, diagnostics=diag)


def base_report(scn) -> CriticalReport:
    return closed_form_critical(scn.base())
