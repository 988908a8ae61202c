"""Exact simulation of ageing BRWs and Monte Carlo estimators.

Two engines are provided:

* event-driven, in real time, where every individual pre-samples its lifetime
  and all of its offspring times at creation;
* generational, through the discrete-time counterpart in which an individual
  living ``T ~ Exp(1)`` places ``Poisson(lam * cumulative(r_xy, T))`` children
  at each ``y``.  The generational engine works on class counts (see
  :func:`agebrw.model.class_graph`), which keeps trees cheap.

Every trial owns a PCG64 stream derived from ``SeedSequence(seed,
spawn_key=(trial,))``, so results depend only on ``(seed, trial)`` and are
reduced in trial order whatever the thread count.  In coupled mode each
individual gets its own stream keyed by its genealogical label; two runs at
different lambda then share every lifetime, every birth-time uniform and
every count uniform, and the smaller-lambda population is a subset of the
larger one.
"""
from __future__ import annotations

import csv
import heapq
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import poisson

from .model import (
    ROOT,
    BrwModel,
    HomogeneousTree,
    RadialClasses,
    VertexClasses,
    neighbors,
)
from .rates import ExpDecay, RateFunction

WILSON_Z = 1.959963984540054  # two-sided 95%
DEFAULT_POP_CAP = 10_000
DEFAULT_GENERATIONS = 200
DEFAULT_LOCAL_L = 10
DEFAULT_MAX_EVENTS = 50_000_000


class SimulationError(RuntimeError):
    pass


def make_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(key))))


@dataclass(frozen=True)
class SimConfig:
    lam: Optional[float] = None  # None: use the model's lambda
    horizon: float = 10.0  # real time (event-driven)
    generations: int = DEFAULT_GENERATIONS
    pop_cap: int = DEFAULT_POP_CAP
    seed: int = 0
    trials: int = 1
    target_set: tuple = ()
    start: object = None  # vertex; None means the root / vertex 0
    v0: int = 1
    grid: Optional[tuple] = None  # sample times; default 0..horizon step 0.1
    local_l: int = DEFAULT_LOCAL_L
    threads: int = 1
    coupled: bool = False
    max_events: int = DEFAULT_MAX_EVENTS

    def __post_init__(self):
        if self.lam is not None and not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError("lambda must be finite and >= 0")
        if not self.horizon > 0:
            raise ValueError("horizon must be > 0")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if self.pop_cap < 1:
            raise ValueError("pop_cap must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.v0 < 1:
            raise ValueError("v0 must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.grid is not None:
            g = tuple(float(t) for t in self.grid)
            if any(t < 0 for t in g) or list(g) != sorted(g):
                raise ValueError("grid must be sorted non-negative times")
            if g and g[-1] > self.horizon:
                raise ValueError("grid extends beyond the horizon")
            object.__setattr__(self, "grid", g)

    def speed(self, model: BrwModel) -> float:
        return model.lam if self.lam is None else self.lam

    def time_grid(self) -> np.ndarray:
        if self.grid is not None:
            return np.asarray(self.grid, dtype=float)
        n = int(round(self.horizon / 0.1))
        return np.linspace(0.0, n * 0.1, n + 1)

    def start_vertex(self, model: BrwModel):
        if self.start is not None:
            return model.space.check_vertex(self.start)
        return ROOT if isinstance(model.space, HomogeneousTree) else 0

    def targets(self, model: BrwModel) -> frozenset:
        return frozenset(model.space.check_vertex(v) for v in self.target_set)


# ---------------------------------------------------------------------------
# primitive samplers

def _params(rf: RateFunction) -> tuple[float, float]:
    return (rf.k, rf.alpha) if isinstance(rf, ExpDecay) else (rf.k, 0.0)


def _cum(k: float, a: float, t: float) -> float:
    return k * t if a == 0.0 else -k * math.expm1(-a * t) / a


def _inv_cum(k: float, a: float, u: np.ndarray) -> np.ndarray:
    if a == 0.0:
        return u / k
    return -np.log1p(-a * u / k) / a


def sample_lifetime(rng: np.random.Generator) -> float:
    """Exp(1) by inversion: ``-log U`` with ``U`` uniform on (0, 1]."""
    return -math.log(1.0 - rng.random())


def sample_offspring_times(rf: RateFunction, lam: float, T: float,
                           rng: np.random.Generator) -> np.ndarray:
    """Arrival times in (0, T] of a Poisson process with intensity ``lam * rf(t)``.

    Count first, ``Poisson(lam * cumulative(T))``, then i.i.d. times by
    inverting the cumulative rate at uniform fractions of ``cumulative(T)``.
    """
    if not T > 0:
        raise ValueError("lifetime must be > 0")
    if lam == 0 or rf.is_zero:
        return np.empty(0)
    k, a = _params(rf)
    mass = _cum(k, a, T)
    n = rng.poisson(lam * mass)
    if n == 0:
        return np.empty(0)
    return np.sort(_inv_cum(k, a, rng.random(n) * mass))


def sample_generation_offspring(model: BrwModel, site, rng: np.random.Generator,
                                lam: float | None = None) -> dict:
    """Children per target site of one individual of the discrete-time counterpart."""
    lam = model.lam if lam is None else lam
    nb = neighbors(model, site)
    T = sample_lifetime(rng)
    out = {}
    for y, rf in nb:
        k, a = _params(rf)
        out[y] = int(rng.poisson(lam * _cum(k, a, T)))
    return out


def poisson_quantile(u: float, mu: float) -> int:
    """Smallest ``n`` with ``P(Poisson(mu) <= n) >= u``; monotone in ``mu``."""
    if mu <= 0:
        return 0
    if mu > 500:
        return int(poisson.ppf(u, mu))
    p = math.exp(-mu)
    F = p
    n = 0
    while u > F:
        n += 1
        p *= mu / n
        F += p
        if p == 0.0 and F < u:  # accumulated rounding: u is within eps of 1
            break
    return n


# ---------------------------------------------------------------------------
# event-driven engine

@dataclass
class Individual:
    id: int
    site: object
    birth_time: float
    death_time: float
    parent: Optional[int]


@dataclass
class Trajectory:
    trial: int
    t: np.ndarray
    total: np.ndarray
    target: np.ndarray
    births: np.ndarray  # cumulative births (initial individuals excluded) up to t
    capped: bool
    individuals: Optional[list] = None


class _Sites:
    """Per-site compiled offspring kernels ``(y, k, alpha)`` with a cache."""

    def __init__(self, model: BrwModel):
        self.model = model
        self._cache: dict = {}

    def __call__(self, x):
        out = self._cache.get(x)
        if out is None:
            out = tuple((y,) + _params(rf) for y, rf in neighbors(self.model, x))
            if len(self._cache) < 1_000_000:
                self._cache[x] = out
        return out


def run_event_driven(model: BrwModel, config: SimConfig, rng: np.random.Generator | None = None,
                     *, trial: int = 0, record: bool = False, sites=None) -> Trajectory:
    """One exact realisation on ``[0, horizon]`` sampled on ``config.time_grid()``.

    ``rng`` drives the whole trial; in coupled mode it is ignored and
    per-individual streams keyed by ``(seed, trial, label)`` are used instead.
    """
    lam = config.speed(model)
    horizon = config.horizon
    grid = config.time_grid()
    targets = config.targets(model)
    start = config.start_vertex(model)
    sites = _Sites(model) if sites is None else sites
    coupled = config.coupled
    if rng is None and not coupled:
        rng = make_rng(config.seed, trial)

    births: list = []  # heap of (time, seq, site, parent_id, label, stream)
    deaths: list = []  # heap of (time, site)
    people = [] if record else None
    seq = 0
    for j in range(config.v0):
        label = (j,)
        stream = make_rng(config.seed, trial, *label) if coupled else None
        births.append((0.0, seq, start, None, label, stream))
        seq += 1
    heapq.heapify(births)

    n_grid = len(grid)
    total = np.zeros(n_grid, dtype=np.int64)
    tgt = np.zeros(n_grid, dtype=np.int64)
    born = np.zeros(n_grid, dtype=np.int64)
    gi = 0
    alive = alive_t = births_so_far = 0
    capped = False
    events = 0
    next_id = 0
    inf = math.inf

    while True:
        tb = births[0][0] if births else inf
        td = deaths[0][0] if deaths else inf
        now = tb if tb < td else td
        while gi < n_grid and grid[gi] < now:
            total[gi], tgt[gi], born[gi] = alive, alive_t, births_so_far
            gi += 1
        if now > horizon:
            break
        events += 1
        if events > config.max_events:
            raise SimulationError(f"event limit {config.max_events} exceeded")
        if td <= tb:
            _, site = heapq.heappop(deaths)
            alive -= 1
            if site in targets:
                alive_t -= 1
            continue
        t0, _, site, parent, label, stream = heapq.heappop(births)
        alive += 1
        if parent is not None:
            births_so_far += 1
        if site in targets:
            alive_t += 1
        if alive >= config.pop_cap:
            capped = True
            break
        r = stream if coupled else rng
        T = -math.log(1.0 - r.random())
        death = t0 + T
        heapq.heappush(deaths, (death, site))
        me = next_id
        next_id += 1
        if record:
            people.append(Individual(me, site, t0, death, parent))
        if lam == 0:
            continue
        kern = sites(site)
        if coupled:
            us = r.random(len(kern))
            for i, (y, k, a) in enumerate(kern):
                mass = _cum(k, a, T)
                n = poisson_quantile(float(us[i]), lam * mass)
                for j in range(n):
                    child_label = label + (i, j)
                    cs = make_rng(config.seed, trial, *child_label)
                    tau = float(_inv_cum(k, a, np.array([cs.random() * mass]))[0])
                    tc = t0 + tau
                    if tc <= horizon:
                        heapq.heappush(births, (tc, seq, y, me, child_label, cs))
                        seq += 1
            continue
        for y, k, a in kern:
            mass = _cum(k, a, T)
            n = rng.poisson(lam * mass)
            if n:
                for tau in _inv_cum(k, a, rng.random(n) * mass):
                    tc = t0 + float(tau)
                    if tc <= horizon:
                        heapq.heappush(births, (tc, seq, y, me, None, None))
                        seq += 1
    while gi < n_grid:
        total[gi], tgt[gi], born[gi] = alive, alive_t, births_so_far
        gi += 1
    return Trajectory(trial, grid, total, tgt, born, capped, people)


# ---------------------------------------------------------------------------
# generational engine

@dataclass
class GenerationalResult:
    extinct_at_generation: Optional[int]
    capped: bool
    visited_target: bool
    target_generations: int  # generations n >= 1 with the target set occupied
    generations_run: int
    max_population: int


def _sim_classes(model: BrwModel, targets: frozenset, start):
    space = model.space
    if isinstance(space, HomogeneousTree):
        support = model.rates.support
        anchors = set(support) | set(targets)
        if len(anchors) <= 1:
            anchor = next(iter(anchors)) if anchors else start
            return RadialClasses(model, anchor)
    return VertexClasses(model)


class _Compiled:
    """Per-class offspring kernels split into constant and decaying parts."""

    def __init__(self, graph, lam: float):
        self.graph = graph
        self.lam = lam
        self._cache: dict = {}

    def __call__(self, c):
        out = self._cache.get(c)
        if out is None:
            const_t, const_w, dec = [], [], []
            for tgt, mult, rf in self.graph.transitions(c):
                k, a = _params(rf)
                if a == 0.0:
                    const_t.append(tgt)
                    const_w.append(self.lam * mult * k)
                else:
                    dec.append((tgt, self.lam * mult * k / a, a))
            out = (const_t, np.array(const_w), dec)
            self._cache[c] = out
        return out


def run_generational(model: BrwModel, config: SimConfig, rng: np.random.Generator | None = None,
                     *, trial: int = 0) -> GenerationalResult:
    """Discrete-time counterpart up to ``config.generations`` generations.

    With ``Z`` individuals in a class, the total mass along a constant-rate
    transition is ``k * sum T_i`` with ``sum T_i ~ Gamma(Z)``; the children
    count given the lifetimes is Poisson, and different transitions are
    conditionally independent, so one Gamma draw per class suffices.
    """
    if rng is None:
        rng = make_rng(config.seed, trial)
    lam = config.speed(model)
    targets = config.targets(model)
    start = config.start_vertex(model)
    graph = _sim_classes(model, targets, start)
    comp = _Compiled(graph, lam)
    target_classes = frozenset(graph.class_of(v) for v in targets)
    state = {graph.class_of(start): config.v0}
    pop = config.v0
    max_pop = pop
    hits = 0
    cap = config.pop_cap
    if pop >= cap:
        return GenerationalResult(None, True, False, 0, 0, pop)
    for gen in range(1, config.generations + 1):
        new: dict = {}
        for c, z in state.items():
            const_t, const_w, dec = comp(c)
            if dec:
                life = rng.standard_exponential(z)
                s_life = life.sum()
            else:
                s_life = rng.gamma(z) if const_t else 0.0
            if const_t:
                counts = rng.poisson(const_w * s_life)
                for tgt, n in zip(const_t, counts):
                    if n:
                        new[tgt] = new.get(tgt, 0) + int(n)
            for tgt, w, a in dec:
                n = rng.poisson(w * float(-np.expm1(-a * life).sum()))
                if n:
                    new[tgt] = new.get(tgt, 0) + int(n)
        state = new
        pop = sum(new.values())
        if pop > max_pop:
            max_pop = pop
        if target_classes and any(c in target_classes for c in new):
            hits += 1
        if pop == 0:
            return GenerationalResult(gen, False, hits > 0, hits, gen, max_pop)
        if pop >= cap:
            return GenerationalResult(None, True, hits > 0, hits, gen, max_pop)
    return GenerationalResult(None, False, hits > 0, hits, config.generations, max_pop)


# ---------------------------------------------------------------------------
# estimators

def wilson_interval(successes: int, trials: int, z: float = WILSON_Z) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("trials must be >= 1")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return lo, hi


@dataclass
class SurvivalEstimate:
    event: str
    successes: int
    trials: int
    estimate: float
    wilson_lo: float
    wilson_hi: float
    pop_cap: int
    generations: int

    @classmethod
    def from_counts(cls, event, successes, trials, pop_cap, generations):
        lo, hi = wilson_interval(successes, trials)
        return cls(event, int(successes), int(trials), successes / trials, lo, hi,
                   int(pop_cap), int(generations))

    def to_dict(self) -> dict:
        return {"event": self.event, "successes": self.successes, "trials": self.trials,
                "estimate": self.estimate, "wilson_lo": self.wilson_lo,
                "wilson_hi": self.wilson_hi, "pop_cap": self.pop_cap,
                "generations": self.generations}


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("BRW_THREADS", "1") or 1)
    return max(1, int(threads))


def _map_trials(fn, trials: int, threads: int) -> list:
    """``[fn(i) for i in range(trials)]``, in order, optionally on a thread pool."""
    if threads <= 1 or trials < 2:
        return [fn(i) for i in range(trials)]
    chunk = max(1, trials // (threads * 8))
    starts = range(0, trials, chunk)

    def run(s):
        return [fn(i) for i in range(s, min(trials, s + chunk))]

    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(run, starts))
    return [r for part in parts for r in part]


def run_generational_trials(model: BrwModel, config: SimConfig) -> list[GenerationalResult]:
    return _map_trials(lambda i: run_generational(model, config, trial=i),
                       config.trials, config.threads)


def estimate_survival(model: BrwModel, config: SimConfig,
                      results: Sequence[GenerationalResult] | None = None) -> dict:
    """Global (pop_cap reached, and cap/10 for sensitivity) and local
    (target occupied in >= L generations) survival proxies."""
    if results is None:
        results = run_generational_trials(model, config)
    n = len(results)
    cap, G = config.pop_cap, config.generations
    tenth = max(1, cap // 10)
    glob = sum(r.capped for r in results)
    glob10 = sum(r.max_population >= tenth for r in results)
    out = {
        "global": SurvivalEstimate.from_counts("global_pop_cap", glob, n, cap, G),
        "global_cap_tenth": SurvivalEstimate.from_counts("global_pop_cap_tenth", glob10, n, tenth, G),
    }
    if config.target_set:
        loc = sum(r.target_generations >= config.local_l for r in results)
        out["local"] = SurvivalEstimate.from_counts(f"local_L{config.local_l}", loc, n, cap, G)
    return out


def run_event_trials(model: BrwModel, config: SimConfig) -> list[Trajectory]:
    sites = _Sites(model)
    return _map_trials(lambda i: run_event_driven(model, config, trial=i, sites=sites),
                       config.trials, config.threads)


@dataclass
class ExpectationEstimate:
    t: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    trials: int
    capped: int
    target_mean: np.ndarray = field(default=None)


def estimate_expectation(model: BrwModel, config: SimConfig, grid=None,
                         trajectories: Sequence[Trajectory] | None = None) -> ExpectationEstimate:
    """Monte Carlo mean and standard error of the population on ``grid``."""
    if grid is not None:
        config = _with_grid(config, grid)
    if trajectories is None:
        trajectories = run_event_trials(model, config)
    counts = np.array([tr.total for tr in trajectories], dtype=float)
    tcounts = np.array([tr.target for tr in trajectories], dtype=float)
    n = len(trajectories)
    mean = counts.mean(axis=0)
    se = counts.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return ExpectationEstimate(trajectories[0].t, mean, se, n,
                               sum(tr.capped for tr in trajectories), tcounts.mean(axis=0))


def _with_grid(config: SimConfig, grid) -> SimConfig:
    from dataclasses import replace
    grid = tuple(float(t) for t in grid)
    horizon = max(config.horizon, grid[-1]) if grid else config.horizon
    return replace(config, grid=grid, horizon=horizon)


# ---------------------------------------------------------------------------
# output

TRAJECTORY_COLUMNS = ("trial", "t", "total_count", "target_count", "capped")


def trajectories_csv(trajectories: Sequence[Trajectory]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for tr in trajectories:
        for i, t in enumerate(tr.t):
            w.writerow([tr.trial, repr(float(t)), int(tr.total[i]), int(tr.target[i]), int(tr.capped)])
    return buf.getvalue()


def estimates_json(estimates: dict, meta: dict | None = None) -> str:
    payload = {"estimates": [e.to_dict() for e in estimates.values()]}
    if meta:
        payload["meta"] = meta
    return json.dumps(payload, indent=2) + "\n"


__all__ = [
    "SimConfig", "SimulationError", "Individual", "Trajectory", "GenerationalResult",
    "SurvivalEstimate", "ExpectationEstimate", "sample_lifetime", "sample_offspring_times",
    "sample_generation_offspring", "poisson_quantile", "run_event_driven", "run_generational",
    "run_generational_trials", "run_event_trials", "estimate_survival", "estimate_expectation",
    "wilson_interval", "make_rng", "trajectories_csv", "estimates_json", "resolve_threads",
]
