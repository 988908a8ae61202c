"""``brw`` command line: critical parameters, sweeps, simulation, expectations.

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O error.
Heavy modules are imported inside the command handlers to keep start-up fast.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import secrets
import sys
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class ConfigError(Exception):
    pass


class OutputError(Exception):
    pass


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else ("-inf" if v < 0 else "nan"))
    return str(v)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        p = Path(path)
        if p.parent and not p.parent.exists():
            p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(row.get(h)) for h in header])
    return buf.getvalue()


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


# ---------------------------------------------------------------------------
# model selection

SCENARIO_FLAGS = (("d", int), ("k", float), ("k_oo", float), ("k_star", float),
                  ("alpha", float), ("alpha_o", float))


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config (model description and options)")
    p.add_argument("--scenario", help="named scenario: homtree, treeloop, agelooptree, homloops")
    p.add_argument("--d", type=int)
    p.add_argument("--k", type=float)
    p.add_argument("--k-oo", dest="k_oo", type=float)
    p.add_argument("--k-star", dest="k_star", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--alpha-o", dest="alpha_o", type=float)
    p.add_argument("--lambda", dest="lam", type=float)


def _model_section(cfg: dict) -> dict:
    return cfg.get("model", cfg)


def _scenario(args, cfg: dict):
    """Named scenario from flags over config, or None for explicit models."""
    from .model import scenario_from_dict
    data = dict(_model_section(cfg)) if "scenario" in _model_section(cfg) else {}
    if args.scenario:
        data = {"scenario": args.scenario, **{k: v for k, v in data.items() if k != "scenario"}}
    if not data:
        return None
    for name, _ in SCENARIO_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            data[name] = v
    if "d" not in data:
        raise ConfigError("scenario needs --d")
    return scenario_from_dict(data)


def _lambda(args, cfg: dict, default=None):
    if getattr(args, "lam", None) is not None:
        return args.lam
    sec = _model_section(cfg)
    return float(sec["lambda"]) if "lambda" in sec else default


def _model(args, cfg: dict):
    from .model import model_from_dict
    scn = _scenario(args, cfg)
    lam = _lambda(args, cfg, 1.0)
    if scn is not None:
        return scn, scn.model(lam)
    sec = _model_section(cfg)
    if "space" not in sec:
        raise ConfigError("no model: give --scenario or a config with 'space'")
    return None, model_from_dict({**sec, "lambda": lam})


# ---------------------------------------------------------------------------
# critical

REPORT_COLUMNS = ("scenario", "d", "k", "k_oo", "k_star", "alpha", "alpha_o",
                  "lambda_w", "lambda_w_method", "lambda_s", "lambda_s_method", "phase_at_lambda")


def _report_row(scn, report, lam) -> dict:
    from .criticality import classify_phase
    row = dict(scn.to_dict()) if scn is not None else {}
    row["lambda_w"] = report.lambda_w.value if report.lambda_w.value is not None else report.lambda_w.lo
    row["lambda_w_method"] = report.lambda_w.method
    row["lambda_s"] = report.lambda_s.value if report.lambda_s.value is not None else report.lambda_s.hi
    row["lambda_s_method"] = report.lambda_s.method
    row["phase_at_lambda"] = classify_phase(lam, report) if lam is not None else None
    return row


def _critical_report(scn, model, vertex, order: int, diagnostics: bool = True):
    from . import criticality as cr
    if order < 1:
        raise ConfigError("--order must be >= 1")
    if scn is None:
        report = cr.critical_diagnostics(model, vertex, order)
        if report.lambda_s.method == "series_root" and report.lambda_s.value is None:
            raise cr.NumericError(f"truncated first-return series of order {order} never reaches 1; "
                                  "no bracket for lambda_s (raise --order)")
        return report
    report = cr.closed_form_critical(scn)
    if diagnostics:
        m = scn.model()
        bound = cr.lambda_w_bound(m, vertex, order)
        br = cr.lambda_s_series(m, vertex, order)
        report.n_root_sequence = bound.sequence
        report.diagnostics.update(rowsum_bound=bound.lo, series_lo=br.lo,
                                  series_hi=br.hi, series_order=order)
    return report


def cmd_critical(args) -> int:
    from .model import HomogeneousTree, parse_vertex
    cfg = _load_config(args.config)
    scn, model = _model(args, cfg)
    default = "o" if isinstance(model.space, HomogeneousTree) else 0
    vertex = parse_vertex(model.space, args.vertex if args.vertex is not None else default)
    report = _critical_report(scn, model, vertex, args.order, not args.no_diagnostics)
    lam = _lambda(args, cfg)
    data = report.to_dict()
    if lam is not None:
        from .criticality import classify_phase
        data["phase_at_lambda"] = {"lambda": lam, "phase": classify_phase(lam, report)}
    text = _dump_json(data)
    if args.out:
        _write(args.out + ".json", text)
        _write(args.out + ".csv", _csv_text(REPORT_COLUMNS, [_report_row(scn, report, lam)]))
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep

GRID_RE = re.compile(r"^(\w+)=([^:]+):([^:]+):(\d+)$")
THRESH_RE = re.compile(r"^([0-9.eE+-]*)\*?(k1|k2|t1|t2)$")


def _threshold_value(text: str, scn) -> float:
    from . import criticality as cr
    m = THRESH_RE.match(text.strip())
    if not m:
        try:
            return float(text)
        except ValueError as exc:
            raise ConfigError(f"bad grid bound {text!r}") from exc
    mult = float(m.group(1)) if m.group(1) else 1.0
    name = m.group(2)
    if name in ("k1", "k2"):
        fn = cr.agelooptree_k1 if name == "k1" else cr.agelooptree_k2
        return mult * fn(scn.d, scn.k, scn.alpha, scn.alpha_o)
    t1, t2 = cr.treeloop_thresholds(scn.d, scn.k)
    return mult * (t1 if name == "t1" else t2)


def _parse_grid(specs, scn) -> list[tuple[str, list[float]]]:
    import numpy as np
    out = []
    for spec in specs or ():
        m = GRID_RE.match(spec.replace(" ", ""))
        if not m:
            raise ConfigError(f"grid spec {spec!r} must look like name=start:stop:num")
        name = m.group(1)
        if name not in dict(SCENARIO_FLAGS) or name == "d":
            raise ConfigError(f"cannot sweep {name!r}")
        num = int(m.group(4))
        if num < 1:
            raise ConfigError("empty grid")
        lo, hi = _threshold_value(m.group(2), scn), _threshold_value(m.group(3), scn)
        out.append((name, [float(v) for v in np.linspace(lo, hi, num)]))
    if not out:
        raise ConfigError("empty grid")
    if len(out) > 2:
        raise ConfigError("at most two swept parameters")
    return out


def _map_ordered(fn, items, threads: int) -> list:
    if threads <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _threads(args) -> int:
    from .simulate import resolve_threads
    return resolve_threads(args.threads)


def sweep_rows(scn, grids, lam=None, threads: int = 1) -> list[dict]:
    from dataclasses import replace

    from . import criticality as cr
    points = [{}]
    for name, values in grids:
        points = [{**p, name: v} for p in points for v in values]

    def one(pt):
        s = replace(scn, **pt)
        rep = cr.closed_form_critical(s)
        row = _report_row(s, rep, lam)
        row["regime"] = rep.regime
        row["at_regime_boundary"] = rep.at_regime_boundary
        base = cr.base_report(s)
        rels = cr.maximality_check(base, rep)
        for i, rel in enumerate(rels, 1):
            row[f"relation_{i}"] = "na" if rel.holds is None else ("pass" if rel.holds else "fail")
        return row

    return _map_ordered(one, points, threads)


SWEEP_COLUMNS = REPORT_COLUMNS + ("regime", "at_regime_boundary", "relation_1", "relation_2", "relation_3")


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    scn = _scenario(args, cfg)
    if scn is None:
        raise ConfigError("sweep needs a named scenario")
    grids = _parse_grid(args.grid or cfg.get("grid"), scn)
    rows = sweep_rows(scn, grids, _lambda(args, cfg), _threads(args))
    _write(args.out, _csv_text(SWEEP_COLUMNS, rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# check-maximality

def cmd_check_maximality(args) -> int:
    from dataclasses import asdict

    from . import criticality as cr
    cfg = _load_config(args.config)
    scn = _scenario(args, cfg)
    if scn is None:
        raise ConfigError("check-maximality needs a named scenario (the base is derived from it)")
    rep = cr.closed_form_critical(scn)
    base = cr.base_report(scn)
    m_mod, m_base = scn.model(), scn.base().model()
    bound = cr.lambda_w_bound(m_mod, (), args.order).lo
    rels = cr.maximality_check(base, rep, base_model=m_base, modified_model=m_mod, rowsum_lower=bound)
    data = {
        "scenario": scn.to_dict(),
        "base": {"lambda_w": base.lambda_w.value, "lambda_s": base.lambda_s.value},
        "modified": {"lambda_w": rep.lambda_w.value, "lambda_s": rep.lambda_s.value,
                     "regime": rep.regime},
        "relations": [asdict(r) for r in rels],
        "all_hold": all(r.holds is not False for r in rels),
    }
    _write(args.out, _dump_json(data))
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate

def _sim_config(args, cfg: dict, model):
    from .model import parse_vertex
    from .simulate import SimConfig
    sim = dict(cfg.get("sim", {}))
    for flag, key in (("horizon", "horizon"), ("generations", "generations"),
                      ("pop_cap", "pop_cap"), ("trials", "trials"), ("local_l", "local_l"),
                      ("v0", "v0")):
        v = getattr(args, flag, None)
        if v is not None:
            sim[key] = v
    seed = args.seed if args.seed is not None else sim.get("seed")
    auto = seed is None
    if auto:
        seed = secrets.randbits(63)
    targets = args.target if args.target else sim.get("target_set", ())
    start = getattr(args, "start", None) or sim.get("start")
    known = {"horizon", "generations", "pop_cap", "trials", "local_l", "v0", "grid"}
    extra = {k: sim[k] for k in known if k in sim}
    try:
        config = SimConfig(
            lam=model.lam, seed=int(seed),
            target_set=tuple(parse_vertex(model.space, t) for t in targets),
            start=parse_vertex(model.space, start) if start is not None else None,
            threads=_threads(args), coupled=bool(getattr(args, "coupled", False) or sim.get("coupled")),
            **extra,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return config, auto


def cmd_simulate(args) -> int:
    from .model import format_vertex, model_to_dict
    from .simulate import (estimate_expectation, estimate_survival, run_event_trials,
                           run_generational_trials, trajectories_csv)
    cfg = _load_config(args.config)
    scn, model = _model(args, cfg)
    config, auto = _sim_config(args, cfg, model)
    meta = {
        "seed": config.seed, "seed_auto_generated": auto, "trials": config.trials,
        "lambda": config.speed(model), "mode": args.mode,
        "model": scn.to_dict() if scn is not None else model_to_dict(model),
        "target_set": [format_vertex(v) for v in config.target_set],
        "local_l": config.local_l, "coupled": config.coupled,
    }
    out = {"meta": meta}
    prefix = args.out
    if args.mode in ("event", "both"):
        trajs = run_event_trials(model, config)
        est = estimate_expectation(model, config, trajectories=trajs)
        out["expectation"] = {"t": [float(t) for t in est.t], "mean": [float(v) for v in est.mean],
                              "stderr": [float(v) for v in est.stderr], "capped": est.capped}
        csv_text = trajectories_csv(trajs)
        if prefix:
            _write(prefix + "_trajectories.csv", csv_text)
    if args.mode in ("generational", "both"):
        results = run_generational_trials(model, config)
        ests = estimate_survival(model, config, results)
        out["estimates"] = [e.to_dict() for e in ests.values()]
    text = _dump_json(out)
    _write(prefix + "_summary.json" if prefix else None, text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# expect / compare

REFERENCE_PAIRS = ((2.52, 1.5), (2.5, 1.5), (2.45, 1.5), (4.0, 4.0))


def _expect_csv(lam, alpha, v0, T, dt, h) -> tuple[str, int]:
    from .expectation import ExpectationParams, trajectory
    tr = trajectory(ExpectationParams(lam, alpha, v0), T, dt, h)
    return _csv_text(("t", "V_closed", "S_closed", "V_rk4", "regime_case"), list(tr.rows())), tr.case


def cmd_expect(args) -> int:
    cfg = _load_config(args.config)
    lam = args.lam if args.lam is not None else cfg.get("lambda")
    alpha = args.alpha if args.alpha is not None else cfg.get("alpha")
    if lam is None or alpha is None:
        raise ConfigError("expect needs --lambda and --alpha")
    h = None if args.no_rk4 else args.h
    text, _ = _expect_csv(float(lam), float(alpha), args.v0, args.T, args.dt, h)
    _write(args.out, text)
    return EXIT_OK


def _parse_pairs(text: str | None):
    if not text:
        return REFERENCE_PAIRS
    pairs = []
    for chunk in text.split(";"):
        if chunk.strip():
            try:
                a, b = chunk.split(",")
                pairs.append((float(a), float(b)))
            except ValueError as exc:
                raise ConfigError(f"bad pair {chunk!r}; use 'lam,alpha;lam,alpha'") from exc
    if not pairs:
        raise ConfigError("no (lambda, alpha) pairs")
    return tuple(pairs)


def cmd_compare(args) -> int:
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {out_dir}: {exc}") from exc
    index = []
    for lam, alpha in _parse_pairs(args.pairs):
        text, case = _expect_csv(lam, alpha, args.v0, args.T, args.dt, args.h)
        name = f"compare_lambda{lam:g}_alpha{alpha:g}.csv"
        _write(str(out_dir / name), text)
        index.append({"file": name, "lambda": lam, "alpha": alpha, "regime_case": case})
        if args.gnuplot:
            script = (f"set datafile separator ','\nset key autotitle columnhead\n"
                      f"set title 'lambda={lam:g}, alpha={alpha:g} (case {case})'\n"
                      f"plot '{name}' using 1:2 with lines, '' using 1:3 with lines\n")
            _write(str(out_dir / (name[:-4] + ".gp")), script)
    _write(str(out_dir / "index.json"), _dump_json(index))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="brw", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("critical", help="critical parameters of a model")
    _add_model_args(c)
    c.add_argument("--vertex", help="vertex for series/row-sum diagnostics (tree: 'o' or '0.1')")
    c.add_argument("--order", type=int, default=200, help="series truncation order")
    c.add_argument("--no-diagnostics", action="store_true")
    c.add_argument("--out", help="output prefix; writes PREFIX.json and PREFIX.csv")
    c.set_defaults(func=cmd_critical)

    s = sub.add_parser("sweep", help="closed-form critical parameters over a grid")
    _add_model_args(s)
    s.add_argument("--grid", action="append",
                   help="name=start:stop:num; bounds may be k1, k2, t1, t2 or multiples like 2k2")
    s.add_argument("--threads", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("check-maximality", help="validate maximality relations against the base")
    _add_model_args(m)
    m.add_argument("--order", type=int, default=200)
    m.add_argument("--out")
    m.set_defaults(func=cmd_check_maximality)

    r = sub.add_parser("simulate", help="Monte Carlo trajectories and survival estimates")
    _add_model_args(r)
    r.add_argument("--mode", choices=("event", "generational", "both"), default="both")
    r.add_argument("--seed", type=int)
    r.add_argument("--trials", type=int)
    r.add_argument("--horizon", type=float)
    r.add_argument("--generations", type=int)
    r.add_argument("--pop-cap", dest="pop_cap", type=int)
    r.add_argument("--target", action="append", help="target vertex (repeatable)")
    r.add_argument("--start", help="initial vertex")
    r.add_argument("--v0", type=int)
    r.add_argument("--local-l", dest="local_l", type=int)
    r.add_argument("--coupled", action="store_true", help="genealogical common random numbers")
    r.add_argument("--threads", type=int)
    r.add_argument("--out", help="output prefix")
    r.set_defaults(func=cmd_simulate)

    e = sub.add_parser("expect", help="expected population: closed forms and RK4")
    e.add_argument("--config")
    e.add_argument("--lambda", dest="lam", type=float)
    e.add_argument("--alpha", type=float)
    e.add_argument("--v0", type=float, default=1.0)
    e.add_argument("--T", type=float, default=10.0)
    e.add_argument("--dt", type=float, default=0.01)
    e.add_argument("--h", type=float, default=1e-3)
    e.add_argument("--no-rk4", action="store_true")
    e.add_argument("--out")
    e.set_defaults(func=cmd_expect)

    f = sub.add_parser("compare", help="ageing vs equivalent process for several (lambda, alpha)")
    f.add_argument("--pairs", help="'lam,alpha;lam,alpha'; default: the four reference panels")
    f.add_argument("--v0", type=float, default=1.0)
    f.add_argument("--T", type=float, default=10.0)
    f.add_argument("--dt", type=float, default=0.01)
    f.add_argument("--h", type=float, default=1e-3)
    f.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script per file")
    f.add_argument("--out-dir", default="compare_out")
    f.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    from .criticality import NumericError
    from .model import ModelError
    try:
        return args.func(args)
    except (ConfigError, ModelError, KeyError, TypeError, ValueError) as exc:
        print(f"brw: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, ArithmeticError) as exc:
        print(f"brw: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OutputError, OSError) as exc:
        print(f"brw: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
