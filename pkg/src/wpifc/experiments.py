"""Monte-Carlo experiment runner: sweeps, ensembles and the robustness loss."""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import draw_channels
from .model import TRACE_COLUMNS, CsiModel, NetworkConfig, NonlinearEhParams, dbm_to_watt
from .optimizer import OuterOptions, evaluate_design, run
from .rate import build_coefficients, throughput
from .solver import SolverOptions

KINDS = ("single", "pmax-sweep", "pairs-sweep", "rho-sweep", "asym-sweep", "eh-compare")

DEFAULT_POINTS = {
    "single": [None],
    "pmax-sweep": [20.0, 25.0, 30.0, 35.0, 40.0, 45.0],
    "pairs-sweep": [2, 3, 4, 5, 6],
    "rho-sweep": [0.5, 0.7, 0.9, 1.0],
    "asym-sweep": [0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
    "eh-compare": ["linear", "nonlinear"],
}

POINT_NAMES = {
    "single": "none",
    "pmax-sweep": "p_max_dbm",
    "pairs-sweep": "num_pairs",
    "rho-sweep": "rho",
    "asym-sweep": "delta_x_m",
    "eh-compare": "eh_model",
}

RUN_COLUMNS = (
    "kind", "point_name", "point_value", "seed", "problem", "variant", "status",
    "evaluation", "objective", "sum_rate", "min_rate", "tau", "rates", "p_scale", "loss",
    "outer_iters", "inner_iters", "feasible", "note",
)

SUMMARY_COLUMNS = (
    "point_name", "point_value", "problem", "variant", "runs", "failures",
    "mean_objective", "mean_sum_rate", "mean_min_rate", "mean_tau", "mean_loss",
)


@dataclass(frozen=True)
class Experiment:
    kind: str
    config: NetworkConfig
    seeds: tuple = (0,)
    out: str | None = None
    problem: str = "sum"
    eh: str | None = None  # None keeps the config's model
    csi: str = "perfect"  # perfect | imperfect
    baseline: bool = False
    evaluation: str = "truth"  # truth | expected, for imperfect-CSI designs
    points: tuple | None = None
    outer: OuterOptions = field(default_factory=OuterOptions)
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if len(self.seeds) < 1:
            raise ValueError("ensemble size must be at least 1")
        if self.problem not in ("sum", "maxmin"):
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.csi not in ("perfect", "imperfect"):
            raise ValueError(f"unknown csi option {self.csi!r}")
        if self.evaluation not in ("truth", "expected"):
            raise ValueError(f"unknown evaluation {self.evaluation!r}")
        if self.eh not in (None, "linear", "nonlinear"):
            raise ValueError(f"unknown eh option {self.eh!r}")
        pts = self.sweep_points()
        if not pts:
            raise ValueError("sweep range is empty")
        if self.kind != "eh-compare" and pts[0] is not None:
            if any(b <= a for a, b in zip(pts, pts[1:])):
                raise ValueError("sweep points must be strictly increasing")

    def sweep_points(self) -> list:
        return list(self.points) if self.points is not None else list(DEFAULT_POINTS[self.kind])


def _with_eh(cfg: NetworkConfig, eh: str | None) -> NetworkConfig:
    if eh is None:
        return cfg
    if eh == "linear":
        return cfg.with_(nonlinear=None)
    if cfg.nonlinear is not None:
        return cfg
    return cfg.with_(nonlinear=NonlinearEhParams.rectifier_fit(cfg.num_pairs), mu=np.ones(cfg.num_pairs))


def _resize(cfg: NetworkConfig, k: int) -> NetworkConfig:
    """Same per-pair parameters for a different number of pairs."""

    def vec(a):
        a = np.asarray(a)
        return np.full(k, a[0])

    nl = cfg.nonlinear
    if nl is not None:
        nl = NonlinearEhParams(vec(nl.n_sat), vec(nl.a_tilde), vec(nl.b_tilde))
    geo = cfg.geometry
    if geo.layout == "explicit":
        raise ValueError("pairs sweep needs a generated (symmetric) layout")
    return replace(
        cfg, num_pairs=k, p_max=vec(cfg.p_max), p_circuit=vec(cfg.p_circuit), amp_eff=vec(cfg.amp_eff),
        mu=vec(cfg.mu), noise_var=vec(cfg.noise_var), e_initial=vec(cfg.e_initial), e_max=vec(cfg.e_max),
        nonlinear=nl,
    )


def point_config(exp: Experiment, value) -> NetworkConfig:
    cfg = _with_eh(exp.config, exp.eh)
    if exp.kind == "pmax-sweep":
        cfg = cfg.with_(p_max=np.full(cfg.num_pairs, dbm_to_watt(value)))
    elif exp.kind == "pairs-sweep":
        cfg = _resize(cfg, int(value))
        if cfg.geometry.layout == "symmetric":
            cfg = cfg.with_(geometry=replace(cfg.geometry, line_length=100.0))
    elif exp.kind == "rho-sweep":
        cfg = cfg.with_(csi=replace(cfg.csi, rho_h=float(value), rho_g=float(value)))
    elif exp.kind == "asym-sweep":
        geo = replace(cfg.geometry, layout="asymmetric", delta_x=float(value))
        cfg = _resize(cfg, 2).with_(geometry=geo) if cfg.num_pairs != 2 else cfg.with_(geometry=geo)
    elif exp.kind == "eh-compare":
        cfg = _with_eh(exp.config, str(value))
    return cfg


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _row(exp, name, value, seed, problem, variant, **kw):
    row = dict.fromkeys(RUN_COLUMNS, None)
    row.update(kind=exp.kind, point_name=name, point_value=value, seed=seed, problem=problem, variant=variant)
    row.update(kw)
    return row


def _design_row(exp, name, value, seed, problem, variant, cfg, ch, opts, truth=False):
    """Run one design; report throughput recomputed from the final variables."""
    try:
        design, trace = run(problem, cfg, ch, opts, exp.solver)
    except Exception as err:  # recorded per row, the sweep continues
        return _row(exp, name, value, seed, problem, variant, status="failed",
                    note=f"{type(err).__name__}: {err}"), None, None
    scale = 1.0
    if truth:
        rates, _, scale = evaluate_design(cfg, ch, design, exp.evaluation)
    else:
        coeffs = build_coefficients(ch, cfg, "perfect")
        rates = throughput(design.p, design.tau, coeffs)
    obj = float(np.sum(rates)) if problem == "sum" else float(np.min(rates))
    row = _row(
        exp, name, value, seed, problem, variant, status="ok", objective=obj,
        evaluation=exp.evaluation if truth else "design",
        sum_rate=float(np.sum(rates)), min_rate=float(np.min(rates)), tau=design.tau,
        rates=";".join(repr(float(r)) for r in rates), p_scale=scale,
        outer_iters=len(trace.outer) - 1, inner_iters=len(trace.inner), feasible=design.feasible,
        note=trace.reason + ("; p rescaled under the evaluation model" if scale < 1.0 else ""),
    )
    return row, trace, obj


def run_point(exp: Experiment, value, seed: int):
    """All rows and traces of one (sweep point, seed)."""
    name = POINT_NAMES[exp.kind]
    cfg = point_config(exp, value)
    opts = replace(exp.outer, seed=int(seed))
    rows, traces = [], []
    try:
        ch = draw_channels(cfg, int(seed))
    except Exception as err:
        return [_row(exp, name, value, seed, exp.problem, "design", status="failed",
                     note=f"{type(err).__name__}: {err}")], []

    def add(variant, row, trace):
        rows.append(row)
        if trace is not None:
            traces.append((name, value, exp.problem, variant, trace))

    robust = exp.kind == "rho-sweep" or exp.csi == "imperfect"
    if robust:
        r_row, r_tr, r_obj = _design_row(exp, name, value, seed, exp.problem, "robust", cfg, ch,
                                         replace(opts, csi_mode="robust"), truth=True)
        n_row, n_tr, n_obj = _design_row(exp, name, value, seed, exp.problem, "nonrobust", cfg, ch,
                                         replace(opts, csi_mode="nonrobust"), truth=True)
        if r_obj is not None and n_obj is not None and r_obj > 0:
            n_row["loss"] = 1.0 - n_obj / r_obj
        add("robust", r_row, r_tr)
        add("nonrobust", n_row, n_tr)
    else:
        row, tr, _ = _design_row(exp, name, value, seed, exp.problem, "design", cfg, ch, opts)
        add("design", row, tr)
    if exp.baseline or exp.kind == "pairs-sweep":
        mode = "robust" if robust else "perfect"
        row, tr, _ = _design_row(exp, name, value, seed, exp.problem, "baseline", cfg, ch,
                                 replace(opts, baseline=True, csi_mode=mode), truth=robust)
        add("baseline", row, tr)
    return rows, traces


def _task(args):
    exp, value, seed = args
    return run_point(exp, value, seed)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("WPIFC_WORKERS", "1")))
    except ValueError:
        return 1


def _summarize(rows):
    groups: dict = {}
    for r in rows:
        key = (r["point_name"], r["point_value"], r["problem"], r["variant"])
        groups.setdefault(key, []).append(r)
    out = []
    for key, rs in groups.items():
        ok = [r for r in rs if r["status"] == "ok"]

        def mean(col):
            vals = [r[col] for r in ok if r[col] is not None]
            return float(np.mean(vals)) if vals else None

        out.append(dict(zip(SUMMARY_COLUMNS, (*key, len(ok), len(rs) - len(ok), mean("objective"),
                                              mean("sum_rate"), mean("min_rate"), mean("tau"), mean("loss")))))
    return out


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def run_experiment(exp: Experiment):
    """Run every (point, seed) and write runs.csv, summary.csv and trace_<seed>.csv.

    Returns (rows, summary). Output is byte-identical for identical inputs
    regardless of the worker count.
    """
    tasks = [(exp, v, s) for v in exp.sweep_points() for s in exp.seeds]
    workers = _workers()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]
    rows = [r for res in results for r in res[0]]
    summary = _summarize(rows)
    if exp.out is not None:
        out = Path(exp.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "runs.csv").write_text(_csv_text(RUN_COLUMNS, rows))
        (out / "summary.csv").write_text(_csv_text(SUMMARY_COLUMNS, summary))
        per_seed: dict = {}
        for (_, _, seed), (_, traces) in zip(tasks, results):
            for name, value, problem, variant, trace in traces:
                for tr_row in trace.rows():
                    per_seed.setdefault(seed, []).append(
                        dict(point_name=name, point_value=value, problem=problem, variant=variant,
                             **dict(zip(TRACE_COLUMNS, tr_row)))
                    )
        cols = ("point_name", "point_value", "problem", "variant") + tuple(TRACE_COLUMNS)
        for seed in exp.seeds:
            (out / f"trace_{seed}.csv").write_text(_csv_text(cols, per_seed.get(seed, [])))
    return rows, summary


def mean_by_point(summary, variant, column="mean_objective"):
    """[(point_value, mean)] for one variant, in sweep order."""
    return [(s["point_value"], s[column]) for s in summary if s["variant"] == variant]


def loss_by_point(rows):
    """Per-realization robustness losses grouped by sweep point."""
    out: dict = {}
    for r in rows:
        if r["variant"] == "nonrobust" and r["loss"] is not None:
            out.setdefault(r["point_value"], []).append(r["loss"])
    return out


def finite_or_nan(v) -> float:
    return float(v) if v is not None and math.isfinite(v) else float("nan")
