"""Alternating (x, p) / tau ascent for sum and max-min throughput."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .channel import ChannelSet
from .energy import Harvester, make_harvester
from .model import DesignVariables, NetworkConfig, RunTrace
from .rate import RateCoefficients, build_coefficients, throughput
from .solver import AffineBlock, LinearObjective, QuadraticBlock, SolverOptions, ball_block, make_problem, solve
from .surrogate import Layout
from .surrogate import build_maxmin_subproblem, build_sum_subproblem

_RATE_MODE = {"perfect": "perfect", "robust": "imperfect", "nonrobust": "estimated"}


class TauInfeasible(RuntimeError):
    def __init__(self, pair, zeta1, zeta2, context=""):
        self.pair, self.zeta1, self.zeta2 = pair, zeta1, zeta2
        msg = f"no feasible tau: pair {pair} needs tau >= {zeta1:.6g} but storage allows tau <= {zeta2:.6g}"
        super().__init__(msg + (f" ({context})" if context else ""))


@dataclass(frozen=True)
class OuterOptions:
    xi: float = 1e-5
    max_outer: int = 100
    max_inner: int = 50
    inner_tol: float = 1e-6
    seed: int = 0
    tau_init: float | None = None  # None: uniform draw from ``seed``
    tau_margin: float = 1e-3
    baseline: bool = False
    csi_mode: str = "perfect"  # perfect | robust | nonrobust
    tau_search: bool = True
    keep_subproblems: bool = False
    tau_probe: bool = True
    max_probes: int = 20

    def __post_init__(self):
        if not self.xi > 0:
            raise ValueError("xi must be positive")
        if self.csi_mode not in _RATE_MODE:
            raise ValueError(f"unknown csi_mode {self.csi_mode!r}")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be positive")


@dataclass(frozen=True, eq=False)
class Instance:
    """Design model seen by the optimizer."""

    config: NetworkConfig
    coeffs: RateCoefficients
    harvester: Harvester
    h: np.ndarray


def build_instance(config: NetworkConfig, channels: ChannelSet, csi_mode="perfect", baseline=False) -> Instance:
    if channels.num_pairs != config.num_pairs:
        raise ValueError("channel size does not match num_pairs")
    return Instance(
        config=config,
        coeffs=build_coefficients(channels, config, _RATE_MODE[csi_mode]),
        harvester=make_harvester(config, channels, csi_mode, baseline),
        h=channels.h if csi_mode == "perfect" else channels.h_hat,
    )


# ------------------------------------------------------------ tau

@dataclass(frozen=True, eq=False)
class TauBounds:
    zeta1: np.ndarray
    zeta2: np.ndarray

    @property
    def lower(self) -> float:
        return max(0.0, float(np.max(self.zeta1)))

    @property
    def upper(self) -> float:
        return min(1.0, float(np.min(self.zeta2)))

    @property
    def feasible(self) -> bool:
        return self.lower <= self.upper


def _harvester(config, channels) -> Harvester:
    return channels if isinstance(channels, Harvester) else make_harvester(config, channels)


def tau_bounds(x, p, config: NetworkConfig, channels) -> TauBounds:
    f = _harvester(config, channels).rate(x)
    p = np.asarray(p, dtype=float)
    num = config.p_circuit + config.amp_eff * p - config.e_initial
    den = config.amp_eff * p + f
    with np.errstate(divide="ignore", invalid="ignore"):
        z1 = np.where(den > 0, num / den, np.where(num <= 0, 0.0, np.inf))
        z2 = np.where(f > 0, (config.e_max - config.e_initial) / f, np.inf)
    return TauBounds(zeta1=z1, zeta2=z2)


def optimal_tau(x, p, config: NetworkConfig, channels) -> float:
    """Smallest tau meeting every harvest constraint; throughput falls with tau."""
    tb = tau_bounds(x, p, config, channels)
    lo = tb.lower
    if lo > tb.upper:
        k = int(np.argmax(tb.zeta1)) if lo > 1.0 or np.max(tb.zeta1) >= np.min(tb.zeta2) else int(np.argmin(tb.zeta2))
        raise TauInfeasible(k, float(tb.zeta1[k]), float(min(tb.zeta2[k], 1.0)))
    return lo


# ------------------------------------------------------------ evaluation helpers

def objective(kind, p, tau, coeffs) -> float:
    r = throughput(p, tau, coeffs)
    return float(np.sum(r)) if kind == "sum" else float(np.min(r))


def constraint_residuals(x, p, tau, config: NetworkConfig, harvester: Harvester) -> dict:
    """Original constraints as values that must be <= 0."""
    x = np.asarray(x, dtype=complex)
    p = np.asarray(p, dtype=float)
    e = harvester.energy(x, tau)
    return {
        "tau": np.array([-tau, tau - 1.0]),
        "power_cap": np.abs(x) ** 2 - config.p_max,
        "nonneg": -p,
        "harvest": config.p_circuit + config.amp_eff * (1.0 - tau) * p - e - config.e_initial,
        "storage": np.where(np.isfinite(config.e_max), e + config.e_initial - config.e_max, -np.inf),
    }


def max_violation(x, p, tau, config, harvester) -> float:
    res = constraint_residuals(x, p, tau, config, harvester)
    return max(0.0, max(float(np.max(v)) for v in res.values()))


def _power_budget(f, tau, config):
    """Largest p_k allowed by the harvest constraint at (f, tau)."""
    return (tau * f + config.e_initial - config.p_circuit) / (config.amp_eff * max(1.0 - tau, 1e-300))


def _candidate_waveforms(inst: Instance):
    """Full-power waveforms phase-aligned to one harvester, weakest first, then single-ET ones."""
    cfg = inst.config
    amp = np.sqrt(cfg.p_max)
    order = np.argsort(np.linalg.norm(inst.h, axis=1), kind="stable")
    for k in order:
        yield amp * np.exp(-1j * np.angle(inst.h[k, :]))
    for j in range(cfg.num_pairs):
        x = np.zeros(cfg.num_pairs, complex)
        x[j] = amp[j]
        yield x


def _feasible_waveform(inst: Instance, max_iter: int = 50, margin: float = 1e-2):
    """Search for x with a nonempty tau window (linear harvest model).

    Works with the harvested energy itself, y = sqrt(tau) x: maximize s such
    that mu |h_k^H y|^2 >= (1 + s)(p_c - E0) for all k while storage and power
    caps hold; the harvest side is minorized around the current y. Returns
    None if no point with s > 0 is found.
    """
    cfg, q, mu = inst.config, inst.harvester.q, inst.harvester.mu
    k = cfg.num_pairs
    need = cfg.p_circuit - cfg.e_initial
    if np.any(need <= 0):
        return None
    cap = cfg.e_max - cfg.e_initial
    es = float(np.max(need))
    xs = np.sqrt(cfg.p_max)
    lay = Layout(k=k, xs=xs, ps=1.0, es=es)
    n = 2 * k + 1  # [Re y, Im y, s]; the p slot of the layout is unused
    hv = np.conj(inst.h)
    best = None
    for j in np.argsort(np.linalg.norm(hv, axis=1)):
        y = xs * np.exp(-1j * np.angle(inst.h[j, :]))
        f = mu * np.real(np.einsum("i,kij,j->k", np.conj(y), q, y))
        fin = np.isfinite(cap)
        if np.any(fin):
            y = y * min(1.0, np.sqrt(0.5 * np.min(cap[fin] / f[fin])))
        y = 0.999 * y
        for _ in range(max_iter):
            f = mu * np.real(np.einsum("i,kij,j->k", np.conj(y), q, y))
            s_cur = float(np.min(f / need)) - 1.0
            if s_cur >= margin:
                return y
            rows, cs = [], []
            for i in range(k):
                w = q[i] @ y
                row = np.zeros(n)
                row[: 2 * k] = -2.0 * mu[i] * lay.real_lin(w)[: 2 * k]
                row[-1] = need[i]
                rows.append(row / es)
                cs.append((need[i] + mu[i] * float(np.real(np.vdot(y, w)))) / es)
            blocks = [ball_block([(i, k + i) for i in range(k)], n), AffineBlock(np.array(rows), np.array(cs))]
            fin_rows = [i for i in range(k) if np.isfinite(cap[i])]
            if fin_rows:
                pm = []
                for i in fin_rows:
                    full = lay.real_quad(q[i])
                    sub = np.zeros((n, n))
                    sub[: 2 * k, : 2 * k] = full[: 2 * k, : 2 * k]
                    pm.append(mu[i] * sub / es)
                blocks.append(QuadraticBlock(np.array(pm), np.zeros((len(fin_rows), n)),
                                             -np.array([cap[i] for i in fin_rows]) / es))
            blocks.append(AffineBlock(np.eye(n)[-1:], [-1e3]))  # s <= 1000 keeps the problem bounded
            z0 = np.concatenate([(y / xs).real, (y / xs).imag, [s_cur - 1.0]])
            obj = LinearObjective(np.eye(n)[-1])
            res = solve(make_problem(n, z0, obj, blocks), SolverOptions(gap_tol=1e-6))
            if res.status == "Infeasible":
                break
            y_new = (res.z[:k] + 1j * res.z[k : 2 * k]) * xs
            f_new = mu * np.real(np.einsum("i,kij,j->k", np.conj(y_new), q, y_new))
            if float(np.min(f_new / need)) - 1.0 <= s_cur + 1e-12:
                break
            y = y_new
        if best is None:
            best = y
    return None


def initial_point(inst: Instance, opts: OuterOptions):
    """Feasible start (x0, p0, tau0).

    x0 is phase-aligned to the weakest harvester at full power; if its tau
    window is empty the other candidate waveforms are tried in order.
    """
    cfg = inst.config
    first = None
    for x0 in _candidate_waveforms(inst):
        tb = tau_bounds(x0, np.zeros(cfg.num_pairs), cfg, inst.harvester)
        lo, hi = tb.lower, tb.upper
        if first is None:
            first = tb
        if lo < hi and lo < 1.0:
            break
    else:
        x0 = _feasible_waveform(inst) if cfg.nonlinear is None else None
        if x0 is None:
            k = int(np.argmax(first.zeta1))
            raise TauInfeasible(k, float(first.zeta1[k]), float(min(np.min(first.zeta2), 1.0)),
                                "at the initial waveform")
        tb = tau_bounds(x0, np.zeros(cfg.num_pairs), cfg, inst.harvester)
        lo, hi = tb.lower, tb.upper
    if opts.tau_init is None:
        t = float(np.random.default_rng(opts.seed).uniform(0.0, 1.0))
    else:
        t = float(opts.tau_init)
    width = hi - lo
    t = min(max(t, lo + opts.tau_margin * width), hi - opts.tau_margin * width)
    f = inst.harvester.rate(x0)
    p0 = np.full(cfg.num_pairs, max(float(np.min(_power_budget(f, t, cfg))), 0.0))
    return x0, p0, t


def evaluate_design(config: NetworkConfig, channels: ChannelSet, design: DesignVariables, model: str = "truth"):
    """Rates of a design under an evaluation model, scaling p down uniformly when needed.

    ``truth`` uses the true channels; ``expected`` the average-sense
    imperfect-CSI model (estimate plus error statistics). Harvested energy
    above the storage cap is lost, so the usable energy is min(E + E0, Emax).
    Returns (rates, p_used, scale).
    """
    if model == "truth":
        harv = make_harvester(config, channels, "perfect")
        coeffs = build_coefficients(channels, config, "perfect")
    elif model == "expected":
        harv = make_harvester(config, channels, "robust")
        coeffs = build_coefficients(channels, config, "imperfect")
    else:
        raise ValueError(f"unknown evaluation model {model!r}")
    tau = design.tau
    avail = np.minimum(harv.energy(design.x, tau) + config.e_initial, config.e_max)
    budget = np.maximum((avail - config.p_circuit) / (config.amp_eff * max(1.0 - tau, 1e-300)), 0.0)
    p = np.asarray(design.p, dtype=float)
    scale = 1.0
    pos = p > 0
    if np.any(p[pos] > budget[pos]):
        scale = float(np.min(budget[pos] / p[pos]))
    pu = p * scale
    return throughput(pu, tau, coeffs), pu, scale


def evaluate_on_truth(config: NetworkConfig, channels: ChannelSet, design: DesignVariables):
    return evaluate_design(config, channels, design, "truth")


# ------------------------------------------------------------ blocks

def _xp_block(inst, kind, x, p, tau, opts, sopts, trace, kappa, floor=None):
    """Inner MaMi iterations at fixed tau. ``floor`` overrides the objective
    the first iterate must reach (used when (x, p) is infeasible at tau)."""
    cfg = inst.config
    build = build_sum_subproblem if kind == "sum" else build_maxmin_subproblem
    g_cur = objective(kind, p, tau, inst.coeffs) if floor is None else floor
    s_prev = None
    for i in range(1, opts.max_inner + 1):
        sp = build(inst.coeffs, inst.harvester, cfg, (x, p), tau)
        if opts.keep_subproblems:
            trace.subproblems.append(sp)
        res = solve(sp, sopts)
        if res.status == "Infeasible":
            break
        xn, pn, _ = sp.unpack(res.z)
        g_new = objective(kind, pn, tau, inst.coeffs)
        viol = max_violation(xn, pn, tau, cfg, inst.harvester)
        if not (g_new >= g_cur and viol == 0.0):
            break
        s_val = float(sp.surrogate_objective(xn, pn))
        trace.inner.append((kappa, i, g_new, s_val, tau, viol))
        x, p, g_cur = xn, pn, g_new
        if s_prev is not None and abs(s_val - s_prev) <= opts.inner_tol * max(1.0, abs(s_val)):
            break
        s_prev = s_val
    return x, p


def maxmin_power(coeffs: RateCoefficients, budget, iters: int = 100):
    """Exact max-min SINR power control under 0 <= p <= budget.

    Bisection on the common SINR target; for a target g the smallest powers
    meeting it solve (I - g D^-1 B) p = g D^-1 sigma^2. Returns (sinr, p).
    """
    budget = np.asarray(budget, dtype=float)
    a, b, s2 = coeffs.a, coeffs.b, coeffs.noise
    if np.any(budget <= 0) or np.any(a <= 0):
        return 0.0, np.zeros_like(budget)
    k = a.size
    eye = np.eye(k)

    def powers(g):
        try:
            pp = np.linalg.solve(eye - g * b / a[:, None], g * s2 / a)
        except np.linalg.LinAlgError:
            return None
        if np.all(pp >= 0) and np.all(pp <= budget):
            return pp
        return None

    lo, hi = 0.0, float(np.min(a * budget / s2))
    p_lo = np.zeros(k)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pm = powers(mid)
        if pm is None:
            hi = mid
        else:
            lo, p_lo = mid, pm
        if hi - lo <= 1e-15 * max(hi, 1e-300):
            break
    return lo, p_lo


def _tau_block(inst, kind, x, p, tau, opts):
    cfg, coeffs = inst.config, inst.coeffs
    best = (objective(kind, p, tau, coeffs), tau, p)
    f = inst.harvester.rate(x)
    if opts.tau_search:
        tb0 = tau_bounds(x, np.zeros(cfg.num_pairs), cfg, inst.harvester)
        lo, hi = tb0.lower, min(tb0.upper, 1.0 - 1e-9)
        b_cur = _power_budget(f, tau, cfg)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(b_cur > 0, np.clip(p / b_cur, 0.0, 1.0), 0.0)

        def make_path(ratio):
            def path(t):
                bud = np.maximum(_power_budget(f, t, cfg), 0.0)
                if kind == "maxmin":
                    return maxmin_power(coeffs, bud)[1]
                return ratio * bud
            return path

        # sum: keep the current budget fractions, or fill every budget
        paths = [make_path(r)] if kind == "maxmin" else [make_path(r), make_path(np.ones_like(r))]
        if hi > lo:
            grid = np.linspace(lo, hi, 41)
            for path in paths:
                def neg(t, path=path):
                    return -objective(kind, path(t), t, coeffs)

                vals = np.array([neg(t) for t in grid])
                j = int(np.argmin(vals))
                a, b = grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]
                res = minimize_scalar(neg, bounds=(a, b), method="bounded", options={"xatol": 1e-10})
                for t in (grid[j], float(res.x)):
                    v = -neg(t)
                    if v > best[0]:
                        best = (v, float(t), path(t))
    # closed form at the chosen powers: smallest tau meeting every harvest constraint
    g0, t0, p0 = best
    # (p0, t0) is feasible up to rounding, so clamp instead of raising
    t_cf = min(tau_bounds(x, p0, cfg, inst.harvester).lower, t0)
    if t_cf < t0:
        g_cf = objective(kind, p0, t_cf, coeffs)
        if g_cf >= g0:
            best = (g_cf, t_cf, p0)
    return best[1], best[2]


def _tau_probe(inst, kind, x, p, tau, g, opts, sopts, kappa):
    """Joint move the two blocks cannot make on their own.

    When a harvest or storage constraint ties tau to the waveform, neither
    block can move alone. Shift tau slightly, re-solve the (x, p) block from
    the now infeasible point (phase I restores feasibility), then re-run the
    tau block. Returns the first candidate that gains more than ``xi``, as
    (x, p, tau, g, trace), or None.
    """
    cfg = inst.config
    for rel in (1e-2, -1e-2, 1e-3, -1e-3):
        t = tau * (1.0 - rel)
        if not 0.0 < t < 1.0:
            continue
        f = inst.harvester.rate(x)
        p0 = np.minimum(p, np.maximum(_power_budget(f, t, cfg), 0.0))
        sub = RunTrace()
        xn, pn = _xp_block(inst, kind, x, p0, t, opts, sopts, sub, kappa, floor=-np.inf)
        if not sub.inner:
            continue
        try:
            tn, pn = _tau_block(inst, kind, xn, pn, t, opts)
        except TauInfeasible:
            continue
        gn = objective(kind, pn, tn, inst.coeffs)
        if max_violation(xn, pn, tn, cfg, inst.harvester) > 0.0:
            continue
        if gn - g > opts.xi:
            return xn, pn, tn, gn, sub
    return None


def _run(kind, config, channels, outer_opts, solver_opts):
    opts = outer_opts or OuterOptions()
    sopts = solver_opts or SolverOptions()
    inst = build_instance(config, channels, opts.csi_mode, opts.baseline)
    x, p, tau = initial_point(inst, opts)
    trace = RunTrace()
    g = objective(kind, p, tau, inst.coeffs)
    trace.outer.append((g, tau, max_violation(x, p, tau, config, inst.harvester)))
    trace.reason = "max_outer"
    probes = 0
    for _ in range(opts.max_outer):
        # inner rows carry the index of the outer row they lead to
        x, p = _xp_block(inst, kind, x, p, tau, opts, sopts, trace, len(trace.outer))
        tau, p = _tau_block(inst, kind, x, p, tau, opts)
        g_new = objective(kind, p, tau, inst.coeffs)
        trace.outer.append((g_new, tau, max_violation(x, p, tau, config, inst.harvester)))
        if abs(g_new - g) <= opts.xi:
            moved = None
            if opts.tau_probe and probes < opts.max_probes:
                probes += 1
                moved = _tau_probe(inst, kind, x, p, tau, g_new, opts, sopts, len(trace.outer))
            if moved is None:
                trace.reason = "converged"
                break
            x, p, tau, g_new, sub = moved
            trace.inner.extend(sub.inner)
            trace.subproblems.extend(sub.subproblems)
            trace.outer.append((g_new, tau, max_violation(x, p, tau, config, inst.harvester)))
        g = g_new
    viol = max_violation(x, p, tau, config, inst.harvester)
    return DesignVariables(x=x, p=p, tau=float(tau), feasible=viol <= 1e-7), trace


def run_sum_throughput(config, channels, outer_opts=None, solver_opts=None):
    return _run("sum", config, channels, outer_opts, solver_opts)


def run_maxmin(config, channels, outer_opts=None, solver_opts=None):
    return _run("maxmin", config, channels, outer_opts, solver_opts)


def run_baseline_power_only(config, channels, outer_opts=None, solver_opts=None, problem="sum"):
    """Same loops with a phase-incoherent harvest model (only ET powers matter)."""
    from dataclasses import replace

    opts = replace(outer_opts or OuterOptions(), baseline=True)
    return _run(problem, config, channels, opts, solver_opts)


def run(problem, config, channels, outer_opts=None, solver_opts=None):
    if problem not in ("sum", "maxmin"):
        raise ValueError(f"unknown problem {problem!r}")
    return _run(problem, config, channels, outer_opts, solver_opts)
