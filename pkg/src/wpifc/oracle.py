"""Brute-force reference optimizer for K <= 2 (test fixture, not a solver).

Everything is evaluated from first principles on the true channels: the
harvest |sum_j h_{k,j} x_j|^2, the SINR and the original constraints. Two
facts keep the search small without losing optimality:

* the objective depends on x only through the harvest rates (f_1, f_2) and
  is nondecreasing in each, so only the Pareto frontier of storage-feasible
  rate pairs is kept per tau;
* scaling p up raises every SINR, so some pair sits at its power budget and
  p can be restricted to the upper edges of the budget box.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .model import DesignVariables, NetworkConfig


class OracleError(ValueError):
    pass


class EmptyFeasibleSet(OracleError):
    pass


@dataclass(frozen=True)
class OracleResolution:
    tau: int = 200
    amplitude: int = 50
    phase: int = 72
    power: int = 50
    refine: bool = True


def _rates(x, config, channels):
    """Harvest per unit tau for arrays of waveforms x[..., K]."""
    amp = np.einsum("kj,...j->...k", channels.h, x)
    pl = np.abs(amp) ** 2
    nl = config.nonlinear
    if nl is None:
        return config.mu * pl
    omega = 1.0 / (1.0 + np.exp(nl.a_tilde * nl.b_tilde))
    sig = 1.0 / (1.0 + np.exp(-nl.a_tilde * (pl - nl.b_tilde)))
    return nl.n_sat * (sig - omega) / (1.0 - omega)


def _throughput(p, tau, config, channels):
    gain = np.abs(channels.g) ** 2  # gain[j, k]: IT j -> IR k
    k = config.num_pairs
    sig = p * np.diag(gain)
    interf = np.zeros_like(p)
    for i in range(k):
        for j in range(k):
            if j != i:
                interf[..., i] += gain[j, i] * p[..., j]
    tau = np.asarray(tau)[..., None]
    return (1.0 - tau) * np.log2(1.0 + sig / (interf + config.noise_var))


def _reduce(r, problem):
    return r.sum(axis=-1) if problem == "sum" else r.min(axis=-1)


def _budgets(f, tau, config):
    tau = np.asarray(tau)[..., None]
    with np.errstate(divide="ignore"):
        return (tau * f + config.e_initial - config.p_circuit) / (config.amp_eff * (1.0 - tau))


def _waveform(params, config):
    """params = (a_1, ..., a_K, theta_2..theta_K) -> x with x_1 real."""
    k = config.num_pairs
    a = np.asarray(params[..., :k])
    ph = np.zeros(a.shape)
    if k > 1:
        ph[..., 1:] = params[..., k:]
    return a * np.exp(1j * ph)


def _edge_best(budget, tau, config, channels, problem, n):
    """Best p on the upper edges of the box [0, budget]; vectorized over leading axes."""
    k = config.num_pairs
    if k == 1:
        p = budget
        return _reduce(_throughput(p, tau, config, channels), problem), p
    s = np.linspace(0.0, 1.0, n)
    best_v, best_p = None, None
    for edge in range(2):
        p = np.repeat(budget[..., None, :], n, axis=-2)
        other = 1 - edge
        p[..., other] = budget[..., None, other] * s
        tt = np.broadcast_to(np.asarray(tau)[..., None], p.shape[:-1])
        v = _reduce(_throughput(p, tt, config, channels), problem)
        j = np.argmax(v, axis=-1)
        vj = np.take_along_axis(v, j[..., None], -1)[..., 0]
        pj = np.take_along_axis(p, j[..., None, None], -2)[..., 0, :]
        if best_v is None:
            best_v, best_p = vj, pj
        else:
            better = vj > best_v
            best_v = np.where(better, vj, best_v)
            best_p = np.where(better[..., None], pj, best_p)
    return best_v, best_p


def _pareto(f, order=None):
    """Indices of the nondominated rows of f (K <= 2, maximize both).

    ``order`` may pass a precomputed lexicographic sort of f.
    """
    if f.shape[1] == 1:
        return np.array([int(np.argmax(f[:, 0]))])
    if order is None:
        order = np.lexsort((-f[:, 1], -f[:, 0]))
    f2 = f[order, 1]
    prev = np.concatenate([[-np.inf], np.maximum.accumulate(f2)[:-1]])
    return order[f2 > prev]


def _evaluate(params, tau, config, channels, problem, n_pow=401):
    """Objective of (tau, waveform params) with the best edge power; -inf if infeasible."""
    if not (0.0 <= tau < 1.0):
        return -np.inf, None
    k = config.num_pairs
    a = params[:k]
    if np.any(a < 0) or np.any(a**2 > config.p_max * (1 + 1e-12)):
        return -np.inf, None
    x = _waveform(params, config)
    f = _rates(x, config, channels)
    if np.any(tau * f + config.e_initial > config.e_max):
        return -np.inf, None
    b = _budgets(f, tau, config)
    if np.any(b < 0):
        return -np.inf, None
    v, p = _edge_best(b, tau, config, channels, problem, n_pow)
    if k > 1:
        # zoom on the winning edge
        edge = 0 if p[0] >= b[0] * (1 - 1e-12) else 1
        other = 1 - edge
        step = 1.0 / (n_pow - 1)
        s0 = p[other] / b[other] if b[other] > 0 else 0.0
        for _ in range(10):
            ss = np.clip(s0 + np.linspace(-step, step, 21), 0.0, 1.0)
            pp = np.repeat(b[None, :], ss.size, axis=0)
            pp[:, other] = b[other] * ss
            vv = _reduce(_throughput(pp, np.full(ss.size, tau), config, channels), problem)
            j = int(np.argmax(vv))
            if vv[j] > v:
                v, p = float(vv[j]), pp[j].copy()
            s0, step = ss[j], step / 10.0
    return float(v), p


def _tau_window(f, config):
    """[lo, hi] of tau where every budget is >= 0 and no storage overflows."""
    e0, pc, cap = config.e_initial, config.p_circuit, config.e_max
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.where(pc > e0, np.where(f > 0, (pc - e0) / f, np.inf), 0.0)
        room = np.where(f > 0, (cap - e0) / f, np.inf)
    return max(0.0, float(np.max(need))), min(1.0 - 1e-12, float(np.min(room)))


def _profile(params, config, channels, problem, tau_hint=None, n_tau=65):
    """Best objective over tau for a fixed waveform: (value, tau, p).

    Feasible tau form one interval (harvests and budgets are affine in tau),
    so it is scanned and the best cell refined by successive zooming. Profiling
    tau out avoids the thin ridges that active storage and circuit-energy
    limits carve into the joint (tau, waveform) space.
    """
    k = config.num_pairs
    a = params[:k]
    if np.any(a < 0) or np.any(a**2 > config.p_max * (1 + 1e-12)):
        return -np.inf, None, None
    f = _rates(_waveform(params, config), config, channels)
    lo, hi = _tau_window(f, config)
    if lo > hi:
        return -np.inf, None, None
    taus = np.linspace(lo, hi, n_tau)
    if tau_hint is not None and lo <= tau_hint <= hi:
        taus = np.sort(np.append(taus, tau_hint))
    b = np.maximum(_budgets(f[None, :], taus, config), 0.0)
    v, _ = _edge_best(b, taus, config, channels, problem, 201)
    j = int(np.argmax(v))
    t0, step = taus[j], (hi - lo) / (n_tau - 1)
    for _ in range(8):
        tt = np.clip(t0 + np.linspace(-step, step, 21), lo, hi)
        bb = np.maximum(_budgets(f[None, :], tt, config), 0.0)
        vv, _ = _edge_best(bb, tt, config, channels, problem, 201)
        t0, step = tt[int(np.argmax(vv))], step / 10.0
    best_v, best_t, best_p = -np.inf, None, None
    for t in (taus[j], t0, lo):
        vt, pt = _evaluate(params, t, config, channels, problem)
        if vt > best_v:
            best_v, best_t, best_p = vt, float(t), pt
    return best_v, best_t, best_p


def _directions(n):
    """Pattern-search moves: every axis, then every pairwise diagonal."""
    out = []
    eye = np.eye(n)
    for i in range(n):
        out += [eye[i], -eye[i]]
    for i in range(n):
        for j in range(i + 1, n):
            for si in (1.0, -1.0):
                for sj in (1.0, -1.0):
                    out.append(si * eye[i] + sj * eye[j])
    return out


def grid_oracle(config: NetworkConfig, channels: ChannelSet, problem="sum", resolution: OracleResolution | None = None):
    """Exhaustive search over (tau, |x|, phase, p) with local refinement.

    Returns (best objective, DesignVariables).
    """
    res = resolution or OracleResolution()
    k = config.num_pairs
    if k > 2:
        raise OracleError(f"grid oracle supports K <= 2, got K={k}")
    if problem not in ("sum", "maxmin"):
        raise OracleError(f"unknown problem {problem!r}")

    amps = [np.linspace(0.0, np.sqrt(config.p_max[j]), res.amplitude) for j in range(k)]
    if k == 1:
        params = amps[0][:, None]
    else:
        th = np.arange(res.phase) * (2 * np.pi / res.phase)
        a1, a2, t2 = np.meshgrid(amps[0], amps[1], th, indexing="ij")
        params = np.stack([a1.ravel(), a2.ravel(), t2.ravel()], axis=-1)
    f_all = _rates(_waveform(params, config), config, channels)
    taus = (np.arange(res.tau) + 0.5) / res.tau

    order = np.lexsort(tuple(-f_all[:, j] for j in reversed(range(k))))
    best = (-np.inf, None, None, None)
    for tau in taus:
        ok = np.all(tau * f_all + config.e_initial <= config.e_max, axis=1)
        if not np.any(ok):
            continue
        idx = order[ok[order]]
        front = idx[_pareto(f_all[idx], np.arange(idx.size))]
        b = _budgets(f_all[front], tau, config)
        feas = np.all(b >= 0, axis=1)
        if not np.any(feas):
            continue
        front, b = front[feas], b[feas]
        v, p = _edge_best(b, np.full(len(front), tau), config, channels, problem, res.power)
        j = int(np.argmax(v))
        if v[j] > best[0]:
            best = (float(v[j]), float(tau), params[front[j]].copy(), p[j])
    if best[1] is None:
        raise EmptyFeasibleSet("no grid point satisfies the constraints")

    _, tau, prm, p = best
    val, tau, p = _profile(prm, config, channels, problem, tau)
    if res.refine:
        steps = np.array([np.sqrt(config.p_max[j]) / (res.amplitude - 1) for j in range(k)])
        if k > 1:
            steps = np.concatenate([steps, [2 * np.pi / res.phase]])
        steps = steps / 10.0
        dirs = _directions(prm.size)
        while np.max(steps / np.maximum(np.abs(prm), 1.0)) > 1e-9:
            improved = False
            for dv in dirs:
                y = prm + dv * steps
                v2, t2, p2 = _profile(y, config, channels, problem)
                if v2 > val:
                    prm, val, tau, p, improved = y, v2, t2, p2, True
                    break
            if not improved:
                steps = steps / 2.0
    xw = _waveform(prm, config)
    return val, DesignVariables(x=xw, p=np.asarray(p, dtype=float), tau=float(tau), feasible=True)
