"""Minorizers and the convex subproblem of one inner iteration.

The subproblem is posed in normalized real variables

    z = [Re(x / xs), Im(x / xs), p / ps, (alpha)]

with xs = sqrt(p_max) and energy rows divided by a common scale ``es``, which
keeps the barrier solver well conditioned across channel strengths.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet
from .energy import Harvester, beta_lower_bound, dc_gradient, make_harvester, sigmoid_derivatives
from .model import NetworkConfig
from .rate import RateCoefficients, throughput
from .solver import AffineBlock, LinearObjective, LogAffineBlock, LogSumObjective, QuadraticBlock, ball_block

LN2 = math.log(2.0)

BETA_MARGIN = 1.05


def log_minorizer(b_k, p_prev, sigma2):
    """Tangent bound of -log2(b^T p + sigma2) at p_prev.

    Returns (b_hat, const) with const + b_hat^T p <= -log2(b^T p + sigma2).
    """
    b_k = np.asarray(b_k, dtype=float)
    s = float(b_k @ np.asarray(p_prev, dtype=float)) + float(sigma2)
    b_hat = -b_k / (s * LN2)
    const = -math.log2(s) + (s - float(sigma2)) / (s * LN2)
    return b_hat, const


def quadratic_minorizer(h_k, x_prev):
    """Tangent bound of x^H Q x at x_prev, Q = h h^H (or a PSD matrix).

    Returns (w, c) with L(x) = 2 Re{w^H x} + c <= x^H Q x.
    """
    h_k = np.asarray(h_k, dtype=complex)
    q = np.outer(h_k, np.conj(h_k)) if h_k.ndim == 1 else h_k
    x_prev = np.asarray(x_prev, dtype=complex)
    w = q @ x_prev
    return w, -float(np.real(np.vdot(x_prev, w)))


def eval_quadratic_minorizer(w, c, x):
    return 2.0 * np.real(np.conj(w) @ np.asarray(x, dtype=complex).T) + c


# ------------------------------------------------------------ layout

@dataclass(frozen=True, eq=False)
class Layout:
    """Variable packing and unit scales."""

    k: int
    xs: np.ndarray
    ps: float
    es: float
    epigraph: bool = False

    @property
    def n(self) -> int:
        return 3 * self.k + (1 if self.epigraph else 0)

    @property
    def p_slice(self) -> slice:
        return slice(2 * self.k, 3 * self.k)

    def pack(self, x, p, alpha=None) -> np.ndarray:
        x = np.asarray(x, dtype=complex) / self.xs
        p = np.asarray(p, dtype=float) / self.ps
        parts = [x.real, x.imag, p]
        if self.epigraph:
            a = np.zeros(p.shape[:-1]) if alpha is None else np.asarray(alpha, dtype=float)
            parts.append(a[..., None])
        return np.concatenate(parts, axis=-1)

    def unpack(self, z):
        z = np.asarray(z, dtype=float)
        k = self.k
        x = (z[..., :k] + 1j * z[..., k : 2 * k]) * self.xs
        p = z[..., 2 * k : 3 * k] * self.ps
        alpha = z[..., 3 * k] if self.epigraph else None
        return x, p, alpha

    def real_quad(self, q) -> np.ndarray:
        """n x n symmetric P with z^T P z = x^H q x."""
        qt = q * np.outer(self.xs, self.xs)
        k = self.k
        out = np.zeros((self.n, self.n))
        out[:k, :k] = qt.real
        out[:k, k : 2 * k] = -qt.imag
        out[k : 2 * k, :k] = qt.imag
        out[k : 2 * k, k : 2 * k] = qt.real
        return 0.5 * (out + out.T)

    def real_lin(self, w) -> np.ndarray:
        """Row a with a @ z = Re{w^H x}."""
        w = np.asarray(w, dtype=complex) * self.xs
        out = np.zeros(self.n)
        out[: self.k] = w.real
        out[self.k : 2 * self.k] = w.imag
        return out

    def sq_norm(self) -> np.ndarray:
        """n x n P with z^T P z = ||x||^2."""
        out = np.zeros((self.n, self.n))
        idx = np.arange(self.k)
        out[idx, idx] = self.xs**2
        out[self.k + idx, self.k + idx] = self.xs**2
        return out


def make_layout(config: NetworkConfig, harvester: Harvester, x_prev, p_prev, tau, epigraph=False) -> Layout:
    f = harvester.energy(x_prev, tau)
    es = float(max(np.max(np.abs(f)), np.max(config.p_circuit), np.max(config.e_initial), 1e-30))
    ps = es / (float(np.max(config.amp_eff)) * max(1.0 - tau, 1e-12))
    xs = np.sqrt(np.where(config.p_max > 0, config.p_max, 1.0))
    return Layout(k=config.num_pairs, xs=xs, ps=ps, es=es, epigraph=epigraph)


# ------------------------------------------------------------ sigmoid block

class SigmoidQuadBlock:
    """f_k(z) = s * phi_k(z^T P_k z) + z^T R_k z + A_k z + c_k, with phi the sigmoid harvest."""

    def __init__(self, pmat, s, params, rmat, a, c):
        self.pmat = np.asarray(pmat, dtype=float)
        self.s = float(s)
        self.params = params
        self.rmat = np.asarray(rmat, dtype=float)
        self.a = np.atleast_2d(np.asarray(a, dtype=float))
        self.c = np.asarray(c, dtype=float)
        self.m = self.c.size

    def _phi(self, pl):
        nl = self.params
        return sigmoid_derivatives(pl, nl.n_sat, nl.a_tilde, nl.b_tilde)

    def value(self, z):
        z = np.asarray(z)
        pl = np.einsum("...i,kij,...j->...k", z, self.pmat, z)
        phi, _, _ = self._phi(pl)
        quad = np.einsum("...i,kij,...j->...k", z, self.rmat, z)
        return self.s * phi + quad + z @ self.a.T + self.c

    def jac(self, z):
        pz = self.pmat @ z
        pl = pz @ z
        _, d1, _ = self._phi(pl)
        return self.s * 2.0 * d1[:, None] * pz + 2.0 * (self.rmat @ z) + self.a

    def hess_sum(self, z, w):
        pz = self.pmat @ z
        pl = pz @ z
        _, d1, d2 = self._phi(pl)
        h = 2.0 * np.einsum("k,kij->ij", w * self.s * d1, self.pmat)
        h += 4.0 * (pz.T * (w * self.s * d2)) @ pz
        h += 2.0 * np.einsum("k,kij->ij", w, self.rmat)
        return h


# ------------------------------------------------------------ subproblem

@dataclass(eq=False)
class ConvexSubproblem:
    kind: str  # "sum" | "maxmin"
    layout: Layout
    objective: object
    blocks: dict
    units: dict
    start: np.ndarray
    tau: float
    expansion: tuple
    config: NetworkConfig = field(repr=False)
    coeffs: RateCoefficients = field(repr=False)
    harvester: Harvester = field(repr=False)
    beta: np.ndarray | None = None
    b_hat: np.ndarray | None = None
    log_const: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.layout.n

    @property
    def constraints(self) -> list:
        return list(self.blocks.values())

    def pack(self, x, p, alpha=None):
        return self.layout.pack(x, p, alpha)

    def unpack(self, z):
        return self.layout.unpack(z)

    # physical-unit evaluations --------------------------------------
    def surrogate_constraints(self, x, p, alpha=None) -> dict:
        z = self.pack(x, p, alpha)
        return {tag: self.units[tag] * blk.value(z) for tag, blk in self.blocks.items()}

    def surrogate_rates(self, x, p) -> np.ndarray:
        """Per-pair rate minorants (1 - tau)[log2(q^T p + s2) + b_hat^T p + const]."""
        p = np.asarray(p, dtype=float)
        c = self.coeffs
        arg = p @ c.q.T + c.noise
        return (1.0 - self.tau) * (np.log2(arg) + p @ self.b_hat.T + self.log_const)

    def surrogate_objective(self, x, p):
        r = self.surrogate_rates(x, p)
        return np.sum(r, axis=-1) if self.kind == "sum" else np.min(r, axis=-1)

    def true_rates(self, x, p) -> np.ndarray:
        return throughput(np.asarray(p, dtype=float), self.tau, self.coeffs)

    def true_objective(self, x, p):
        r = self.true_rates(x, p)
        return np.sum(r, axis=-1) if self.kind == "sum" else np.min(r, axis=-1)

    def true_constraints(self, x, p) -> dict:
        cfg, tau = self.config, self.tau
        e = self.harvester.energy(x, tau)
        p = np.asarray(p, dtype=float)
        out = {
            "power_cap": np.abs(np.asarray(x)) ** 2 - cfg.p_max,
            "harvest": cfg.p_circuit + cfg.amp_eff * (1.0 - tau) * p - e - cfg.e_initial,
            "nonneg": -p,
        }
        if "storage" in self.blocks:
            fin = np.isfinite(cfg.e_max)
            out["storage"] = (e + cfg.e_initial - cfg.e_max)[..., fin]
        return out

    def dump(self, path=None) -> str:
        """Self-contained JSON description (debug aid)."""

        def enc(v):
            if isinstance(v, np.ndarray):
                if np.iscomplexobj(v):
                    return {"re": v.real.tolist(), "im": v.imag.tolist()}
                return v.tolist()
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            return v

        blocks = {}
        for tag, b in self.blocks.items():
            d = {"type": type(b).__name__, "unit": enc(np.asarray(self.units[tag]))}
            for attr in ("p", "a", "c", "w", "cm", "d", "pmat", "rmat", "s"):
                if hasattr(b, attr):
                    d[attr] = enc(np.asarray(getattr(b, attr)))
            blocks[tag] = d
        o = self.objective
        obj = {"type": type(o).__name__}
        for attr in ("c", "w", "cm", "d", "lin", "const"):
            if hasattr(o, attr):
                obj[attr] = enc(np.asarray(getattr(o, attr)))
        doc = {
            "kind": self.kind,
            "tau": self.tau,
            "scales": {"xs": enc(self.layout.xs), "ps": self.layout.ps, "es": self.layout.es},
            "expansion": {"x": enc(np.asarray(self.expansion[0])), "p": enc(np.asarray(self.expansion[1]))},
            "start": enc(self.start),
            "objective": obj,
            "constraints": blocks,
        }
        text = json.dumps(doc, indent=1, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _as_harvester(config, channels_or_harvester) -> Harvester:
    if isinstance(channels_or_harvester, Harvester):
        return channels_or_harvester
    if isinstance(channels_or_harvester, ChannelSet):
        return make_harvester(config, channels_or_harvester)
    raise TypeError("expected a ChannelSet or Harvester")


def _nonlinear_betas(config, harvester, tau) -> np.ndarray:
    total = float(np.sum(config.p_max))
    return np.array([
        BETA_MARGIN * beta_lower_bound(config.nonlinear, harvester.q[k], tau, total, k=k)
        for k in range(config.num_pairs)
    ])


def build_nonlinear_constraints(params, channels, config: NetworkConfig, x_prev, tau, beta, layout: Layout | None = None,
                                p_prev=None):
    """(harvest, storage) blocks for the sigmoid model, DC-split with weight beta.

    Values are in units of ``layout.es``. The storage block is ``None`` when
    no pair has a finite storage cap.
    """
    harvester = _as_harvester(config.with_(nonlinear=params), channels)
    k = config.num_pairs
    x_prev = np.asarray(x_prev, dtype=complex)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (k,))
    total = float(np.sum(config.p_max))
    for i in range(k):
        b0 = beta_lower_bound(params, harvester.q[i], tau, total, k=i)
        if beta[i] < b0:
            raise ValueError(f"beta[{i}]={beta[i]:.3e} below the convexity bound {b0:.3e}")
    if layout is None:
        layout = make_layout(config, harvester, x_prev, np.zeros(k) if p_prev is None else p_prev, tau)
    n, es = layout.n, layout.es
    nsq = layout.sq_norm()
    f_prev = harvester.energy(x_prev, tau)
    sq_prev = float(np.sum(np.abs(x_prev) ** 2))
    zx = layout.pack(x_prev, np.zeros(k), 0.0)

    # harvest: p_c - E0 + eps(1-tau) p_k - [F(x0) + Re{u (x - x0)} - beta/2 ||x||^2] <= 0
    hp, ha, hc = [], [], []
    for i in range(k):
        u = dc_gradient(x_prev, harvester.q[i], params, tau, beta[i], k=i)
        lin = layout.real_lin(np.conj(u))
        f0 = f_prev[i] + 0.5 * beta[i] * sq_prev
        row = -lin.copy()
        row[2 * k + i] = config.amp_eff[i] * (1.0 - tau) * layout.ps
        hp.append(0.5 * beta[i] * nsq / es)
        ha.append(row / es)
        hc.append((config.p_circuit[i] - config.e_initial[i] - f0 + lin @ zx) / es)
    harvest = QuadraticBlock(np.array(hp), np.array(ha), np.array(hc))

    # storage: E^nl(x) + beta/2||x||^2 - beta/2||x0||^2 - beta Re{x0^H (x - x0)} + E0 - Emax <= 0
    rows = [i for i in range(k) if np.isfinite(config.e_max[i])]
    storage = None
    if rows:
        pm, rm, sa, sc = [], [], [], []
        for i in rows:
            lin = layout.real_lin(x_prev)
            pm.append(layout.real_quad(harvester.q[i]))
            rm.append(0.5 * beta[i] * nsq / es)
            sa.append(-beta[i] * lin / es)
            sc.append((0.5 * beta[i] * sq_prev + config.e_initial[i] - config.e_max[i]) / es)
        sub = params
        if len(rows) != k:
            from .model import NonlinearEhParams

            sub = NonlinearEhParams(params.n_sat[rows], params.a_tilde[rows], params.b_tilde[rows])
        storage = SigmoidQuadBlock(np.array(pm), tau / es, sub, np.array(rm), np.array(sa), np.array(sc))
    return harvest, storage


def _common_blocks(config, harvester, layout, x_prev, p_prev, tau):
    k, n, es = config.num_pairs, layout.n, layout.es
    blocks, units = {}, {}
    blocks["power_cap"] = ball_block([(i, k + i) for i in range(k)], n)
    units["power_cap"] = np.array(config.p_max, dtype=float)
    beta = None
    if config.nonlinear is None:
        a_rows, c_rows = [], []
        for i in range(k):
            w, c = quadratic_minorizer(harvester.q[i], x_prev)
            mt = harvester.mu[i] * tau
            row = -2.0 * mt * layout.real_lin(w)
            row[2 * k + i] = config.amp_eff[i] * (1.0 - tau) * layout.ps
            a_rows.append(row / es)
            c_rows.append((config.p_circuit[i] - config.e_initial[i] - mt * c) / es)
        blocks["harvest"] = AffineBlock(np.array(a_rows), np.array(c_rows))
        rows = [i for i in range(k) if np.isfinite(config.e_max[i])]
        if rows:
            blocks["storage"] = QuadraticBlock(
                np.array([harvester.mu[i] * tau * layout.real_quad(harvester.q[i]) / es for i in rows]),
                np.zeros((len(rows), n)),
                np.array([(config.e_initial[i] - config.e_max[i]) / es for i in rows]),
            )
    else:
        beta = _nonlinear_betas(config, harvester, tau)
        harvest, storage = build_nonlinear_constraints(config.nonlinear, harvester, config, x_prev, tau, beta, layout)
        blocks["harvest"] = harvest
        if storage is not None:
            blocks["storage"] = storage
    units["harvest"] = es
    if "storage" in blocks:
        units["storage"] = es
    a = np.zeros((k, n))
    a[np.arange(k), 2 * k + np.arange(k)] = -1.0
    blocks["nonneg"] = AffineBlock(a, np.zeros(k))
    units["nonneg"] = layout.ps
    return blocks, units, beta


def _log_terms(coeffs, p_prev):
    k = coeffs.num_pairs
    bh = np.zeros((k, k))
    cs = np.zeros(k)
    for i in range(k):
        bh[i], cs[i] = log_minorizer(coeffs.b[i], p_prev, coeffs.noise[i])
    return bh, cs


def build_sum_subproblem(coeffs: RateCoefficients, channels, config: NetworkConfig, vars_prev, tau) -> ConvexSubproblem:
    """Concave surrogate of the sum throughput around ``vars_prev`` = (x, p)."""
    harvester = _as_harvester(config, channels)
    x_prev, p_prev = (np.asarray(v) for v in vars_prev[:2])
    layout = make_layout(config, harvester, x_prev, p_prev, tau)
    blocks, units, beta = _common_blocks(config, harvester, layout, x_prev, p_prev, tau)
    k, n, ps = config.num_pairs, layout.n, layout.ps
    bh, cs = _log_terms(coeffs, p_prev)
    cm = np.zeros((k, n))
    cm[:, layout.p_slice] = coeffs.q * ps / coeffs.noise[:, None]
    lin = np.zeros(n)
    lin[layout.p_slice] = (1.0 - tau) * ps * bh.sum(axis=0)
    const = (1.0 - tau) * float(np.sum(np.log2(coeffs.noise) + cs))
    obj = LogSumObjective(1.0 - tau, cm, 1.0, lin, const)
    return ConvexSubproblem(
        kind="sum", layout=layout, objective=obj, blocks=blocks, units=units,
        start=layout.pack(x_prev, p_prev), tau=float(tau), expansion=(x_prev.copy(), p_prev.copy()),
        config=config, coeffs=coeffs, harvester=harvester, beta=beta, b_hat=bh, log_const=cs,
    )


def build_maxmin_subproblem(coeffs: RateCoefficients, channels, config: NetworkConfig, vars_prev, tau) -> ConvexSubproblem:
    """Epigraph surrogate: maximize alpha subject to per-pair rate minorants >= alpha."""
    harvester = _as_harvester(config, channels)
    x_prev, p_prev = (np.asarray(v) for v in vars_prev[:2])
    layout = make_layout(config, harvester, x_prev, p_prev, tau, epigraph=True)
    blocks, units, beta = _common_blocks(config, harvester, layout, x_prev, p_prev, tau)
    k, n, ps = config.num_pairs, layout.n, layout.ps
    bh, cs = _log_terms(coeffs, p_prev)
    cm = np.zeros((k, n))
    cm[:, layout.p_slice] = coeffs.q * ps / coeffs.noise[:, None]
    a = np.zeros((k, n))
    a[:, layout.p_slice] = -(1.0 - tau) * ps * bh
    a[:, -1] = 1.0
    c = -(1.0 - tau) * (np.log2(coeffs.noise) + cs)
    blocks["rate_floor"] = LogAffineBlock(a, c, 1.0 - tau, cm, 1.0)
    units["rate_floor"] = 1.0
    e_alpha = np.zeros(n)
    e_alpha[-1] = 1.0
    obj = LinearObjective(e_alpha)
    r0 = float(np.min(throughput(p_prev, tau, coeffs)))
    alpha0 = r0 - (1e-2 + 0.1 * abs(r0))
    return ConvexSubproblem(
        kind="maxmin", layout=layout, objective=obj, blocks=blocks, units=units,
        start=layout.pack(x_prev, p_prev, alpha0), tau=float(tau), expansion=(x_prev.copy(), p_prev.copy()),
        config=config, coeffs=coeffs, harvester=harvester, beta=beta, b_hat=bh, log_const=cs,
    )
