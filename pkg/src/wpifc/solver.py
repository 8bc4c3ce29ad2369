"""Log-barrier interior-point method for smooth concave maximization.

A problem exposes ``n`` (number of real variables), ``start`` (initial
point), ``objective`` (concave, to maximize) and ``constraints``: a list of
blocks, each a vector of convex functions required to be <= 0.

Blocks implement ``value(z)`` (batched over leading axes), ``jac(z)`` of
shape (m, n) and ``hess_sum(z, w)`` = sum_i w_i * Hess f_i(z). Objectives
implement ``value`` (batched), ``grad`` and ``hess``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LN2 = math.log(2.0)


# ---------------------------------------------------------------- blocks

class AffineBlock:
    def __init__(self, a, c):
        self.a = np.atleast_2d(np.asarray(a, dtype=float))
        self.c = np.asarray(c, dtype=float).reshape(-1)
        self.m = self.c.size

    def value(self, z):
        return np.asarray(z) @ self.a.T + self.c

    def jac(self, z):
        return self.a

    def hess_sum(self, z, w):
        return None


class QuadraticBlock:
    """f_i(z) = z^T P_i z + A_i z + c_i with P_i symmetric PSD."""

    def __init__(self, p, a, c):
        self.p = np.asarray(p, dtype=float)
        self.a = np.atleast_2d(np.asarray(a, dtype=float))
        self.c = np.asarray(c, dtype=float).reshape(-1)
        self.m = self.c.size

    def value(self, z):
        z = np.asarray(z)
        return np.einsum("...i,kij,...j->...k", z, self.p, z) + z @ self.a.T + self.c

    def jac(self, z):
        return 2.0 * (self.p @ z) + self.a

    def hess_sum(self, z, w):
        return 2.0 * np.einsum("k,kij->ij", w, self.p)


def ball_block(pairs, n, radius2=1.0):
    """z_i^2 + z_j^2 <= radius2 for each index pair (i, j)."""
    pairs = list(pairs)
    p = np.zeros((len(pairs), n, n))
    for r, (i, j) in enumerate(pairs):
        p[r, i, i] = 1.0
        p[r, j, j] = 1.0
    return QuadraticBlock(p, np.zeros((len(pairs), n)), -np.broadcast_to(radius2, (len(pairs),)))


class LogAffineBlock:
    """f_i(z) = A_i z + c_i - w_i log2(d_i + C_i z), w_i >= 0."""

    def __init__(self, a, c, w, cm, d):
        self.a = np.atleast_2d(np.asarray(a, dtype=float))
        self.c = np.asarray(c, dtype=float).reshape(-1)
        self.w = np.broadcast_to(np.asarray(w, dtype=float), self.c.shape).copy()
        self.cm = np.atleast_2d(np.asarray(cm, dtype=float))
        self.d = np.broadcast_to(np.asarray(d, dtype=float), self.c.shape).copy()
        self.m = self.c.size

    def _arg(self, z):
        return self.d + np.asarray(z) @ self.cm.T

    def value(self, z):
        arg = self._arg(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.where(arg > 0, np.log2(np.where(arg > 0, arg, 1.0)), -np.inf)
        return np.asarray(z) @ self.a.T + self.c - self.w * lg

    def jac(self, z):
        arg = self._arg(z)
        return self.a - (self.w / (arg * LN2))[:, None] * self.cm

    def hess_sum(self, z, w):
        arg = self._arg(z)
        coef = w * self.w / (arg * arg * LN2)
        return (self.cm.T * coef) @ self.cm


class LinearObjective:
    def __init__(self, c, const=0.0):
        self.c = np.asarray(c, dtype=float)
        self.const = float(const)

    def value(self, z):
        return np.asarray(z) @ self.c + self.const

    def grad(self, z):
        return self.c

    def hess(self, z):
        return None


class LogSumObjective:
    """sum_r w_r log2(d_r + C_r z) + l^T z + const."""

    def __init__(self, w, cm, d, lin, const=0.0):
        self.cm = np.atleast_2d(np.asarray(cm, dtype=float))
        r = self.cm.shape[0]
        self.w = np.broadcast_to(np.asarray(w, dtype=float), (r,)).copy()
        self.d = np.broadcast_to(np.asarray(d, dtype=float), (r,)).copy()
        self.lin = np.asarray(lin, dtype=float)
        self.const = float(const)

    def value(self, z):
        z = np.asarray(z)
        arg = self.d + z @ self.cm.T
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.where(arg > 0, np.log2(np.where(arg > 0, arg, 1.0)), -np.inf)
        return lg @ self.w + z @ self.lin + self.const

    def grad(self, z):
        arg = self.d + self.cm @ z
        return self.cm.T @ (self.w / (arg * LN2)) + self.lin

    def hess(self, z):
        arg = self.d + self.cm @ z
        return -(self.cm.T * (self.w / (arg * arg * LN2))) @ self.cm


# ---------------------------------------------------------------- solver

@dataclass(frozen=True)
class SolverOptions:
    t0: float = 1.0
    mu: float = 20.0
    gap_tol: float = 1e-8
    newton_tol: float = 1e-10
    max_newton: int = 100
    max_centering: int = 60
    alpha_ls: float = 0.1
    beta_ls: float = 0.5
    phase1_box: float = 1e3

    def __post_init__(self):
        if not (self.t0 > 0 and self.gap_tol > 0 and self.newton_tol > 0):
            raise ValueError("solver tolerances and t0 must be positive")
        if self.mu <= 1:
            raise ValueError("barrier multiplier must exceed 1")
        if not (0 < self.alpha_ls < 0.5 and 0 < self.beta_ls < 1):
            raise ValueError("line-search parameters out of range")
        if self.max_newton < 1 or self.max_centering < 1:
            raise ValueError("iteration limits must be positive")


@dataclass
class SolverResult:
    z: np.ndarray
    value: float
    gap: float
    newton_steps: int
    centering_steps: int
    status: str  # Optimal | MaxIters | Infeasible
    phase1: bool = False
    barrier_history: list = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "Optimal"


def constraint_values(constraints, z) -> np.ndarray:
    if not constraints:
        return np.zeros(0)
    return np.concatenate([np.atleast_1d(b.value(z)) for b in constraints])


def _barrier(obj, constraints, z, t):
    v = constraint_values(constraints, z)
    if not np.all(v < 0):
        return math.inf
    f0 = float(obj.value(z))
    if not math.isfinite(f0):
        return math.inf
    return -t * f0 - float(np.sum(np.log(-v)))


def _newton_system(obj, constraints, z, t):
    n = z.size
    g = -t * np.asarray(obj.grad(z), dtype=float)
    h0 = obj.hess(z)
    hmat = np.zeros((n, n)) if h0 is None else -t * h0
    for blk in constraints:
        v = np.atleast_1d(blk.value(z))
        jac = np.atleast_2d(blk.jac(z))
        inv = -1.0 / v
        g = g + jac.T @ inv
        hmat = hmat + (jac.T * (inv * inv)) @ jac
        hs = blk.hess_sum(z, inv)
        if hs is not None:
            hmat = hmat + hs
    return g, hmat


def _newton_direction(g, hmat):
    d = np.sqrt(np.maximum(np.abs(np.diag(hmat)), 1e-300))
    hs = hmat / d[:, None] / d[None, :]
    gs = g / d
    try:
        step = -np.linalg.solve(hs, gs)
    except np.linalg.LinAlgError:
        step = -np.linalg.lstsq(hs, gs, rcond=None)[0]
    if not np.all(np.isfinite(step)):
        step = -np.linalg.lstsq(hs + 1e-12 * np.eye(g.size), gs, rcond=None)[0]
    return step / d


def _center(obj, constraints, z, t, opts, history, stop=None):
    steps = 0
    phi = _barrier(obj, constraints, z, t)
    converged = False
    for _ in range(opts.max_newton):
        g, hmat = _newton_system(obj, constraints, z, t)
        dz = _newton_direction(g, hmat)
        slope = float(g @ dz)
        if not math.isfinite(slope):
            break
        # decrement below tolerance, or below what rounding in phi can resolve
        if -slope / 2.0 <= max(opts.newton_tol, 1e-15 * abs(phi)) or slope >= 0:
            converged = True
            break
        s = 1.0
        while True:
            znew = z + s * dz
            phinew = _barrier(obj, constraints, znew, t)
            if phinew <= phi + opts.alpha_ls * s * slope:
                break
            s *= opts.beta_ls
            if s < 1e-20:
                phinew = None
                break
        steps += 1
        if phinew is None or phinew >= phi:
            converged = True  # no further progress at working precision
            if phinew is not None:
                z, phi = znew, phinew
            break
        z, phi = znew, phinew
        history.append((t, phi))
        if stop is not None and stop(z):
            return z, steps, True
    return z, steps, converged


class _Lifted:
    """f(z) - s for the phase-I auxiliary problem over (z, s)."""

    def __init__(self, blk, n):
        self.blk, self.n, self.m = blk, n, blk.m

    def value(self, zs):
        zs = np.asarray(zs)
        return self.blk.value(zs[..., : self.n]) - zs[..., self.n : self.n + 1]

    def jac(self, zs):
        j = np.atleast_2d(self.blk.jac(zs[: self.n]))
        return np.hstack([j, -np.ones((j.shape[0], 1))])

    def hess_sum(self, zs, w):
        hs = self.blk.hess_sum(zs[: self.n], w)
        if hs is None:
            return None
        out = np.zeros((self.n + 1, self.n + 1))
        out[: self.n, : self.n] = hs
        return out


class _Problem:
    def __init__(self, n, start, objective, constraints):
        self.n, self.start, self.objective, self.constraints = n, start, objective, constraints


def _barrier_method(problem, z, opts, stop=None):
    obj, cons = problem.objective, problem.constraints
    m = int(sum(b.m for b in cons))
    t = opts.t0
    history: list[tuple[float, float]] = []  # (t, barrier value) per Newton step
    newton = centering = 0
    all_conv = True
    status = None
    for _ in range(opts.max_centering):
        z, k, conv = _center(obj, cons, z, t, opts, history, stop)
        newton += k
        centering += 1
        all_conv = all_conv and conv
        if stop is not None and stop(z):
            status = "Stopped"
            break
        if m == 0 or m / t < opts.gap_tol:
            break
        t *= opts.mu
    if status is None:
        status = "Optimal" if (all_conv and (m == 0 or m / t < opts.gap_tol)) else "MaxIters"
    return z, (m / t if m else 0.0), newton, centering, status, history


def phase_one(problem, opts: SolverOptions = SolverOptions()):
    """Find a strictly feasible point starting from ``problem.start``.

    Returns (z, newton_steps) or (None, newton_steps) when the constraints
    admit no strictly feasible point.
    """
    n = problem.n
    z0 = np.asarray(problem.start, dtype=float)
    v0 = constraint_values(problem.constraints, z0)
    if not np.all(np.isfinite(v0)):
        raise ValueError("phase-I start outside the constraint domain")
    s0 = float(np.max(v0)) + 1.0
    radius = opts.phase1_box * max(1.0, float(np.max(np.abs(z0))))
    eye = np.eye(n)
    box = AffineBlock(
        np.vstack([np.hstack([eye, np.zeros((n, 1))]), np.hstack([-eye, np.zeros((n, 1))])]),
        np.concatenate([-z0 - radius, z0 - radius]),
    )
    lifted = [_Lifted(b, n) for b in problem.constraints] + [box]
    obj = LinearObjective(np.concatenate([np.zeros(n), [-1.0]]))
    aux = _Problem(n + 1, np.concatenate([z0, [s0]]), obj, lifted)

    def feasible(zs):
        return bool(np.all(constraint_values(problem.constraints, zs[:n]) < 0))

    zs, _, newton, _, status, _ = _barrier_method(aux, aux.start, opts, stop=feasible)
    if feasible(zs):
        return zs[:n], newton
    return None, newton


def solve(problem, options: SolverOptions | None = None) -> SolverResult:
    opts = options or SolverOptions()
    z = np.asarray(problem.start, dtype=float).copy()
    used_phase1 = False
    extra = 0
    v = constraint_values(problem.constraints, z)
    if not (np.all(v < 0) and math.isfinite(float(problem.objective.value(z)))):
        used_phase1 = True
        z1, extra = phase_one(problem, opts)
        if z1 is None:
            return SolverResult(z, -math.inf, math.inf, extra, 0, "Infeasible", True)
        z = z1
    z, gap, newton, centering, status, hist = _barrier_method(problem, z, opts)
    return SolverResult(
        z=z, value=float(problem.objective.value(z)), gap=gap, newton_steps=newton + extra,
        centering_steps=centering, status=status, phase1=used_phase1, barrier_history=hist,
    )


def make_problem(n, start, objective, constraints):
    """Bundle the four problem attributes for ad-hoc use."""
    return _Problem(n, np.asarray(start, dtype=float), objective, list(constraints))
