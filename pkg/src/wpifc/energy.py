"""Harvested-energy models: linear, sigmoid (nonlinear) and imperfect-CSI average."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .model import NetworkConfig, NonlinearEhParams


def received_power(x, h_k) -> float:
    """|h_k^H x|^2 in Watts."""
    return float(abs(np.vdot(h_k, x)) ** 2)


def harvested_energy_linear(x, h_k, mu_k, tau) -> float:
    return float(mu_k) * float(tau) * received_power(x, h_k)


def _param(a, k):
    a = np.asarray(a, dtype=float)
    return float(a) if a.ndim == 0 else float(a[k])


def sigmoid_rate(pl, n_sat, a_tilde, b_tilde):
    """Nonlinear harvest per unit tau as a function of received power ``pl``.

    Both sigmoid terms go through the same expression so that ``pl = 0``
    cancels exactly.
    """
    pl = np.asarray(pl, dtype=float)
    omega = 1.0 / (1.0 + np.exp(-a_tilde * (0.0 - b_tilde)))
    sig = 1.0 / (1.0 + np.exp(-a_tilde * (pl - b_tilde)))
    return (n_sat * sig - n_sat * omega) / (1.0 - omega)


def sigmoid_derivatives(pl, n_sat, a_tilde, b_tilde):
    """(phi, phi', phi'') of the per-unit-tau nonlinear harvest w.r.t. received power."""
    pl = np.asarray(pl, dtype=float)
    omega = 1.0 / (1.0 + np.exp(a_tilde * b_tilde))
    sig = 1.0 / (1.0 + np.exp(-a_tilde * (pl - b_tilde)))
    c = n_sat / (1.0 - omega)
    phi = (n_sat * sig - n_sat * omega) / (1.0 - omega)
    d1 = c * a_tilde * sig * (1.0 - sig)
    d2 = c * a_tilde**2 * sig * (1.0 - sig) * (1.0 - 2.0 * sig)
    return phi, d1, d2


def harvested_energy_nonlinear(x, h_k, params: NonlinearEhParams, tau, k: int = 0) -> float:
    """Sigmoid harvester fed with the raw received power (no conversion constant)."""
    pl = received_power(x, h_k)
    n, a, b = (_param(v, k) for v in (params.n_sat, params.a_tilde, params.b_tilde))
    return float(tau) * float(sigmoid_rate(pl, n, a, b))


def harvested_energy_imperfect(x, h_hat_k, sigma2_h_delta, mu_k, tau) -> float:
    """Average harvest over the estimation error.

    ``sigma2_h_delta`` may be a scalar or a per-link vector (diagonal error
    covariance).
    """
    x = np.asarray(x, dtype=complex)
    iso = float(np.sum(np.asarray(sigma2_h_delta, dtype=float) * np.abs(x) ** 2))
    return float(mu_k) * float(tau) * (received_power(x, h_hat_k) + iso)


def beta_lower_bound(params: NonlinearEhParams, h_k, tau, total_power_budget, k: int = 0) -> float:
    """Smallest quadratic weight that convexifies the sigmoid harvest on the feasible box.

    ``h_k`` is either a channel vector (rank-one Q) or a Hermitian PSD matrix Q.
    """
    n, a, b = (_param(v, k) for v in (params.n_sat, params.a_tilde, params.b_tilde))
    omega = 1.0 / (1.0 + np.exp(a * b))
    h_k = np.asarray(h_k)
    if h_k.ndim == 1:
        lam = float(np.sum(np.abs(h_k) ** 2)) ** 2
    else:
        lam = float(np.max(np.linalg.eigvalsh(h_k))) ** 2
    return 4.0 * float(tau) * n * a * a * np.exp(a * b) / (1.0 - omega) * lam * float(total_power_budget)


def dc_gradient(x0, q_k, params: NonlinearEhParams, tau, beta, k: int = 0) -> np.ndarray:
    """Row vector u with Re{u d} the directional derivative of E^nl + beta/2 ||x||^2 at x0."""
    x0 = np.asarray(x0, dtype=complex)
    q_k = np.asarray(q_k, dtype=complex)
    n, a, b = (_param(v, k) for v in (params.n_sat, params.a_tilde, params.b_tilde))
    omega = 1.0 / (1.0 + np.exp(a * b))
    pl = float(np.real(np.vdot(x0, q_k @ x0)))
    e = np.exp(-a * (pl - b))
    c = 2.0 * tau * n * a * e / ((1.0 - omega) * (1.0 + e) ** 2)
    return c * (np.conj(x0) @ q_k) + beta * np.conj(x0)


@dataclass(frozen=True, eq=False)
class Harvester:
    """Harvest model used by the optimizer: E_k = tau * f_k(x).

    ``q[k]`` is the Hermitian PSD matrix with received power x^H q[k] x.
    """

    q: np.ndarray
    mu: np.ndarray
    nonlinear: NonlinearEhParams | None = None

    @property
    def num_pairs(self) -> int:
        return self.q.shape[0]

    def received(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        return np.real(np.einsum("...i,kij,...j->...k", np.conj(x), self.q, x))

    def rate(self, x) -> np.ndarray:
        """Harvest per unit tau, f_k(x)."""
        pl = self.received(x)
        if self.nonlinear is None:
            return self.mu * pl
        nl = self.nonlinear
        return sigmoid_rate(pl, nl.n_sat, nl.a_tilde, nl.b_tilde)

    def energy(self, x, tau) -> np.ndarray:
        return tau * self.rate(x)


def harvest_matrices(channels: ChannelSet, mode: str = "perfect", baseline: bool = False) -> np.ndarray:
    """Q_k matrices for the design model.

    mode: ``perfect`` (true h), ``robust`` (estimate plus error covariance) or
    ``nonrobust`` (estimate treated as exact). ``baseline`` drops all cross
    terms, i.e. the expected harvest under independent uniform ET phases.
    """
    if mode == "perfect":
        h = channels.h
        err = np.zeros(h.shape)
    elif mode == "robust":
        h, err = channels.h_hat, channels.err_var_h
    elif mode == "nonrobust":
        h = channels.h_hat
        err = np.zeros(h.shape)
    else:
        raise ValueError(f"unknown CSI mode {mode!r}")
    hv = np.conj(h)  # row k is h_k
    if baseline:
        return np.stack([np.diag(np.abs(hv[k]) ** 2 + err[k]).astype(complex) for k in range(h.shape[0])])
    q = np.einsum("ki,kj->kij", hv, np.conj(hv))
    q = q + np.stack([np.diag(err[k]) for k in range(h.shape[0])])
    return q


def make_harvester(config: NetworkConfig, channels: ChannelSet, mode: str = "perfect",
                   baseline: bool = False) -> Harvester:
    return Harvester(q=harvest_matrices(channels, mode, baseline), mu=config.mu, nonlinear=config.nonlinear)


@dataclass(frozen=True)
class EnergyReport:
    received: np.ndarray
    energy: np.ndarray
    model: str


def energy_report(harvester: Harvester, x, tau) -> EnergyReport:
    return EnergyReport(
        received=harvester.received(x),
        energy=harvester.energy(x, tau),
        model="nonlinear" if harvester.nonlinear is not None else "linear",
    )
