"""SINR and throughput of the information-transfer phase."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .model import NetworkConfig


@dataclass(frozen=True, eq=False)
class RateCoefficients:
    """gamma_k(p) = a[k] p_k / (b[k] @ p + noise[k]).

    ``b[k, j]`` is the interference gain from IT j at IR k.
    """

    a: np.ndarray
    b: np.ndarray
    noise: np.ndarray

    @property
    def num_pairs(self) -> int:
        return self.a.shape[0]

    @property
    def signal(self) -> np.ndarray:
        """Matrix whose row k is the vector a_k = a[k] e_k."""
        return np.diag(self.a)

    @property
    def q(self) -> np.ndarray:
        return self.b + np.diag(self.a)


def build_coefficients(channels: ChannelSet, config: NetworkConfig, mode: str = "perfect") -> RateCoefficients:
    """mode: ``perfect`` (true g), ``imperfect`` (estimate plus error variance on
    every entry) or ``estimated`` (estimate taken as exact)."""
    k = config.num_pairs
    if channels.num_pairs != k:
        raise ValueError(f"channel size {channels.num_pairs} does not match num_pairs={k}")
    if mode == "perfect":
        g = channels.g
        err = np.zeros((k, k))
    elif mode == "imperfect":
        g, err = channels.g_hat, channels.err_var_g
    elif mode == "estimated":
        g = channels.g_hat
        err = np.zeros((k, k))
    else:
        raise ValueError(f"unknown rate mode {mode!r}")
    gain = np.abs(g) ** 2
    a = np.diag(gain).copy()
    # b[k, j] = |g_{j,k}|^2 for j != k, plus error variance on every entry
    b = gain.T.copy()
    np.fill_diagonal(b, 0.0)
    b = b + err.T
    return RateCoefficients(a=a, b=b, noise=np.array(config.noise_var, dtype=float))


def sinr(p, coeffs: RateCoefficients, k: int | None = None):
    p = np.asarray(p, dtype=float)
    g = coeffs.a * p / (p @ coeffs.b.T + coeffs.noise)
    return g if k is None else float(g[..., k])


def throughput(p, tau, coeffs: RateCoefficients) -> np.ndarray:
    return (1.0 - tau) * np.log2(1.0 + sinr(p, coeffs))


def sum_throughput(p, tau, coeffs) -> float:
    return float(np.sum(throughput(p, tau, coeffs)))


def min_throughput(p, tau, coeffs) -> float:
    return float(np.min(throughput(p, tau, coeffs)))
