"""Rician channel realizations and the LMMSE estimate/error split.

Matrix convention: ``h[j, k]`` is the phase-1 channel from ET k to ER j and
``g[j, k]`` the phase-2 channel from IT j to IR k. The harvesting vector of
pair k is ``conj(h[k, :])`` so that the received amplitude is ``(h @ x)[k]``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .model import CsiModel, NetworkConfig


@dataclass(frozen=True, eq=False)
class ChannelSet:
    h: np.ndarray
    g: np.ndarray
    h_hat: np.ndarray
    g_hat: np.ndarray
    seed: int | None = None
    # deterministic (LoS) mean and variance of the random part, per link
    h_mean: np.ndarray | None = None
    g_mean: np.ndarray | None = None
    var_h: np.ndarray | None = None
    var_g: np.ndarray | None = None
    # estimation-error variance per link (zeros under perfect CSI)
    err_var_h: np.ndarray | None = None
    err_var_g: np.ndarray | None = None
    # error realizations, kept so that h == h_hat + dh holds bit-for-bit
    dh: np.ndarray | None = None
    dg: np.ndarray | None = None

    def __post_init__(self):
        k = self.h.shape[0]
        if self.h.shape != (k, k) or self.g.shape != (k, k):
            raise ValueError("channel matrices must be square and of equal size")
        for name in ("err_var_h", "err_var_g"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, np.zeros((k, k)))

    @property
    def num_pairs(self) -> int:
        return self.h.shape[0]

    @property
    def delta_h(self) -> np.ndarray:
        return self.h - self.h_hat if self.dh is None else self.dh

    @property
    def delta_g(self) -> np.ndarray:
        return self.g - self.g_hat if self.dg is None else self.dg

    def harvest_vector(self, k: int, estimated: bool = False) -> np.ndarray:
        """The vector h_k with entries conj(h_{k,j})."""
        h = self.h_hat if estimated else self.h
        return np.conj(h[k, :])


def _rician_weights(m: float) -> tuple[float, float]:
    if math.isinf(m):
        return 1.0, 0.0
    return math.sqrt(m / (m + 1.0)), math.sqrt(1.0 / (m + 1.0))


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def generate_channels(config: NetworkConfig, seed: int) -> ChannelSet:
    """One Rician realization of both phases; perfect CSI (estimates equal truth).

    The LoS term is the constant 1+0j on every link.
    """
    k = config.num_pairs
    geo = config.geometry
    pl = geo.pathloss(k)
    w_los, w_nlos = _rician_weights(geo.rician_factor)
    amp = np.sqrt(pl)
    rng = np.random.default_rng(seed)
    h = (w_los * (1.0 + 0.0j) + w_nlos * _cn(rng, (k, k))) * amp
    if geo.reciprocity:
        g = h.copy()
    else:
        g = (w_los * (1.0 + 0.0j) + w_nlos * _cn(rng, (k, k))) * amp
    mean = (w_los * amp).astype(complex)
    var = (w_nlos**2) * pl
    return ChannelSet(
        h=h, g=g, h_hat=h.copy(), g_hat=g.copy(), seed=seed,
        h_mean=mean, g_mean=mean.copy(), var_h=var, var_g=var.copy(),
    )


def _split(true, mean, var, rho, rng):
    """Draw (truth, estimate, error variance) with truth = estimate + error.

    Conditional on the truth, the LMMSE estimate is Gaussian with mean
    mean + rho^2 (true - mean) and variance rho^2 (1 - rho^2) var; the error
    is then independent of the estimate. The returned truth is re-formed as
    estimate + error so the decomposition is exact in floating point (it
    differs from the input only by rounding).
    """
    frac = CsiModel.error_fraction(rho)
    w = _cn(rng, true.shape)
    delta = frac * (true - mean) - np.sqrt(rho * rho * frac * var) * w
    est = true - delta
    return est + delta, est, delta, frac * var


def apply_csi_error(true_channels: ChannelSet, csi: CsiModel, seed: int) -> ChannelSet:
    """Attach estimates drawn from the LMMSE model to a set of true channels."""
    ch = true_channels
    k = ch.num_pairs
    var_h = ch.var_h if csi.sigma2_h is None else np.full((k, k), float(csi.sigma2_h))
    var_g = ch.var_g if csi.sigma2_g is None else np.full((k, k), float(csi.sigma2_g))
    mean_h = ch.h_mean if ch.h_mean is not None else np.zeros((k, k), complex)
    mean_g = ch.g_mean if ch.g_mean is not None else np.zeros((k, k), complex)
    rng = np.random.default_rng([int(seed), 0x5EED])
    h, h_hat, dh, ev_h = _split(ch.h, mean_h, var_h, csi.rho_h, rng)
    shared = (
        np.array_equal(ch.h, ch.g)
        and csi.rho_h == csi.rho_g
        and np.array_equal(var_h, var_g)
        and np.array_equal(mean_h, mean_g)
    )
    if shared:
        g, g_hat, dg, ev_g = h.copy(), h_hat.copy(), dh.copy(), ev_h.copy()
    else:
        g, g_hat, dg, ev_g = _split(ch.g, mean_g, var_g, csi.rho_g, rng)
    return replace(ch, h=h, g=g, h_hat=h_hat, g_hat=g_hat, var_h=var_h, var_g=var_g, err_var_h=ev_h, err_var_g=ev_g,
                   dh=dh, dg=dg)


def draw_channels(config: NetworkConfig, seed: int) -> ChannelSet:
    """True channels plus estimates according to ``config.csi``."""
    return apply_csi_error(generate_channels(config, seed), config.csi, seed)


_MATRICES = ("h", "g", "h_hat", "g_hat", "err_var_h", "err_var_g")


def write_channels(path, channels: ChannelSet) -> None:
    """CSV dump with one row per complex entry: matrix,row,col,re,im."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["matrix", "row", "col", "re", "im"])
        for name in _MATRICES:
            m = np.asarray(getattr(channels, name), dtype=complex)
            for (i, j), v in np.ndenumerate(m):
                w.writerow([name, i, j, repr(float(v.real)), repr(float(v.imag))])


def read_channels(path) -> ChannelSet:
    entries: dict[str, dict[tuple[int, int], complex]] = {}
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            entries.setdefault(row["matrix"], {})[(int(row["row"]), int(row["col"]))] = complex(
                float(row["re"]), float(row["im"])
            )
    k = 1 + max(i for i, _ in entries["h"])
    mats = {}
    for name, vals in entries.items():
        m = np.zeros((k, k), complex)
        for (i, j), v in vals.items():
            m[i, j] = v
        mats[name] = m
    return ChannelSet(
        h=mats["h"], g=mats["g"], h_hat=mats.get("h_hat", mats["h"]), g_hat=mats.get("g_hat", mats["g"]),
        err_var_h=mats["err_var_h"].real if "err_var_h" in mats else None,
        err_var_g=mats["err_var_g"].real if "err_var_g" in mats else None,
    )
