"""Configuration schema and the value types shared across the package.

All quantities are stored in SI units (Watts, Joules, meters) after loading.
The block duration is normalized to T = 1, so energies and average powers over
a block are numerically identical.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np


class ConfigError(ValueError):
    """Raised when a configuration document violates the schema or a bound."""


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(watt):
    return 10.0 * np.log10(np.asarray(watt, dtype=float)) + 30.0


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NonlinearEhParams:
    """Sigmoid harvester parameters, one entry per pair.

    ``omega`` is derived from the other two fields and is never stored
    independently of them.
    """

    n_sat: np.ndarray
    a_tilde: np.ndarray
    b_tilde: np.ndarray

    def __post_init__(self):
        for name in ("n_sat", "a_tilde", "b_tilde"):
            object.__setattr__(self, name, _frozen(np.atleast_1d(getattr(self, name))))
        if np.any(self.n_sat <= 0):
            raise ConfigError("nonlinear.n_sat must be > 0")
        if np.any(self.a_tilde <= 0):
            raise ConfigError("nonlinear.a_tilde must be > 0")

    @property
    def omega(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(self.a_tilde * self.b_tilde))

    @classmethod
    def rectifier_fit(cls, k: int) -> "NonlinearEhParams":
        """Fitted rectifier values (48.86 uW saturation) replicated for k pairs."""
        return cls(
            n_sat=np.full(k, 48.86e-6),
            a_tilde=np.full(k, 26515.46),
            b_tilde=np.full(k, -29.81e-6),
        )


@dataclass(frozen=True)
class CsiModel:
    """LMMSE channel-estimation quality.

    ``sigma2_h``/``sigma2_g`` of ``None`` mean "per-link variance of the random
    (NLoS) part of the channel", which is derived from the geometry.
    """

    rho_h: float = 1.0
    rho_g: float = 1.0
    sigma2_h: float | None = None
    sigma2_g: float | None = None

    def __post_init__(self):
        for name in ("rho_h", "rho_g"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"csi.{name} out of [0,1]")
        for name in ("sigma2_h", "sigma2_g"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigError(f"csi.{name} must be >= 0")

    @property
    def perfect(self) -> bool:
        return self.rho_h == 1.0 and self.rho_g == 1.0

    @staticmethod
    def error_fraction(rho: float) -> float:
        # exactly 0.0 for rho == 1
        return 1.0 - rho * rho

    def error_variance_h(self, sigma2):
        return self.error_fraction(self.rho_h) * np.asarray(sigma2, dtype=float)

    def error_variance_g(self, sigma2):
        return self.error_fraction(self.rho_g) * np.asarray(sigma2, dtype=float)


@dataclass(frozen=True, eq=False)
class GeometryConfig:
    """Node placement and large-scale fading parameters.

    ``layout`` is one of ``"symmetric"`` (pairs stacked on a line of length
    ``line_length``, each IT at ``pair_distance`` from its ET), ``"asymmetric"``
    (two pairs, IT_1 moved by ``delta_x`` along the 45 degree axis), or
    ``"explicit"`` (``et_positions``/``it_positions`` or ``distances``).
    """

    rician_factor: float = 3.0
    ref_attenuation: float = 0.01
    ref_distance: float = 1.0
    pathloss_exp: float = 3.0
    layout: str = "symmetric"
    line_length: float = 50.0
    pair_distance: float = 10.0
    delta_x: float = 0.0
    et_positions: np.ndarray | None = None
    it_positions: np.ndarray | None = None
    distances: np.ndarray | None = None
    reciprocity: bool = True

    def __post_init__(self):
        for name in ("et_positions", "it_positions", "distances"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, _frozen(v))
        if self.layout not in ("symmetric", "asymmetric", "explicit"):
            raise ConfigError(f"geometry.layout must be symmetric|asymmetric|explicit, got {self.layout!r}")
        if self.rician_factor < 0:
            raise ConfigError("geometry.rician_factor must be >= 0")
        if self.ref_attenuation <= 0 or self.ref_distance <= 0:
            raise ConfigError("geometry.ref_attenuation and ref_distance must be > 0")
        if self.layout == "explicit" and self.distances is None and (
            self.et_positions is None or self.it_positions is None
        ):
            raise ConfigError("geometry: explicit layout needs positions or a distance matrix")

    def positions(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """(ET positions, IT positions), each of shape (k, 2)."""
        if self.layout == "symmetric":
            step = self.line_length / (k - 1) if k > 1 else 0.0
            y = np.arange(k) * step
            et = np.column_stack([np.zeros(k), y])
            it = np.column_stack([np.full(k, self.pair_distance), y])
            return et, it
        if self.layout == "asymmetric":
            if k != 2:
                raise ConfigError("geometry: asymmetric layout is defined for 2 pairs")
            et = np.array([[0.0, 12.0], [0.0, 0.0]])
            shift = self.delta_x / math.sqrt(2.0)
            it = np.array([[10.0 + shift, 12.0 + shift], [10.0, 0.0]])
            return et, it
        if self.et_positions is None:
            raise ConfigError("geometry: explicit layout was given as a distance matrix only")
        return np.asarray(self.et_positions), np.asarray(self.it_positions)

    def distance_matrix(self, k: int) -> np.ndarray:
        """d[i, j]: distance between ET j and IT i, meters."""
        if self.layout == "explicit" and self.et_positions is None:
            d = np.asarray(self.distances, dtype=float)
        else:
            et, it = self.positions(k)
            d = np.linalg.norm(it[:, None, :] - et[None, :, :], axis=-1)
        if d.shape != (k, k):
            raise ConfigError(f"geometry: distance matrix must be {k}x{k}, got {d.shape}")
        if np.any(d <= 0):
            raise ConfigError("geometry: all distances must be > 0")
        return d

    def pathloss(self, k: int) -> np.ndarray:
        return self.ref_attenuation * (self.distance_matrix(k) / self.ref_distance) ** (-self.pathloss_exp)


@dataclass(frozen=True, eq=False)
class NetworkConfig:
    num_pairs: int
    p_max: np.ndarray
    p_circuit: np.ndarray
    amp_eff: np.ndarray
    mu: np.ndarray
    noise_var: np.ndarray
    e_initial: np.ndarray
    e_max: np.ndarray
    nonlinear: NonlinearEhParams | None = None
    csi: CsiModel = field(default_factory=CsiModel)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)

    def __post_init__(self):
        k = self.num_pairs
        if not isinstance(k, (int, np.integer)) or k < 1:
            raise ConfigError("num_pairs must be a positive integer")
        for name in ("p_max", "p_circuit", "amp_eff", "mu", "noise_var", "e_initial", "e_max"):
            v = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (k,))
            object.__setattr__(self, name, _frozen(v))
            if np.any(~np.isfinite(v)) and name != "e_max":
                raise ConfigError(f"{name} must be finite")
        for name in ("p_max", "p_circuit", "mu", "e_initial", "e_max"):
            if np.any(getattr(self, name) < 0):
                raise ConfigError(f"{name} must be >= 0")
        if np.any(self.noise_var <= 0):
            raise ConfigError("noise_var must be > 0")
        if np.any((self.amp_eff <= 0) | (self.amp_eff > 1)):
            raise ConfigError("amp_eff out of (0,1]")
        if np.any(self.e_initial > self.e_max):
            raise ConfigError("e_initial must be <= e_max")
        if self.nonlinear is not None and self.nonlinear.n_sat.shape != (k,):
            object.__setattr__(
                self,
                "nonlinear",
                NonlinearEhParams(
                    *(np.broadcast_to(getattr(self.nonlinear, n), (k,)) for n in ("n_sat", "a_tilde", "b_tilde"))
                ),
            )
        if self.nonlinear is not None and np.any(self.mu != 1.0):
            warnings.warn(
                "nonlinear EH model ignores mu; mu != 1 only affects linear-model runs",
                stacklevel=2,
            )

    @property
    def eh_model(self) -> str:
        return "linear" if self.nonlinear is None else "nonlinear"

    def with_(self, **changes) -> "NetworkConfig":
        return replace(self, **changes)


def default_config(num_pairs: int = 5, **overrides) -> NetworkConfig:
    """Symmetric line deployment with the default simulation parameters."""
    k = num_pairs
    cfg = dict(
        num_pairs=k,
        p_max=dbm_to_watt(32.0),
        p_circuit=dbm_to_watt(-23.0),
        amp_eff=1.0,
        mu=1.0,
        noise_var=dbm_to_watt(-70.0),
        e_initial=0.0,
        e_max=50e-6,
        csi=CsiModel(),
        geometry=GeometryConfig(rician_factor=3.0, ref_attenuation=db_to_linear(-20.0)),
    )
    cfg.update(overrides)
    return NetworkConfig(**cfg)


@dataclass(frozen=True, eq=False)
class DesignVariables:
    x: np.ndarray
    p: np.ndarray
    tau: float
    feasible: bool = False

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=complex))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "tau", float(self.tau))


@dataclass
class RunTrace:
    """Per-iteration record of one optimization run.

    ``outer`` rows hold (objective, tau, max violation) after each outer
    iteration or accepted tau probe, row 0 being the initial point.
    ``inner`` rows hold (index of the outer row they lead to, inner index,
    true objective, surrogate objective, tau, max violation).
    """

    outer: list[tuple[float, float, float]] = field(default_factory=list)
    inner: list[tuple[int, int, float, float, float, float]] = field(default_factory=list)
    reason: str = ""
    subproblems: list[Any] = field(default_factory=list)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([row[0] for row in self.outer])

    @property
    def taus(self) -> np.ndarray:
        return np.array([row[1] for row in self.outer])

    def rows(self):
        """CSV rows: outer summaries use inner_iter 0, inner iterates count from 1."""
        by_outer: dict[int, list] = {}
        for r in self.inner:
            by_outer.setdefault(r[0], []).append(r)
        out = []
        for kappa, (g, tau, viol) in enumerate(self.outer):
            out.append((kappa, 0, g, float("nan"), tau, viol))
            out.extend(by_outer.get(kappa + 1, []))
        return out

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for row in self.rows():
                w.writerow([row[0], row[1]] + [repr(float(v)) for v in row[2:]])


TRACE_COLUMNS = ("outer_iter", "inner_iter", "objective_true", "objective_surrogate", "tau", "max_violation")


# ---------------------------------------------------------------------------
# config documents

_VECTOR_FIELDS = {
    # name: (si key, alternative keys with converters)
    "p_max": ("p_max_w", {"p_max_dbm": dbm_to_watt}),
    "p_circuit": ("p_circuit_j", {"p_circuit_dbm": dbm_to_watt, "p_circuit_uj": lambda v: np.asarray(v) / 1e6}),
    "amp_eff": ("amp_eff", {}),
    "mu": ("mu", {}),
    "noise_var": ("noise_w", {"noise_dbm": dbm_to_watt}),
    "e_initial": ("e_initial_j", {"e_initial_uj": lambda v: np.asarray(v) / 1e6}),
    "e_max": ("e_max_j", {"e_max_uj": lambda v: np.asarray(v) / 1e6}),
}

_DEFAULTS = {"amp_eff": 1.0, "mu": 1.0, "e_initial": 0.0}


def _pick(doc: dict, si_key: str, alts: dict, name: str):
    if si_key in doc:
        return np.asarray(doc[si_key], dtype=float)
    for key, conv in alts.items():
        if key in doc:
            return conv(np.asarray(doc[key], dtype=float))
    if name in _DEFAULTS:
        return np.asarray(_DEFAULTS[name])
    raise ConfigError(f"missing field {si_key!r} (or one of {sorted(alts)})")


def config_from_dict(doc: dict) -> NetworkConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    if "num_pairs" not in doc:
        raise ConfigError("missing field 'num_pairs'")
    k = doc["num_pairs"]
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        raise ConfigError("num_pairs must be a positive integer")
    vals = {}
    for name, (si_key, alts) in _VECTOR_FIELDS.items():
        v = _pick(doc, si_key, alts, name)
        if v.ndim > 1 or (v.ndim == 1 and v.shape[0] != k):
            raise ConfigError(f"{si_key}: expected a scalar or a list of {k} values")
        vals[name] = v

    nl = None
    if doc.get("nonlinear") is not None:
        d = doc["nonlinear"]
        try:
            n_sat = d["n_sat_w"] if "n_sat_w" in d else np.asarray(d["n_sat_uw"], dtype=float) / 1e6
            nl = NonlinearEhParams(
                n_sat=np.broadcast_to(n_sat, (k,)),
                a_tilde=np.broadcast_to(d["a_tilde"], (k,)),
                b_tilde=np.broadcast_to(d["b_tilde"], (k,)),
            )
        except KeyError as exc:
            raise ConfigError(f"nonlinear: missing field {exc.args[0]!r}") from None

    c = doc.get("csi", {}) or {}
    csi = CsiModel(
        rho_h=float(c.get("rho_h", c.get("rho", 1.0))),
        rho_g=float(c.get("rho_g", c.get("rho", 1.0))),
        sigma2_h=c.get("sigma2_h"),
        sigma2_g=c.get("sigma2_g"),
    )

    g = dict(doc.get("geometry", {}) or {})
    geo_kw: dict[str, Any] = {}
    if "rician_factor" in g:
        geo_kw["rician_factor"] = float(g["rician_factor"])
    if "ref_attenuation" in g:
        geo_kw["ref_attenuation"] = float(g["ref_attenuation"])
    elif "ref_attenuation_db" in g:
        geo_kw["ref_attenuation"] = float(db_to_linear(g["ref_attenuation_db"]))
    for key, name in (
        ("ref_distance_m", "ref_distance"),
        ("pathloss_exp", "pathloss_exp"),
        ("line_length_m", "line_length"),
        ("pair_distance_m", "pair_distance"),
        ("delta_x_m", "delta_x"),
    ):
        if key in g:
            geo_kw[name] = float(g[key])
    if "reciprocity" in g:
        geo_kw["reciprocity"] = bool(g["reciprocity"])
    if "layout" in g:
        geo_kw["layout"] = g["layout"]
    pos = g.get("positions_m")
    if pos is not None:
        # positions win over a distance matrix when both are present
        geo_kw.update(layout="explicit", et_positions=pos["et"], it_positions=pos["it"])
    elif g.get("distances_m") is not None:
        geo_kw.update(layout="explicit", distances=g["distances_m"])
    geometry = GeometryConfig(**geo_kw)

    cfg = NetworkConfig(num_pairs=k, nonlinear=nl, csi=csi, geometry=geometry, **vals)
    geometry.distance_matrix(k)
    return cfg


def config_to_dict(cfg: NetworkConfig) -> dict:
    """SI-valued document; ``config_from_dict`` reproduces the config exactly."""

    def lst(a):
        return [float(v) for v in np.asarray(a)]

    doc: dict[str, Any] = {"num_pairs": int(cfg.num_pairs)}
    for name, (si_key, _) in _VECTOR_FIELDS.items():
        doc[si_key] = lst(getattr(cfg, name))
    if cfg.nonlinear is not None:
        doc["nonlinear"] = {
            "n_sat_w": lst(cfg.nonlinear.n_sat),
            "a_tilde": lst(cfg.nonlinear.a_tilde),
            "b_tilde": lst(cfg.nonlinear.b_tilde),
        }
    doc["csi"] = {
        "rho_h": cfg.csi.rho_h,
        "rho_g": cfg.csi.rho_g,
        "sigma2_h": cfg.csi.sigma2_h,
        "sigma2_g": cfg.csi.sigma2_g,
    }
    g = cfg.geometry
    geo: dict[str, Any] = {
        "rician_factor": g.rician_factor,
        "ref_attenuation": g.ref_attenuation,
        "ref_distance_m": g.ref_distance,
        "pathloss_exp": g.pathloss_exp,
        "layout": g.layout,
        "line_length_m": g.line_length,
        "pair_distance_m": g.pair_distance,
        "delta_x_m": g.delta_x,
        "reciprocity": g.reciprocity,
    }
    if g.et_positions is not None:
        geo["positions_m"] = {"et": g.et_positions.tolist(), "it": g.it_positions.tolist()}
    elif g.distances is not None:
        geo["distances_m"] = g.distances.tolist()
    doc["geometry"] = geo
    return doc


def load_config(source) -> NetworkConfig:
    """Parse a JSON config from a path, a JSON string, or an already-decoded dict."""
    if isinstance(source, dict):
        return config_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text()
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return config_from_dict(doc)


def dump_config(cfg: NetworkConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, allow_nan=True)
