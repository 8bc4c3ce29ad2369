import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wpifc.model import (
    ConfigError,
    CsiModel,
    GeometryConfig,
    NonlinearEhParams,
    config_from_dict,
    config_to_dict,
    dbm_to_watt,
    default_config,
    dump_config,
    load_config,
)


def _doc(**kw):
    d = {"num_pairs": 2, "p_max_dbm": 32, "p_circuit_dbm": -23, "noise_dbm": -70, "e_max_uj": 50}
    d.update(kw)
    return d


def test_dbm_conversions():
    assert dbm_to_watt(32) == pytest.approx(1.585, rel=1e-3)
    assert dbm_to_watt(-70) == pytest.approx(1e-10, rel=1e-12)
    cfg = load_config(_doc())
    assert cfg.p_max == pytest.approx([1.5849, 1.5849], rel=1e-4)
    assert cfg.noise_var == pytest.approx([1e-10, 1e-10], rel=1e-12)
    assert cfg.e_max[0] == 5e-5


def test_amp_eff_bound_is_named():
    with pytest.raises(ConfigError, match=r"amp_eff out of \(0,1\]"):
        load_config(_doc(amp_eff=1.5))


@pytest.mark.parametrize(
    "patch, msg",
    [
        ({"num_pairs": 0}, "num_pairs"),
        ({"e_initial_uj": 60}, "e_initial"),
        ({"noise_w": 0.0}, "noise_var"),
        ({"p_max_w": [1.0, 2.0, 3.0]}, "p_max_w"),
        ({"csi": {"rho_h": 1.2}}, "rho_h"),
        ({"nonlinear": {"n_sat_uw": 48.86}}, "a_tilde"),
    ],
)
def test_schema_violations(patch, msg):
    d = _doc()
    if "p_max_w" in patch:
        d.pop("p_max_dbm")
    d.update(patch)
    with pytest.raises(ConfigError, match=msg):
        load_config(d)


def test_missing_field():
    d = _doc()
    d.pop("noise_dbm")
    with pytest.raises(ConfigError, match="noise"):
        load_config(d)


def test_invalid_json():
    with pytest.raises(ConfigError):
        load_config("{not json")


def test_roundtrip_bitwise(tmp_path):
    for cfg in (
        default_config(),
        default_config(3, nonlinear=NonlinearEhParams.rectifier_fit(3)),
        default_config(2).with_(csi=CsiModel(0.7, 0.9), geometry=GeometryConfig(layout="asymmetric", delta_x=4.0)),
    ):
        p = tmp_path / "c.json"
        p.write_text(dump_config(cfg))
        back = load_config(p)
        assert json.dumps(config_to_dict(back)) == json.dumps(config_to_dict(cfg))
        for name in ("p_max", "p_circuit", "noise_var", "e_max", "e_initial", "mu", "amp_eff"):
            assert np.array_equal(getattr(back, name), getattr(cfg, name))


def test_shipped_configs_load():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "configs"
    files = sorted(root.glob("*.json"))
    assert files
    for f in files:
        load_config(f)
    assert config_to_dict(load_config(root / "default.json")) == config_to_dict(default_config())


def test_perfect_csi_reduction():
    c = CsiModel(1.0, 1.0)
    assert c.perfect
    assert c.error_variance_h(3.7) == 0.0 and c.error_variance_g(1e-5) == 0.0


def test_error_variance_value():
    assert CsiModel(0.9, 0.9).error_variance_h(1.0) == pytest.approx(0.19, abs=1e-15)


def test_omega_is_derived():
    nl = NonlinearEhParams.rectifier_fit(2)
    assert np.all((nl.omega > 0) & (nl.omega < 1))
    assert nl.omega == pytest.approx(1.0 / (1.0 + np.exp(26515.46 * -29.81e-6)))
    with pytest.raises(ConfigError):
        NonlinearEhParams(n_sat=[-1.0], a_tilde=[1.0], b_tilde=[0.0])


def test_mu_warning_with_sigmoid():
    with pytest.warns(UserWarning, match="mu"):
        default_config(2, nonlinear=NonlinearEhParams.rectifier_fit(2), mu=np.full(2, 0.5))


def test_symmetric_geometry():
    g = GeometryConfig()
    d = g.distance_matrix(5)
    assert np.allclose(np.diag(d), 10.0)
    assert np.all(d > 0)
    # adjacent pairs are l_d/(K-1) apart along the line
    et, it = g.positions(5)
    assert np.allclose(np.diff(et[:, 1]), 12.5)
    assert np.allclose(np.linalg.norm(it - et, axis=1), 10.0)
    assert g.pathloss(5)[0, 0] == pytest.approx(0.01 * 10.0 ** -3)


def test_asymmetric_shift():
    g0 = GeometryConfig(layout="asymmetric", delta_x=0.0).distance_matrix(2)
    g4 = GeometryConfig(layout="asymmetric", delta_x=4.0).distance_matrix(2)
    assert g0[0, 0] == pytest.approx(10.0)
    # IT_1 moves away from ET_1 along the 45 degree axis
    assert g4[0, 0] == pytest.approx(np.hypot(10 + 4 / np.sqrt(2), 4 / np.sqrt(2)))
    assert g4[1, 1] == g0[1, 1]


def test_explicit_positions_win_over_distances():
    doc = _doc(geometry={
        "positions_m": {"et": [[0, 0], [0, 20]], "it": [[10, 0], [10, 20]]},
        "distances_m": [[1, 2], [3, 4]],
    })
    cfg = load_config(doc)
    assert np.allclose(np.diag(cfg.geometry.distance_matrix(2)), 10.0)


def test_explicit_distances_positive():
    with pytest.raises((ConfigError, ValueError)):
        load_config(_doc(geometry={"distances_m": [[10, 0], [5, 10]]}))


@settings(max_examples=50, deadline=None)
@given(
    k=st.integers(1, 6),
    pdbm=st.floats(0, 50),
    rho=st.floats(0, 1),
    emax=st.floats(1, 1e3),
)
def test_roundtrip_property(k, pdbm, rho, emax):
    cfg = config_from_dict({
        "num_pairs": k, "p_max_dbm": pdbm, "p_circuit_dbm": -23, "noise_dbm": -70, "e_max_uj": emax,
        "csi": {"rho": rho},
    })
    back = config_from_dict(json.loads(dump_config(cfg)))
    assert np.array_equal(back.p_max, cfg.p_max)
    assert np.array_equal(back.e_max, cfg.e_max)
    assert back.csi == cfg.csi
