import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rrlevy.errors import ConfigError, DomainError
from rrlevy.model import (
    ModelSpec,
    Variation,
    classify,
    load_model,
    model_hash,
    net_drift,
    phi,
    psi,
    psi_Y,
    varphi,
)

from conftest import M1, M1_DIFFUSIVE, TWO_PHASE


def test_psi_values():
    assert psi(M1, 0.0) == 0.0
    # 1.5 t - t / (1 + t) at t = 1
    assert psi(M1, 1.0) == pytest.approx(1.0)
    assert psi_Y(M1, 1.0) == pytest.approx(0.75)
    assert psi(M1_DIFFUSIVE, 2.0) == pytest.approx(0.125 * 4 + 3.0 - 2.0 / 3.0)
    np.testing.assert_allclose(psi(M1, np.array([0.0, 1.0])), [0.0, 1.0])


def test_psi_negative_argument():
    with pytest.raises(DomainError):
        psi(M1, -0.1)


def test_net_drift():
    assert net_drift(M1) == pytest.approx((0.5, 0.25))
    assert net_drift(TWO_PHASE) == pytest.approx((2.0 - 0.6 - 0.4 / 3.0, 2.0 - 0.6 - 0.4 / 3.0 - 0.5))


def test_roots_known():
    # psi(t) = q  <=>  1.5 t^2 + (0.5 - q) t - q = 0 for one Exp(1) component
    q = 0.5
    assert phi(M1, q) == pytest.approx(math.sqrt(1 / 3), rel=1e-13)
    assert varphi(M1, q) == pytest.approx(0.740312423743, rel=1e-11)
    assert phi(M1, 0.0) == 0.0


def test_root_at_zero_with_negative_drift():
    m = ModelSpec(sigma=0.3, drift=0.2, jumps=((1.0, 2.0),), delta=0.1, b=1.0)
    r = phi(m, 0.0)
    assert r > 0 and abs(psi(m, r)) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 50.0))
def test_right_inverse_property(q):
    for m in (M1, M1_DIFFUSIVE, TWO_PHASE):
        r = phi(m, q)
        assert abs(psi(m, r) - q) <= 1e-9 * max(1.0, q)
        v = varphi(m, q)
        assert abs(psi_Y(m, v) - q) <= 1e-9 * max(1.0, q)
        assert v >= r - 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 10.0), st.floats(0.01, 10.0))
def test_psi_convex_on_positive_axis(t, s):
    for m in (M1, M1_DIFFUSIVE, TWO_PHASE):
        mid = psi(m, 0.5 * (t + s))
        assert mid <= 0.5 * (psi(m, t) + psi(m, s)) + 1e-12


def test_classify():
    assert classify(M1) is Variation.BOUNDED
    assert classify(M1_DIFFUSIVE) is Variation.UNBOUNDED


@pytest.mark.parametrize(
    "kwargs, fragment",
    [
        ({"sigma": -1.0, "drift": 1.0}, "sigma"),
        ({"sigma": 0.0, "drift": 1.0, "delta": 1.0}, "condition (H)"),
        ({"sigma": 0.0, "drift": -1.0}, "drift > 0"),
        ({"sigma": 0.1, "drift": 1.0, "b": 0.0}, "b must be"),
        ({"sigma": 0.1, "drift": 1.0, "jumps": ((1.0, 0.0),)}, "jumps[0]"),
        ({"sigma": 0.1, "drift": float("nan")}, "finite"),
    ],
)
def test_validation(kwargs, fragment):
    with pytest.raises(ConfigError, match=fragment.replace("(", r"\(").replace(")", r"\)").replace("[", r"\[")):
        ModelSpec(**kwargs)


def test_unbounded_variation_allows_any_delta():
    m = ModelSpec(sigma=0.2, drift=0.1, delta=5.0)
    assert m.delta == 5.0


def test_load_toml_and_json(tmp_path):
    toml = tmp_path / "m.toml"
    toml.write_text("sigma = 0.0\ndrift = 1.5\ndelta = 0.25\nb = 1.0\n[[jumps]]\nrate = 1.0\nexp_rate = 1.0\n")
    js = tmp_path / "m.json"
    js.write_text(json.dumps(M1.to_dict()))
    assert load_model(toml) == M1
    assert load_model(js) == M1
    assert model_hash(load_model(toml)) == model_hash(M1)


def test_load_rejects_unknown_keys(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("sigma = 0.0\ndrift = 1.5\ndelta = 0.25\nb = 1.0\nextra = 3\n")
    with pytest.raises(ConfigError, match="extra"):
        load_model(bad)
    bad.write_text("sigma = 0.0\ndrift = 1.5\ndelta = 0.25\nb = 1.0\n[[jumps]]\nrate = 1.0\nmean = 1.0\n")
    with pytest.raises(ConfigError, match="jumps\\[0\\]"):
        load_model(bad)
    bad.write_text("sigma = = 0")
    with pytest.raises(ConfigError):
        load_model(bad)


def test_hash_depends_on_parameters():
    assert model_hash(M1) != model_hash(M1.with_(delta=0.2))
    assert len(model_hash(M1)) == 16
