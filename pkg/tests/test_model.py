import json
import math

import numpy as np
import pytest

from gmwb_hhw.model import (DEFAULT_BOX, HhwParams, ParameterBox,
                            PREDICTOR_NAMES, load_model_document,
                            params_from_vector, params_to_vector, phi,
                            residual_correlation, save_model_document,
                            short_rate)


def test_phi_at_zero_is_initial_rate(base_params):
    assert phi(0.0, base_params) == pytest.approx(base_params.r0, abs=1e-15)


def test_phi_long_run_level(base_params):
    # r0 + omegar^2 / (2 kr^2) = 0.02 + 0.015^2 / (2 * 0.15^2) = 0.025
    assert phi(1e9, base_params) == pytest.approx(0.025, abs=1e-12)


def test_phi_monotone_and_continuous(base_params):
    t = np.linspace(0.0, 40.0, 4001)
    vals = phi(t, base_params)
    assert np.all(np.diff(vals) >= -1e-15)
    assert np.max(np.abs(np.diff(vals))) < 1e-3  # no jumps on a fine grid


def test_phi_rejects_negative_time(base_params):
    with pytest.raises(ValueError):
        phi(-0.5, base_params)


def test_short_rate_values(base_params):
    assert short_rate(0.0, 0.0, base_params) == pytest.approx(0.02)
    assert short_rate(1.0, 0.0, base_params) == pytest.approx(0.035)


def test_short_rate_distribution_matches_analytic_mean(base_params, rng):
    # exact OU transition sampled to T, then mapped through the rate formula
    T, n = 10.0, 200_000
    steps = 40
    dt = T / steps
    e = math.exp(-base_params.kr * dt)
    sd = math.sqrt((1.0 - e * e) / (2.0 * base_params.kr))
    x = np.zeros(n)
    for _ in range(steps):
        x = x * e + sd * rng.standard_normal(n)
    r = short_rate(x, T, base_params)
    se = np.std(r) / math.sqrt(n)
    assert abs(np.mean(r) - phi(T, base_params)) < 3.0 * se


def test_params_validation():
    with pytest.raises(ValueError):
        HhwParams(v0=-0.01, kv=2.0, thetav=0.05, omegav=0.5, rhov=0.0,
                  r0=0.02, kr=0.15, omegar=0.015, rhor=0.0)
    with pytest.raises(ValueError):
        HhwParams(v0=0.05, kv=2.0, thetav=0.05, omegav=0.5, rhov=0.8,
                  r0=0.02, kr=0.15, omegar=0.015, rhor=0.7)


def test_residual_correlation(base_params):
    expected = math.sqrt(1.0 - 0.55 ** 2 - 0.2 ** 2)
    assert base_params.rho3 == pytest.approx(expected, rel=1e-15)
    assert residual_correlation(base_params) == base_params.rho3
    assert 0.0 < base_params.rho3 <= 1.0


def test_box_contains_and_normalize():
    box = DEFAULT_BOX
    mid = 0.5 * (box.lo + box.hi)
    assert box.contains(mid).all()
    assert not box.contains(box.hi + 0.1).any()
    un = box.normalize(np.vstack([box.lo, box.hi, mid]))
    assert np.allclose(un[0], 0.0) and np.allclose(un[1], 1.0)
    assert np.allclose(un[2], 0.5)


def test_box_round_trip(tmp_path):
    path = tmp_path / "box.json"
    DEFAULT_BOX.save(path)
    loaded = ParameterBox.load(path)
    assert np.array_equal(loaded.lo, DEFAULT_BOX.lo)
    assert np.array_equal(loaded.hi, DEFAULT_BOX.hi)


def test_box_validation():
    with pytest.raises(ValueError):
        ParameterBox(DEFAULT_BOX.hi, DEFAULT_BOX.lo)  # lo > hi
    with pytest.raises(ValueError):
        ParameterBox.from_dict({"v0": {"lo": 0.01, "hi": 0.1}})  # missing fields


def test_every_box_point_is_a_valid_parameterization(rng):
    u = rng.random((200, DEFAULT_BOX.dim))
    rows = DEFAULT_BOX.lo + u * (DEFAULT_BOX.hi - DEFAULT_BOX.lo)
    for row in rows:
        params_from_vector(row)  # must not raise


def test_model_document_round_trip(tmp_path, base_params):
    path = tmp_path / "params.json"
    save_model_document(path, base_params, alpha=0.035, kappa=0.1)
    doc = json.loads(path.read_text())
    assert set(doc) == set(PREDICTOR_NAMES)
    model, alpha, kappa = load_model_document(path)
    assert model == base_params
    assert (alpha, kappa) == (0.035, 0.1)
    vec = params_to_vector(model, alpha, kappa)
    model2, a2, k2 = params_from_vector(vec)
    assert model2 == model and (a2, k2) == (alpha, kappa)
