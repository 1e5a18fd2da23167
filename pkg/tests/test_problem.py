import json

import numpy as np
import pytest

from prandtl_expander.errors import SpecRejected
from prandtl_expander.problem import (
    Profile,
    QuinticCutoff,
    benchmark_spec,
    eval_chi,
    load_spec,
    save_spec,
    spec_from_config,
    trivial_chain_spec,
    validate_spec,
)
from dataclasses import replace


def test_compatible_zero_data_passes():
    # u_b = u_e = 1, ubar0 = 0, side data = 0: every check passes
    spec = trivial_chain_spec()
    report = validate_spec(spec)
    assert report.passed
    assert len(report.deferred) == 2


def test_benchmark_spec_passes():
    assert validate_spec(benchmark_spec()).passed


def test_gamma_out_of_range_rejected():
    spec = replace(benchmark_spec(), gamma=0.25)
    with pytest.raises(SpecRejected) as err:
        validate_spec(spec)
    assert "gamma" in str(err.value)


def test_corner_compatibility_rejected():
    # Vb0(1) = 0.1 violates the side-corner condition
    spec = replace(benchmark_spec(), Vb0=Profile("poly", {"coeffs": [0.0, 0.0, 0.0, 0.1]}))
    with pytest.raises(SpecRejected) as err:
        validate_spec(spec)
    assert "Vb0" in str(err.value)


def test_wall_mismatch_rejected():
    spec = replace(benchmark_spec(), ubar0=Profile("exp_decay", {"amplitude": 0.9, "rate": 1.0}))
    with pytest.raises(SpecRejected) as err:
        validate_spec(spec)
    assert "wall" in str(err.value)


def test_validation_is_pure_and_idempotent():
    spec = benchmark_spec()
    a = validate_spec(spec)
    b = validate_spec(spec)
    assert [c.__dict__ for c in a.checks] == [c.__dict__ for c in b.checks]


def test_chi_endpoints():
    chi, d1, d2, d3 = eval_chi(np.array([0.0, 1.0]))
    assert chi[0] == 1.0 and chi[1] == 0.0
    assert d1[0] == 0.0 and d1[1] == 0.0


def test_chi_exact_zero_beyond_support():
    s = np.array([1.0, 1.2, 3.0, 50.0])
    for out in eval_chi(s):
        assert np.all(out == 0.0)


def test_chi_monotone_nonincreasing():
    s = np.linspace(0, 1.5, 400)
    chi = eval_chi(s)[0]
    assert np.all(np.diff(chi) <= 1e-15)


def test_chi_midpoint_against_hermite_system():
    # oracle: solve the 6x6 system for the quintic with value/slope/curvature
    # constraints at both ends, then evaluate at 0.5
    a = np.zeros((6, 6))
    b = np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    powers = np.arange(6)
    a[0] = [1, 0, 0, 0, 0, 0]                      # chi(0) = 1
    a[1] = np.ones(6)                              # chi(1) = 0
    a[2] = [0, 1, 0, 0, 0, 0]                      # chi'(0) = 0
    a[3] = powers                                  # chi'(1) = 0
    a[4] = [0, 0, 2, 0, 0, 0]                      # chi''(0) = 0
    a[5] = powers * (powers - 1)                   # chi''(1) = 0
    coeffs = np.linalg.solve(a, b)
    expected = np.polynomial.polynomial.polyval(0.5, coeffs)
    got = eval_chi(np.array([0.5]))[0][0]
    assert abs(got - expected) < 1e-13


@pytest.mark.parametrize("kind,params", [
    ("constant", {"value": 1.3}),
    ("exp_decay", {"amplitude": -1.5, "rate": 0.7, "offset": 0.2}),
    ("poly", {"coeffs": [1.0, -0.3, 0.5, 0.1]}),
    ("sine", {"amplitude": 0.4, "frequency": np.pi, "phase": 0.3, "offset": 1.0}),
])
def test_profile_derivatives_match_finite_differences(kind, params):
    prof = Profile(kind, params)
    t = np.linspace(0.1, 0.9, 7)
    h = 1e-5
    for deriv in (1, 2, 3):
        lo = prof(t - h, deriv - 1)
        hi = prof(t + h, deriv - 1)
        fd = (hi - lo) / (2 * h)
        assert np.max(np.abs(prof(t, deriv) - fd)) < 1e-5 * max(1.0, np.max(np.abs(fd)))


def test_table_profile_interpolates_and_differentiates():
    x = np.linspace(0, 1, 60)
    prof = Profile("table", {"x": x.tolist(), "y": np.sin(2 * x).tolist()})
    t = np.linspace(0.05, 0.95, 11)
    assert np.max(np.abs(prof(t) - np.sin(2 * t))) < 1e-6
    assert np.max(np.abs(prof(t, 1) - 2 * np.cos(2 * t))) < 1e-4
    assert prof.tol == 1e-6  # ingestion tolerance looser than closed forms


def test_config_roundtrip(tmp_path):
    spec = benchmark_spec()
    path = tmp_path / "spec.json"
    save_spec(spec, path)
    spec2 = load_spec(path)
    assert spec2.epsilon_list == spec.epsilon_list
    assert spec2.u_b == spec.u_b
    z = np.linspace(0, 1, 33)
    assert np.allclose(spec2.u_e0(z), spec.u_e0(z))
    assert validate_spec(spec2).passed


def test_unknown_keys_rejected(tmp_path):
    cfg = benchmark_spec().to_config()
    cfg["mystery"] = 1
    with pytest.raises(SpecRejected):
        spec_from_config(cfg)
    cfg = benchmark_spec().to_config()
    cfg["grids"]["nz_extra"] = 5
    with pytest.raises(SpecRejected):
        spec_from_config(cfg)
    cfg = benchmark_spec().to_config()
    cfg["profiles"]["stranger"] = {"kind": "constant", "params": {"value": 0}}
    with pytest.raises(SpecRejected):
        spec_from_config(cfg)


def test_missing_profile_rejected():
    cfg = benchmark_spec().to_config()
    del cfg["profiles"]["Vb0"]
    with pytest.raises(SpecRejected):
        spec_from_config(cfg)


def test_scaled_ordinate_stays_in_range():
    # sqrt(eps) * y never exceeds 1 on the strip grids
    from prandtl_expander.prandtl0 import strip_grid

    spec = benchmark_spec()
    for eps in spec.epsilon_list:
        g = strip_grid(spec, eps)
        assert np.sqrt(eps) * g.y[-1] <= 1.0 + 1e-12
