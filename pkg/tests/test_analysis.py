"""Lifetimes, power-law fits, segment spectra, and perturbative growth."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlmfloquet import (
    AnalysisError,
    Censored,
    LatticeSpec,
    ModelParams,
    departure_time,
    fit_power_law,
    lifetime,
    protocol_full,
    qmm_couplings,
    quadratic_growth_coefficients,
    segment_spectrum,
    spectra_match,
)
from qlmfloquet.engine import TimeSeries
from qlmfloquet.qmm import (
    DEFECT,
    KINK,
    QmmConfig,
    build_qmm_hamiltonian,
    enumerate_qmm_basis,
    hop_matrix,
    run_qmm,
)


def series(columns):
    t = np.linspace(0.0, 3.0, 301)
    return TimeSeries(np.arange(301), t, {k: f(t) for k, f in columns.items()}, {})


def test_lifetime_default_threshold():
    ts = series({"y": np.exp})
    ts.columns["y"] = np.exp(-ts.times)
    tau = lifetime(ts, "y")
    # exp(-t) falls to exp(-0.4) of its start exactly at t = 0.4
    assert abs(tau - 0.4) < 1e-6


def test_lifetime_explicit_threshold_and_censoring():
    ts = series({"y": lambda t: np.exp(-t), "c": lambda t: np.ones_like(t)})
    assert abs(lifetime(ts, "y", threshold=np.exp(-1.0)) - 1.0) < 1e-6
    out = lifetime(ts, "c", threshold=0.5)
    assert isinstance(out, Censored)
    assert out.horizon == 3.0
    assert out.threshold == 0.5
    assert repr(out) == "Censored(horizon=3, threshold=0.5)"
    with pytest.raises(AnalysisError):
        lifetime(ts, "c", threshold=1.5)


def test_departure_time_interpolates():
    ts = series({"v": lambda t: 0.1 * t})
    assert abs(departure_time(ts, "v", 0.05) - 0.5) < 1e-9
    out = departure_time(ts, "v", 2.0)
    assert isinstance(out, Censored)
    with pytest.raises(AnalysisError):
        departure_time(ts, "v", -0.1)


def test_power_law_recovery():
    x = np.linspace(0.5, 9.0, 40)
    fit = fit_power_law(x, 2.7 * x**1.83)
    assert abs(fit.exponent - 1.83) < 1e-6
    assert abs(fit.prefactor - 2.7) < 1e-6
    assert fit.residual < 1e-10
    assert np.abs(fit.evaluate(x) - 2.7 * x**1.83).max() < 1e-6


def test_power_law_window_and_validation():
    x = np.linspace(1.0, 10.0, 30)
    y = 5.0 * x**2
    y[x > 6] = 1.0
    fit = fit_power_law(x, y, window=(1.0, 6.0))
    assert abs(fit.exponent - 2.0) < 1e-9
    with pytest.raises(AnalysisError):
        fit_power_law([1.0, 2.0], [1.0, 4.0])
    with pytest.raises(AnalysisError):
        fit_power_law([1.0, 2.0, -3.0], [1.0, 4.0, 9.0])
    with pytest.raises(AnalysisError):
        fit_power_law([1.0, 2.0, 3.0], [1.0, 4.0])


def test_segment_spectrum_small_cases():
    r2 = segment_spectrum([2], J=1.0)
    assert np.allclose(np.sort(r2.assembled), [-1.0, 1.0])
    r3 = segment_spectrum([3], J=1.0)
    assert np.allclose(np.sort(r3.assembled), [-np.sqrt(2), 0.0, np.sqrt(2)])
    with pytest.raises(AnalysisError):
        segment_spectrum([])
    with pytest.raises(AnalysisError):
        segment_spectrum([3, 0])


def test_segment_spectrum_degenerate_groups():
    rep = segment_spectrum([3, 3])
    assert len(rep.groups) == 3
    assert all(g.size == 2 for g in rep.groups)
    text = rep.describe()
    assert "degenerate x2" in text
    assert segment_spectrum([2, 4]).groups == ()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 7), min_size=1, max_size=4))
def test_segment_spectrum_symmetric_about_zero(segments):
    rep = segment_spectrum(segments)
    flipped = np.sort(-rep.assembled)
    assert np.abs(np.sort(rep.assembled) - flipped).max() < 1e-10


def test_spectra_match_orderings():
    # a defect arrangement is characterized by its multiset of segment
    # lengths, so any reordering shares the assembled spectrum
    assert spectra_match(segment_spectrum([3, 5]), segment_spectrum([5, 3]))
    assert spectra_match(segment_spectrum([2, 1, 4]), segment_spectrum([4, 2, 1]))
    assert not spectra_match(segment_spectrum([2, 4]), segment_spectrum([1, 5]))
    assert not spectra_match(segment_spectrum([2, 4]), segment_spectrum([3, 3]))
    assert not spectra_match(segment_spectrum([2]), segment_spectrum([3]))
    assert not spectra_match(segment_spectrum([3], J=2.0), segment_spectrum([3]))


def growth_inputs(n_sites, start):
    J, K = 1.0, 4.0
    t_f = 1.0 / (K * 6.2)
    segment = t_f / (8 * (2 + J / K))
    proto = protocol_full(
        LatticeSpec(4), ModelParams(J=J, K=K, h=0.5, eps1=1.0, eps2=1.0), segment
    )
    couplings = qmm_couplings(proto)
    basis = enumerate_qmm_basis(n_sites, 1, 1)
    labels = np.array([c.labels for c in basis])
    sectors = [tuple(row) for row in (labels == DEFECT).astype(int)]
    obs = (labels[:, 0] == DEFECT).astype(float)
    hk = hop_matrix(basis, KINK)
    h2 = build_qmm_hamiltonian(
        basis, J=J, lambda1=couplings["lambda1"], lambda2=couplings["lambda2"]
    )
    v2 = (h2 - J * hk) / t_f**2
    psi0 = np.zeros(len(basis))
    psi0[[c.labels for c in basis].index(QmmConfig.from_string(start).labels)] = 1.0
    return basis, J * hk, h2, v2, psi0, obs, sectors, t_f


def test_growth_prediction_matches_simulation():
    basis, q0, h2, v2, psi0, obs, sectors, t_f = growth_inputs(6, "dk....")
    pred = quadratic_growth_coefficients(q0, v2, psi0, obs, sectors)
    assert pred.c1 < 0.0
    assert pred.degenerate_dim > 0
    ts = run_qmm(h2, basis, QmmConfig.from_string("dk...."), t_f, 200_000, stride=200)
    mask = (ts.times > 1e3) & (ts.times < 6e3)
    measured = ts.column("nd_0")[0] - ts.column("nd_0")[mask]
    predicted = -pred.delta(ts.times[mask], t_f)
    rel = np.abs(measured - predicted) / np.abs(measured)
    assert rel.max() < 0.05


def test_growth_prediction_invariances():
    _, q0, _, v2, psi0, obs, sectors, _ = growth_inputs(6, "dk....")
    pred = quadratic_growth_coefficients(q0, v2, psi0, obs, sectors)
    rotated = quadratic_growth_coefficients(
        q0, v2, np.exp(0.7j) * psi0, obs, sectors
    )
    assert abs(rotated.c1 - pred.c1) < 1e-15
    assert abs(rotated.c2 - pred.c2) < 1e-15
    silent = quadratic_growth_coefficients(q0, np.zeros_like(v2), psi0, obs, sectors)
    assert silent.c1 == 0.0 and silent.c2 == 0.0
    scalar = pred.delta(10.0, 0.1)
    assert isinstance(scalar, float)


def test_growth_prediction_validation():
    basis, q0, _, v2, psi0, obs, sectors, _ = growth_inputs(6, "dk....")
    with pytest.raises(AnalysisError, match="not constant"):
        bad_obs = np.arange(len(basis), dtype=float)
        quadratic_growth_coefficients(q0, v2, psi0, bad_obs, sectors)
    with pytest.raises(AnalysisError, match="one sector"):
        smeared = np.ones(len(basis))
        quadratic_growth_coefficients(q0, v2, smeared, obs, sectors)
    with pytest.raises(AnalysisError, match="connects"):
        linker = np.ones((len(basis), len(basis)))
        quadratic_growth_coefficients(linker, v2, psi0, obs, sectors)
    with pytest.raises(AnalysisError):
        quadratic_growth_coefficients(q0, v2, psi0, obs, sectors[:-1])
    with pytest.raises(AnalysisError):
        quadratic_growth_coefficients(q0, v2, 0.0 * psi0, obs, sectors)
