"""Tests for multifractal detrended fluctuation analysis."""

from datetime import date

import numpy as np
import pytest

from src.mfdfa import (
    FluctuationSurface,
    GeneralizedHurst,
    MfdfaConfig,
    MfdfaError,
    MultifractalSpectrum,
    analyze,
    default_q_grid,
    fluctuation_function,
    fluctuation_surface,
    generalized_hurst,
    legendre_spectrum,
    profile,
    segment_variances,
    small_scale_correction,
    spectrum_summary,
)
from src.surrogate import shuffle
from src.synthgen import (
    CascadeSpec,
    analytic_cascade_hurst,
    binomial_cascade,
    fractional_noise,
    white_noise,
)
from src.timeseries import TimeSeries


CASCADE_SCALES = [2**k for k in range(6, 13)]


def _series(values):
    return TimeSeries(station_id="mf", start_date=date(2000, 1, 1), values=values)


def _cascade_alpha(a, q, dq=1e-5):
    """Analytic alpha(q) = d tau / dq of the binomial cascade."""
    tau = lambda x: x * analytic_cascade_hurst(a, x) - 1.0  # noqa: E731
    return (tau(q + dq) - tau(q - dq)) / (2 * dq)


def _window_oracle(window, m):
    t = np.arange(1, window.size + 1)
    fitted = np.polyval(np.polyfit(t, window, m), t)
    return np.mean((window - fitted) ** 2)


def test_default_q_grid():
    """Test the default grid spans [-5, 5] in quarter steps without 0."""
    q = default_q_grid()

    assert q.size == 40
    assert q[0] == -5.0 and q[-1] == 5.0
    assert not np.any(q == 0)


def test_config_rejects_zero_in_q_grid():
    """Test q = 0 is only reachable through include_q0."""
    with pytest.raises(MfdfaError):
        MfdfaConfig(q_grid=[-1.0, 0.0, 1.0, 2.0])


def test_config_needs_four_scales():
    """Test at least four distinct scales are required."""
    with pytest.raises(MfdfaError):
        MfdfaConfig(scales=[16, 32, 64])


def test_config_from_dict_q_range():
    """Test a q range section builds a grid without 0."""
    cfg = MfdfaConfig.from_dict({"q_min": -2, "q_max": 2, "q_step": 1, "scales": [8, 16, 32, 64]})

    np.testing.assert_array_equal(cfg.q_grid, [-2.0, -1.0, 1.0, 2.0])
    assert cfg.to_dict()["scales"] == [8, 16, 32, 64]


def test_profile_constant_series():
    """Test a constant series has a zero profile."""
    np.testing.assert_array_equal(profile(np.full(10, 3.0)), np.zeros(10))


def test_profile_alternating_series():
    """Test the profile of an alternating series."""
    np.testing.assert_array_equal(profile([1.0, -1.0, 1.0, -1.0]), [1.0, 0.0, 1.0, 0.0])


def test_profile_matches_running_sum(rng):
    """Test against an explicit running sum."""
    x = rng.standard_normal(1000)
    mean = x.mean()
    expected = []
    total = 0.0
    for value in x:
        total += value - mean
        expected.append(total)

    np.testing.assert_allclose(profile(x), expected, atol=1e-12)


def test_segment_variances_quadratic_profile():
    """Test degree-2 detrending annihilates a quadratic profile."""
    t = np.arange(200, dtype=float)
    Y = 0.005 * t**2 - 0.03 * t + 0.07

    assert np.all(segment_variances(Y, 20, 2) < 1e-18)


def test_segment_variances_indexing():
    """Test N = 10, s = 4 gives forward windows 1-8 and backward windows 3-10."""
    Y = np.array([0.0, 1.0, 5.0, 2.0, 8.0, 3.0, 9.0, 4.0, 7.0, 6.0])

    variances = segment_variances(Y, 4, 1)

    assert variances.size == 4
    expected = [_window_oracle(Y[a:b], 1) for a, b in ((0, 4), (4, 8), (6, 10), (2, 6))]
    np.testing.assert_allclose(variances, expected, atol=1e-12)


def test_segment_variances_match_window_oracle(rng):
    """Test each variance against a per-window polynomial fit."""
    Y = profile(rng.standard_normal(500))
    s, m = 16, 2
    n_seg = Y.size // s

    variances = segment_variances(Y, s, m)

    forward = [_window_oracle(Y[i * s : (i + 1) * s], m) for i in range(n_seg)]
    backward = [
        _window_oracle(Y[Y.size - (i + 1) * s : Y.size - i * s], m) for i in range(n_seg)
    ]
    np.testing.assert_allclose(variances, forward + backward, rtol=1e-10, atol=1e-12)


def test_segment_variances_reversal_invariance(rng):
    """Test the reversed profile yields the same multiset of variances."""
    Y = profile(rng.standard_normal(1000))

    original = np.sort(segment_variances(Y, 32, 2))
    reversed_ = np.sort(segment_variances(Y[::-1], 32, 2))

    np.testing.assert_allclose(original, reversed_, rtol=1e-9)


def test_segment_variances_scale_too_large():
    """Test a scale leaving fewer than two segments is rejected."""
    with pytest.raises(MfdfaError) as exc_info:
        segment_variances(np.arange(30.0), 16, 2)

    assert exc_info.value.scale == 16


def test_fluctuation_function_q2_is_dfa(rng):
    """Test F_2 is the root mean variance."""
    variances = [rng.uniform(0.5, 2.0, 20), rng.uniform(0.5, 2.0, 10)]

    surface = fluctuation_function(variances, [-1.0, 1.0, 2.0], scales=np.array([8, 16]))

    for j, var in enumerate(variances):
        assert surface.row(2.0)[j] == pytest.approx(np.sqrt(var.mean()), rel=1e-12)
    np.testing.assert_array_equal(surface.n_segments_per_scale, [20, 10])


def test_fluctuation_function_matches_direct_formula(rng):
    """Test every q against the direct power-mean formula."""
    variances = [rng.uniform(0.1, 3.0, 30)]
    q_grid = np.array([-4.0, -1.5, 0.5, 3.0])

    surface = fluctuation_function(variances, q_grid)

    for i, q in enumerate(q_grid):
        direct = np.mean(variances[0] ** (q / 2)) ** (1 / q)
        assert surface.values[i, 0] == pytest.approx(direct, rel=1e-10)


def test_fluctuation_function_equal_variances():
    """Test equal variances give F_q = sqrt(v) for every q."""
    surface = fluctuation_function([np.full(2, 4.0)], [-3.0, -1.0, 1.0, 3.0])

    np.testing.assert_allclose(surface.values[:, 0], 2.0)


def test_fluctuation_function_q0_log_average(rng):
    """Test the q = 0 row uses logarithmic averaging."""
    variances = [rng.uniform(0.1, 3.0, 16)]

    surface = fluctuation_function(variances, [-1.0, 1.0], include_q0=True)

    np.testing.assert_array_equal(surface.q_grid, [-1.0, 0.0, 1.0])
    assert surface.row(0.0)[0] == pytest.approx(np.exp(0.5 * np.mean(np.log(variances[0]))))


def test_fluctuation_function_all_zero_variances():
    """Test a scale with only vanishing variances is rejected."""
    with pytest.raises(MfdfaError) as exc_info:
        fluctuation_function([np.zeros(4)], [1.0, 2.0], scales=np.array([8]))

    assert exc_info.value.scale == 8


def test_generalized_hurst_exact_power_law():
    """Test slopes of an exact power law."""
    scales = np.array([16, 32, 64, 128, 256])
    q = np.array([-2.0, -1.0, 1.0, 2.0])
    values = np.tile(3.0 * scales**0.7, (q.size, 1))
    surface = FluctuationSurface(
        scales=scales, q_grid=q, values=values, n_segments_per_scale=np.ones(5, dtype=int)
    )

    gh = generalized_hurst(surface)

    np.testing.assert_allclose(gh.h, 0.7, atol=1e-12)
    np.testing.assert_allclose(gh.stderr, 0.0, atol=1e-10)


def test_legendre_spectrum_monofractal():
    """Test constant h gives alpha = H and f = 1."""
    q = default_q_grid()
    gh = GeneralizedHurst(
        q_grid=q, h=np.full(q.size, 0.7), stderr=np.zeros(q.size), r2=np.ones(q.size)
    )

    spec = legendre_spectrum(gh)

    np.testing.assert_allclose(spec.tau, q * 0.7 - 1.0)
    np.testing.assert_allclose(spec.alpha, 0.7, atol=1e-12)
    np.testing.assert_allclose(spec.f_alpha, 1.0, atol=1e-12)
    assert spec.alpha.size == q.size - 2


def test_spectrum_summary_symmetric_parabola():
    """Test width and asymmetry of a symmetric parabolic spectrum."""
    alpha = np.linspace(0.45, 0.95, 41)
    spec = MultifractalSpectrum(
        q_grid=np.linspace(-5, 5, 43),
        tau=np.zeros(43),
        alpha=alpha,
        f_alpha=1.0 - ((alpha - 0.7) / 0.3) ** 2,
    )
    gh = GeneralizedHurst(
        q_grid=np.array([1.0, 2.0, 3.0]),
        h=np.array([0.8, 0.7, 0.6]),
        stderr=np.array([0.01, 0.02, 0.03]),
        r2=np.ones(3),
    )

    summary = spectrum_summary(spec, gh)

    assert summary.W == pytest.approx(0.6, abs=0.01)
    assert summary.A == pytest.approx(1.0, abs=0.02)
    assert summary.alpha0 == pytest.approx(0.7, abs=1e-6)
    assert (summary.H, summary.H_stderr) == (0.7, 0.02)
    assert summary.delta_h == pytest.approx(0.2)


def test_spectrum_summary_flat_spectrum():
    """Test a spectrum without zero crossings is rejected."""
    alpha = np.linspace(0.4, 0.6, 20)
    spec = MultifractalSpectrum(
        q_grid=np.linspace(-5, 5, 22), tau=np.zeros(22), alpha=alpha, f_alpha=np.ones(20)
    )
    gh = GeneralizedHurst(
        q_grid=np.array([1.0, 2.0]), h=np.full(2, 0.5), stderr=np.zeros(2), r2=np.ones(2)
    )

    with pytest.raises(MfdfaError, match="spectrum too flat"):
        spectrum_summary(spec, gh)


def test_analyze_series_too_short(small_mfdfa_config):
    """Test a series shorter than twice the largest scale is rejected."""
    with pytest.raises(MfdfaError):
        analyze(_series(np.random.default_rng(0).standard_normal(1000)), small_mfdfa_config)


def test_analyze_cascade_matches_analytic_exponents():
    """Test MFDFA of the binomial cascade against its closed-form h(q).

    Scales below 64 are left out: detrending distorts F_q(s) of the deterministic cascade
    there and shifts every h_q by about 0.1 with quadratic detrending.
    """
    ts = binomial_cascade(CascadeSpec(levels=16, a=0.75))
    cfg = MfdfaConfig(scales=CASCADE_SCALES, detrend_degree=1)

    result = analyze(ts, cfg)

    for q, h in zip(result.hurst.q_grid, result.hurst.h):
        assert h == pytest.approx(analytic_cascade_hurst(0.75, q), abs=0.1)
    alpha_range = _cascade_alpha(0.75, -5.0) - _cascade_alpha(0.75, 5.0)
    assert result.summary.W == pytest.approx(alpha_range, abs=0.15)
    # The binomial spectrum is symmetric in theory
    assert result.summary.A == pytest.approx(1.0, abs=0.3)
    assert 0.9 <= result.spectrum.f_alpha.max() <= 1.1


def test_analyze_white_noise():
    """Test uncorrelated noise gives H near 0.5 and a narrow spectrum."""
    result = analyze(white_noise(2**16, seed=7), MfdfaConfig())

    assert 0.45 <= result.summary.H <= 0.55
    assert result.summary.W < 0.5
    assert 0.9 <= result.spectrum.f_alpha.max() <= 1.1


def test_analyze_shuffled_cascade_loses_persistence():
    """Test shuffling the cascade brings H back to 0.5."""
    ts = binomial_cascade(CascadeSpec(levels=16, a=0.75))

    result = analyze(ts.with_values(shuffle(ts.values, 99)), MfdfaConfig())

    assert 0.45 <= result.summary.H <= 0.55


def test_analyze_reversal_nearly_invariant(rng):
    """Test reversing the series leaves the fluctuation surface nearly unchanged.

    The reversed profile is the original one shifted by a sample, so segments differ in
    one point: positive q stays within 3%, negative q (driven by the few smallest
    variances) within 15%.
    """
    x = np.cumsum(rng.standard_normal(4096)) * 0.01 + rng.standard_normal(4096)
    cfg = MfdfaConfig(scales=[16, 32, 64, 128, 256, 512])

    forward = fluctuation_surface(x, cfg)
    backward = fluctuation_surface(x[::-1], cfg)

    positive = forward.q_grid > 0
    np.testing.assert_allclose(backward.values[positive], forward.values[positive], rtol=0.03)
    np.testing.assert_allclose(backward.values, forward.values, rtol=0.15)
    h_forward = analyze(_series(x), cfg).summary.H
    assert analyze(_series(x[::-1]), cfg).summary.H == pytest.approx(h_forward, rel=0.02)


def test_analyze_include_q0():
    """Test q = 0 is reported but kept out of the spectrum."""
    cfg = MfdfaConfig(scales=[16, 32, 64, 128, 256], include_q0=True)

    result = analyze(white_noise(4096, seed=3), cfg)

    assert 0.0 in result.hurst.q_grid
    assert 0.0 not in result.spectrum.q_grid
    h0, _ = result.hurst.at(0.0)
    assert 0.3 < h0 < 0.7


def test_analyze_result_unpacks():
    """Test the result unpacks into its four parts."""
    surface, hurst, spectrum, summary = analyze(
        white_noise(4096, seed=5), MfdfaConfig(scales=[16, 32, 64, 128, 256])
    )

    assert surface.values.shape == (hurst.q_grid.size, 5)
    assert spectrum.tau.size == hurst.q_grid.size
    assert summary.fit_coeffs.size == 5


def _spectrum(alpha, f_alpha):
    alpha = np.asarray(alpha, dtype=float)
    n = alpha.size + 2
    return MultifractalSpectrum(
        q_grid=np.linspace(-5, 5, n), tau=np.zeros(n), alpha=alpha, f_alpha=f_alpha
    )


def _hurst_at_two(h=0.5):
    return GeneralizedHurst(
        q_grid=np.array([1.0, 2.0, 3.0]), h=np.full(3, h), stderr=np.zeros(3), r2=np.ones(3)
    )


def test_spectrum_summary_roots_outside_data_range():
    """Test a narrow spectrum arc gets its width from roots far beyond the data."""
    alpha = np.linspace(0.49, 0.63, 38)
    f_alpha = 1.0 - ((alpha - 0.56) / 0.15) ** 2

    summary = spectrum_summary(_spectrum(alpha, f_alpha), _hurst_at_two())

    assert summary.alpha1 == pytest.approx(0.41, abs=1e-6)
    assert summary.alpha2 == pytest.approx(0.71, abs=1e-6)
    assert summary.W == pytest.approx(0.3, abs=1e-6)
    assert summary.A == pytest.approx(1.0, abs=1e-4)


def test_spectrum_summary_parabola_when_quartic_turns_up():
    """Test a quartic without real roots falls back to the least-squares parabola."""
    alpha = np.linspace(0.38, 0.62, 41)
    u = alpha - 0.5
    f_alpha = 1.0 - 10.0 * u**2 + 200.0 * u**4
    assert np.all(np.poly1d(np.polyfit(alpha, f_alpha, 4))(np.linspace(-2, 3, 5001)) > 0)

    summary = spectrum_summary(_spectrum(alpha, f_alpha), _hurst_at_two())

    parabola_roots = np.sort(np.roots(np.polyfit(alpha, f_alpha, 2)).real)
    assert summary.alpha0 == pytest.approx(0.5, abs=1e-6)
    np.testing.assert_allclose([summary.alpha1, summary.alpha2], parabola_roots, atol=1e-9)
    assert summary.W == pytest.approx(0.73, abs=0.02)
    assert summary.A == pytest.approx(1.0, abs=1e-3)


def test_spectrum_summary_rejects_remote_roots():
    """Test roots farther than the allowed distance from alpha0 are not accepted."""
    alpha = np.linspace(0.4, 0.6, 20)
    f_alpha = 1.0 - 1e-6 * (alpha - 0.5) ** 2

    with pytest.raises(MfdfaError, match="spectrum too flat"):
        spectrum_summary(_spectrum(alpha, f_alpha), _hurst_at_two())


@pytest.mark.parametrize("seed", range(5))
def test_analyze_white_noise_full_length_default_config(seed):
    """Test 2**16 samples of white noise give a narrow but defined spectrum."""
    summary = analyze(white_noise(2**16, seed=seed), MfdfaConfig()).summary

    assert 0.45 <= summary.H <= 0.55
    assert summary.alpha1 < summary.alpha0 < summary.alpha2
    assert 0.0 < summary.W < 0.5
    assert np.isfinite(summary.A) and summary.A > 0


@pytest.mark.parametrize("seed", range(3))
def test_analyze_persistent_noise_full_length(seed):
    """Test fGn with H = 0.8 at 2**16 samples on the default and the dyadic scales."""
    ts = fractional_noise(0.8, 2**16, seed=seed)

    for cfg in (MfdfaConfig(), MfdfaConfig(scales=[2**k for k in range(4, 13)])):
        summary = analyze(ts, cfg).summary
        assert summary.H == pytest.approx(0.8, abs=0.06)
        assert 0.0 < summary.W < 0.8


def test_analyze_scale_invariance():
    """Test multiplying the series by a constant leaves h_q, W and A unchanged."""
    x = fractional_noise(0.7, 2**14, seed=11).values
    cfg = MfdfaConfig(scales=[16, 32, 64, 128, 256, 512, 1024])

    base = analyze(_series(x), cfg)
    scaled = analyze(_series(37.5 * x), cfg)

    np.testing.assert_allclose(scaled.hurst.h, base.hurst.h, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(scaled.surface.values, 37.5 * base.surface.values, rtol=1e-9)
    assert scaled.summary.W == pytest.approx(base.summary.W, rel=1e-8)
    assert scaled.summary.A == pytest.approx(base.summary.A, rel=1e-8)


@pytest.mark.parametrize(
    "ts",
    [white_noise(2**16, seed=21), fractional_noise(0.8, 2**16, seed=22)],
    ids=["white", "fgn"],
)
def test_fluctuation_grows_with_scale(ts):
    """Test F_q(s) does not decrease from one scale to the next, up to 2% noise."""
    cfg = MfdfaConfig(scales=[2**k for k in range(4, 11)])

    surface = fluctuation_surface(ts.values, cfg)

    assert np.all(surface.values[:, 1:] >= 0.98 * surface.values[:, :-1])


def test_cascade_hurst_non_increasing_in_q():
    """Test the measured h_q of the cascade decreases along the q grid."""
    ts = binomial_cascade(CascadeSpec(levels=16, a=0.75))

    h = analyze(ts, MfdfaConfig(scales=CASCADE_SCALES, detrend_degree=1)).hurst.h

    assert np.all(np.diff(h) <= 1e-3)
    assert h[0] - h[-1] > 0.5


def test_fluctuation_function_small_q_approaches_log_average():
    """Test F_q at q = +-0.01 agrees with the q = 0 logarithmic average within 0.1%."""
    Y = profile(white_noise(2**14, seed=31).values)
    scales = np.array([16, 32, 64, 128, 256])
    variances = [segment_variances(Y, int(s), 2) for s in scales]

    surface = fluctuation_function(variances, [-0.01, 0.01], scales=scales, include_q0=True)

    for q in (-0.01, 0.01):
        np.testing.assert_allclose(surface.row(q), surface.row(0.0), rtol=1e-3)


def test_small_scale_correction_unity_at_largest_scale():
    """Test the correction factors are 1 at the largest scale and positive elsewhere."""
    cfg = MfdfaConfig(scales=[8, 16, 32, 64, 128], detrend_degree=3, correction_shuffles=3)

    factors = small_scale_correction(white_noise(4096, seed=41).values, cfg)

    assert factors.shape == (cfg.q_grid.size, 5)
    np.testing.assert_allclose(factors[:, -1], 1.0)
    assert np.all(factors > 0)


def test_small_scale_correction_restores_white_noise_exponent():
    """Test the corrected h(2) of white noise sits at 1/2 with strong detrending."""
    x = white_noise(2**16, seed=43).values
    scales = [8, 16, 32, 64, 128, 256, 512]
    raw_cfg = MfdfaConfig(scales=scales, detrend_degree=3)
    corrected_cfg = MfdfaConfig(scales=scales, detrend_degree=3, correction_shuffles=8)

    raw_h, _ = generalized_hurst(fluctuation_surface(x, raw_cfg)).at(2.0)
    corrected_h, _ = generalized_hurst(fluctuation_surface(x, corrected_cfg)).at(2.0)

    assert corrected_h == pytest.approx(0.5, abs=0.03)
    assert abs(corrected_h - 0.5) <= abs(raw_h - 0.5) + 0.005


def test_config_correction_shuffles_round_trip():
    """Test the correction setting is read, validated and recorded."""
    cfg = MfdfaConfig.from_dict({"correction_shuffles": 4, "scales": [8, 16, 32, 64]})

    assert cfg.to_dict()["correction_shuffles"] == 4
    with pytest.raises(MfdfaError):
        MfdfaConfig(correction_shuffles=-1)


@pytest.mark.slow
def test_cascade_wider_than_persistent_noise():
    """Test the cascade spectrum is wider than that of fGn in at least 18 of 20 trials."""
    cfg = MfdfaConfig(scales=CASCADE_SCALES, detrend_degree=1)
    cascade_width = analyze(binomial_cascade(CascadeSpec(levels=16, a=0.75)), cfg).summary.W

    wider = 0
    for seed in range(20):
        try:
            noise_width = analyze(fractional_noise(0.8, 2**16, seed=100 + seed), cfg).summary.W
        except MfdfaError:
            continue
        wider += cascade_width > noise_width

    assert wider >= 18
