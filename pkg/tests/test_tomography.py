import math

import numpy as np
import pytest

from mopair.errors import (
    DegenerateNormalizationError,
    InvalidDataError,
    SingularCalibrationError,
)
from mopair.sampling import NumberDistribution, sample_heterodyne
from mopair.tomography import (
    CorrelationResult,
    MomentsMatrix,
    SampleSet,
    bootstrap,
    calibrate_gain,
    chunked_inversion,
    forward_moments,
    g2_ac,
    g2_cc,
    g2_cc_click,
    herald_budget,
    invert_moments,
    noise_moments,
    noise_occupancy_from_reference,
    raw_moments,
)


# --------------------------------------------------------------- raw moments


def test_raw_moments_single_sample():
    m = raw_moments(np.array([1.0 + 0.0j]))
    assert m[1, 1] == pytest.approx(1.0)
    assert m[0, 0] == pytest.approx(1.0)


def test_raw_moments_plus_minus():
    m = raw_moments(np.array([1.0 + 0j, -1.0 + 0j]))
    assert m[0, 1] == pytest.approx(0.0)
    assert m[1, 1] == pytest.approx(1.0)
    m.validate()


def test_raw_moments_empty():
    with pytest.raises(InvalidDataError):
        raw_moments(np.array([], dtype=complex))


def test_raw_moments_thermal_fourth_order(rng):
    # thermal emulation: S22 -> 2 n_tot^2 within 3 sigma
    n = 10**6
    nbar, nadd = 0.4, 1.1
    ss = sample_heterodyne(NumberDistribution.thermal(nbar), nadd, 1.0, n, rng)
    m = raw_moments(ss)
    n_tot = nbar + 1 + nadd
    assert m[2, 2].real == pytest.approx(2 * n_tot**2, abs=3 * m.stderr[2, 2])


# ------------------------------------------------------------ noise moments


def test_noise_moments_values():
    H = noise_moments(0.0)
    assert H[1, 1] == pytest.approx(1.0)
    assert H[2, 2] == pytest.approx(2.0)
    H = noise_moments(2.5)
    assert H[1, 1] == pytest.approx(3.5)
    assert H[2, 2] == pytest.approx(24.5)
    assert H[0, 1] == 0.0


def test_noise_moments_match_emulated_reference(rng):
    n = 10**6
    ss = sample_heterodyne(NumberDistribution.fock(0), 2.5, 7.0, n, rng,
                           kind="noise_only")
    m = raw_moments(ss)
    H = noise_moments(2.5)
    for k in (1, 2):
        emp = m[k, k].real / 7.0**k
        assert emp == pytest.approx(H[k, k].real, abs=3 * m.stderr[k, k] / 7.0**k)
    est = noise_occupancy_from_reference(ss)
    assert est == pytest.approx(2.5, abs=0.01)


# ---------------------------------------------------------------- inversion


def test_inversion_round_trip_exact():
    C = MomentsMatrix(values=np.array(
        [[1.0, 0.1 + 0.05j, 0.02 - 0.01j],
         [0.1 - 0.05j, 0.4, 0.03 + 0.02j],
         [0.02 + 0.01j, 0.03 - 0.02j, 0.5]]))
    H = noise_moments(2.5)
    for gain in (1.0, 55.0, 2.0e10):
        S = forward_moments(C, gain, H)
        back = invert_moments(S, gain, H)
        assert np.abs(back.values - C.values).max() < 1e-12 * max(1.0, gain**0)


def test_inversion_vacuum(rng):
    n = 10**6
    G = 123.0
    ss = sample_heterodyne(NumberDistribution.fock(0), 2.5, G, n, rng)
    C = invert_moments(raw_moments(ss), G, noise_moments(2.5))
    assert C[1, 1].real == pytest.approx(0.0, abs=3 * C.stderr[1, 1])


def test_inversion_coherent_g2(rng):
    # phase-symmetric coherent emulation (Poisson number mixture): g2 = 1
    n = 2 * 10**6
    G = 10.0
    ss = sample_heterodyne(NumberDistribution.poisson(0.8, 24), 2.5, G, n, rng)
    C = invert_moments(raw_moments(ss), G, noise_moments(2.5))
    g2 = g2_cc(C).value
    assert g2 == pytest.approx(1.0, abs=0.1)


def test_gain_invariance(rng):
    # the same physical record at G and 10G inverts to identical moments
    n = 200_000
    base = sample_heterodyne(NumberDistribution.thermal(0.5), 2.5, 1.0, n, rng)
    H = noise_moments(2.5)
    C1 = invert_moments(raw_moments(base), 1.0, H)
    scaled = SampleSet(base.samples * math.sqrt(10.0), base.kind, 10.0)
    C2 = invert_moments(raw_moments(scaled), 10.0, H)
    assert np.abs(C1.values - C2.values).max() < 1e-9 * np.abs(C1.values).max()
    g1 = g2_cc(C1).value
    g2v = g2_cc(C2).value
    assert g1 == pytest.approx(g2v, rel=1e-9)


def test_unphysical_inputs_flagged_not_raised():
    rng = np.random.default_rng(5)
    n = 50_000
    ss = sample_heterodyne(NumberDistribution.fock(0), 0.5, 1.0, n, rng)
    # inverting with an overestimated noise floor drives C11 negative
    C = invert_moments(raw_moments(ss), 1.0, noise_moments(1.5))
    assert C[1, 1].real < 0
    assert C.warnings


# ---------------------------------------------------------------------- g2s


def test_g2_functions():
    C = MomentsMatrix(values=np.diag([1.0, 0.3, 2 * 0.09]).astype(complex))
    assert g2_cc(C).value == pytest.approx(2.0)
    assert g2_cc_click(C).value == pytest.approx(2.0)
    C_unc = MomentsMatrix(values=np.diag([1.0, 0.1, 0.02]).astype(complex))
    assert g2_ac(C, C_unc).value == pytest.approx(3.0)
    with pytest.raises(DegenerateNormalizationError):
        g2_cc(MomentsMatrix(values=np.diag([1.0, 0.0, 0.0]).astype(complex)))


def test_correlation_result_invariant():
    with pytest.raises(InvalidDataError):
        CorrelationResult(value=1.0, ci_low=1.1, ci_high=1.2)


# ------------------------------------------------------------------ chunking


def test_chunked_single_equals_plain(rng):
    n = 100_000
    G = 4.0
    cond = sample_heterodyne(NumberDistribution.thermal(0.4), 2.5, G, n, rng,
                             kind="conditional")
    unc = sample_heterodyne(NumberDistribution.thermal(0.2), 2.5, G, n, rng,
                            kind="unconditional")
    noise = sample_heterodyne(NumberDistribution.fock(0), 2.5, G, n, rng,
                              kind="noise_only")
    C_cond, C_unc = chunked_inversion([(cond, unc, noise)])
    n_th = noise_occupancy_from_reference(noise)
    direct = invert_moments(raw_moments(cond), G, noise_moments(n_th))
    assert np.abs(C_cond.values - direct.values).max() < 1e-12


def test_chunked_gain_drift_unbiased(rng):
    # two chunks at different gains: per-chunk inversion stays calibrated
    # while pooling under one gain is biased
    n = 400_000
    nbar = 0.5
    chunks = []
    for gain in (2.0, 8.0):
        cond = sample_heterodyne(NumberDistribution.thermal(nbar), 2.5, gain, n,
                                 rng, kind="conditional")
        unc = sample_heterodyne(NumberDistribution.thermal(nbar), 2.5, gain, n,
                                rng, kind="unconditional")
        noise = sample_heterodyne(NumberDistribution.fock(0), 2.5, gain, n, rng,
                                  kind="noise_only")
        chunks.append((cond, unc, noise))
    C_cond, _ = chunked_inversion(chunks)
    assert C_cond[1, 1].real == pytest.approx(nbar, abs=0.01)
    pooled = np.concatenate([c[0].samples for c in chunks])
    C_pooled = invert_moments(raw_moments(pooled), 2.0, noise_moments(2.5))
    assert abs(C_pooled[1, 1].real - nbar) > 10 * abs(C_cond[1, 1].real - nbar)


def test_chunked_missing_noise_reference(rng):
    cond = sample_heterodyne(NumberDistribution.thermal(0.4), 2.5, 2.0, 1000, rng,
                             kind="conditional", chunk_id="day3")
    unc = sample_heterodyne(NumberDistribution.thermal(0.2), 2.5, 2.0, 1000, rng,
                            kind="unconditional", chunk_id="day3")
    with pytest.raises(InvalidDataError, match="day3"):
        chunked_inversion([(cond, unc, None)])


def test_chunked_equal_chunks_average(rng):
    n = 20_000
    G = 4.0
    cond = sample_heterodyne(NumberDistribution.thermal(0.4), 2.5, G, n, rng,
                             kind="conditional")
    unc = sample_heterodyne(NumberDistribution.thermal(0.2), 2.5, G, n, rng,
                            kind="unconditional")
    noise = sample_heterodyne(NumberDistribution.fock(0), 2.5, G, n, rng,
                              kind="noise_only")
    one = chunked_inversion([(cond, unc, noise)])
    two = chunked_inversion([(cond, unc, noise), (cond, unc, noise)])
    assert np.abs(one[0].values - two[0].values).max() < 1e-12


# ---------------------------------------------------------------- bootstrap


def test_bootstrap_constant_samples():
    res = bootstrap(np.ones(500), lambda s: float(np.mean(s)), n_boot=500, seed=1)
    assert res.result.ci_low == res.result.ci_high == 1.0


def test_bootstrap_mean_stderr_oracle(rng):
    # bootstrap stderr of a Gaussian mean vs sigma/sqrt(N) within 5%
    N = 10_000
    sigma = 2.3
    x = rng.normal(scale=sigma, size=N)
    res = bootstrap(x, lambda s: float(np.mean(s)), n_boot=4000, seed=2)
    half = res.result.half_width
    assert half == pytest.approx(sigma / math.sqrt(N), rel=0.05)


def test_bootstrap_min_resamples():
    with pytest.raises(InvalidDataError):
        bootstrap(np.ones(10), np.mean, n_boot=50, seed=0)


def test_bootstrap_drop_accounting():
    # a statistic undefined on ~half the resamples must fail the 1% rule
    x = np.array([0.0] * 6 + [1.0] * 6)

    def frail(s):
        if np.sum(s) < 6:
            raise ZeroDivisionError
        return float(np.mean(s))

    with pytest.raises(InvalidDataError):
        bootstrap(x, frail, n_boot=300, seed=3)


# --------------------------------------------------------------- budget/gain


def test_budget_paper_fractions():
    gate = 320e-9
    p_click = 2.7e-6
    fr = {"spdc": 0.727, "thermal": 0.069, "dcr": 0.171, "leakage": 0.033}
    rates = {k: f * p_click / gate for k, f in fr.items()}
    b = herald_budget(rates["spdc"], rates["thermal"], rates["dcr"],
                      rates["leakage"], gate, 50e3)
    for k, f in fr.items():
        assert b.fractions[k] == pytest.approx(f, abs=5e-4)
    assert b.p_click == pytest.approx(2.7e-6, rel=1e-9)
    assert b.r_click == pytest.approx(0.135, rel=1e-9)


def test_budget_dark_count_arithmetic():
    # 1.5 Hz dark rate gated over 320 ns -> 4.8e-7 per trial
    b = herald_budget(0.0, 0.0, 1.5, 0.0, 320e-9, 50e3)
    assert b.p_click == pytest.approx(4.8e-7, rel=1e-12)
    assert b.fractions["dcr"] == 1.0


def test_budget_pure_signal():
    b = herald_budget(5.0, 0.0, 0.0, 0.0, 320e-9, 50e3)
    assert b.fractions["spdc"] == 1.0
    assert b.noise_fraction == 0.0


def test_calibrate_gain_round_trip():
    # forward model: choose G, generate consistent observables, recover G
    import scipy.constants as sc

    G_true = 10 ** (103 / 10)
    kappa_e, kappa_i, omega = 30e3, 150e3, 5.001e9
    n_b = 7.3
    R_o = 11.0
    R = n_b * R_o
    two_pi = 2 * math.pi
    p_in = n_b * (sc.h * omega) * (two_pi * kappa_i) ** 2 / (4 * two_pi * kappa_e)
    p_det = G_true * ((kappa_e - kappa_i) / (kappa_e + kappa_i)) ** 2 * p_in
    rep = calibrate_gain(R=R, R_o=R_o, P_det=p_det, kappa_e_b=kappa_e,
                         kappa_i_b=kappa_i, omega_b=omega)
    assert rep.gain == pytest.approx(G_true, rel=1e-12)
    assert rep.gain_db == pytest.approx(103.0, abs=1e-9)
    # linearity: doubling the detected power doubles the gain
    rep2 = calibrate_gain(R=R, R_o=R_o, P_det=2 * p_det, kappa_e_b=kappa_e,
                          kappa_i_b=kappa_i, omega_b=omega)
    assert rep2.gain == pytest.approx(2 * G_true, rel=1e-12)


def test_calibrate_gain_singularity():
    with pytest.raises(SingularCalibrationError):
        calibrate_gain(R=1.0, R_o=1.0, P_det=1.0, kappa_e_b=100e3,
                       kappa_i_b=100e3, omega_b=5e9)
