import math

import numpy as np
import pytest

from mopair.device import (
    PulseProfile,
    SystemParams,
    engine_hamiltonian,
    hybridized_modes,
    integrated_scattering,
    pump_occupation,
    pump_pulse_area,
    scattering_rate,
)
from mopair.errors import InvalidParameterError


def test_pump_peak_and_fwhm(paper_pulse):
    assert pump_occupation(0.0, paper_pulse) == pytest.approx(0.8)
    half = pump_occupation(80e-9, paper_pulse)
    assert half == pytest.approx(0.4, rel=1e-12)


def test_pump_integral_gaussian_oracle(paper_pulse):
    # quadrature oracle vs the closed form n_peak * T_p * sqrt(pi / 4 ln 2)
    t = np.linspace(-2e-6, 2e-6, 400001)
    quad = np.trapezoid(pump_occupation(t, paper_pulse), t)
    assert quad == pytest.approx(pump_pulse_area(paper_pulse), rel=1e-6)


def test_scattering_rate_paper_value(paper_params, paper_pulse):
    # hand arithmetic: 4 * 0.8 * (270e3)^2 / 1.3e9 = 179.446... Hz
    got = scattering_rate(0.0, paper_params, paper_pulse)
    assert got == pytest.approx(4 * 0.8 * 270e3**2 / 1.3e9, rel=1e-12)
    assert got == pytest.approx(179.45, abs=0.01)


def test_scattering_rate_zero_pump(paper_params, paper_pulse):
    assert scattering_rate(3e-6, paper_params, paper_pulse) < 1e-9 * 179.0


def test_scattering_linear_in_power(paper_params, paper_pulse):
    double = PulseProfile(paper_pulse.t_p_fwhm, 1.6, paper_pulse.t_center,
                          paper_pulse.rep_period)
    t = np.linspace(-0.3e-6, 0.3e-6, 7)
    assert np.allclose(scattering_rate(t, paper_params, double),
                       2 * scattering_rate(t, paper_params, paper_pulse))


def test_integrated_scattering_weak(paper_params, paper_pulse):
    # the single-jump conditioning premise: integrated jump probability << 1
    p = integrated_scattering(paper_params, paper_pulse)
    assert 1e-5 < p < 1e-3


def test_scattering_requires_optical_linewidth(paper_pulse):
    bad = SystemParams(g_om=1.0, g_pe=1.0, kappa_e_a=0.0, kappa_i_a=0.0,
                       kappa_i_b=0.0, kappa_e_c=1.0, kappa_i_c=0.0,
                       omega_b=1.0, omega_c=1.0, delta_a=1.0)
    with pytest.raises(InvalidParameterError):
        scattering_rate(0.0, bad, paper_pulse)


def test_hamiltonian_eigenstructure(paper_params):
    h = engine_hamiltonian(paper_params, dims=(2, 2))
    # single-excitation block has eigenvalues ±g_pe (angular)
    sub = h.matrix[np.ix_([1, 2], [1, 2])]
    ev = np.linalg.eigvalsh(sub)
    assert np.allclose(sorted(ev / (2 * math.pi)), [-800e3, 800e3], rtol=1e-12)
    vecs = np.linalg.eigh(sub)[1]
    assert np.allclose(np.abs(vecs), 1 / math.sqrt(2))


def test_hamiltonian_hermitian_number_conserving(paper_params):
    h = engine_hamiltonian(paper_params, dims=(5, 5)).matrix
    assert np.abs(h - h.conj().T).max() == 0.0
    from mopair.fock import ModeDims, embed, number

    dims = ModeDims((5, 5))
    ntot = embed(number(5), 0, dims).matrix + embed(number(5), 1, dims).matrix
    assert np.abs(h @ ntot - ntot @ h).max() < 1e-6


def test_hamiltonian_zero_coupling():
    p = SystemParams(g_om=0, g_pe=0.0, kappa_e_a=1.0, kappa_i_a=1.0,
                     kappa_i_b=0.0, kappa_e_c=1.0, kappa_i_c=0.0,
                     omega_b=5e9, omega_c=5e9, delta_a=5e9)
    assert np.abs(engine_hamiltonian(p, dims=(3, 3)).matrix).max() == 0.0


def test_hybridized_splitting_and_beat(paper_params):
    hm = hybridized_modes(paper_params)
    assert hm.splitting == pytest.approx(1.6e6)
    assert hm.beat_period == pytest.approx(625e-9, abs=0.1e-9)


def test_detuned_copy(paper_params):
    p = paper_params.detuned(12e6)
    assert p.detuning_bc == pytest.approx(12e6)
    h = engine_hamiltonian(p, dims=(2, 2))
    # detuning lands on the acoustic diagonal
    assert h.matrix[2, 2].real == pytest.approx(2 * math.pi * 12e6, rel=1e-12)
