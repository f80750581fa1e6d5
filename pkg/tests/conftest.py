import numpy as np
import pytest

from mopair.device import PulseProfile, SystemParams


@pytest.fixture(scope="session")
def paper_params() -> SystemParams:
    """Device table of the transducer used throughout the suite."""
    return SystemParams(
        g_om=270e3,
        g_pe=800e3,
        kappa_e_a=650e6,
        kappa_i_a=650e6,
        kappa_i_b=150e3,
        kappa_e_c=1.2e6,
        kappa_i_c=550e3,
        omega_b=5.001e9,
        omega_c=5.001e9,
        delta_a=5.001e9,
    )


@pytest.fixture(scope="session")
def paper_pulse() -> PulseProfile:
    return PulseProfile(t_p_fwhm=160e-9, n_a_peak=0.8, t_center=0.0, rep_period=20e-6)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240930)
