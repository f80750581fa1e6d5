"""Physical parameterization of the transducer.

All configuration values are ordinary frequencies (Hz) because the device
table is quoted as "/2pi" values; conversion to angular frequency happens
exactly once, at engine ingestion (`mopair.engine.EngineModel`).  Keeping a
single conversion site is the main defense against 2*pi bugs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidParameterError
from .fock import ModeDims, Operator, annihilation, embed

__all__ = [
    "SystemParams",
    "PulseProfile",
    "HybridizedModes",
    "pump_occupation",
    "pump_pulse_area",
    "scattering_rate",
    "integrated_scattering",
    "engine_hamiltonian",
    "hybridized_modes",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SystemParams:
    """Device rates and frequencies, all ordinary frequency (Hz).

    g_om: single-photon optomechanical coupling
    g_pe: piezoelectric coupling
    kappa_e_a / kappa_i_a: optical external / intrinsic linewidths
    kappa_i_b: acoustic intrinsic linewidth
    kappa_e_c / kappa_i_c: microwave external / intrinsic linewidths
    omega_b / omega_c: acoustic / microwave mode frequencies
    delta_a: pump detuning from the optical resonance
    n_th_w: waveguide thermal occupation (dimensionless)
    """

    g_om: float
    g_pe: float
    kappa_e_a: float
    kappa_i_a: float
    kappa_i_b: float
    kappa_e_c: float
    kappa_i_c: float
    omega_b: float
    omega_c: float
    delta_a: float
    n_th_w: float = 0.0

    def __post_init__(self):
        for name in ("kappa_e_a", "kappa_i_a", "kappa_i_b", "kappa_e_c", "kappa_i_c"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be >= 0")
        if self.n_th_w < 0:
            raise InvalidParameterError("n_th_w must be >= 0")

    @property
    def kappa_a(self) -> float:
        return self.kappa_e_a + self.kappa_i_a

    @property
    def kappa_c(self) -> float:
        return self.kappa_e_c + self.kappa_i_c

    @property
    def detuning_bc(self) -> float:
        """Acoustic-microwave detuning omega_b - omega_c (Hz)."""
        return self.omega_b - self.omega_c

    def detuned(self, detuning_hz: float) -> "SystemParams":
        """Copy with the acoustic mode moved off resonance by detuning_hz."""
        return replace(self, omega_b=self.omega_c + detuning_hz)


@dataclass(frozen=True)
class PulseProfile:
    """Gaussian pump pulse specified as intra-cavity photon occupation.

    t_p_fwhm: FWHM of n_a(t); n_a_peak: peak occupation; t_center: pulse
    center; rep_period: repetition period of the experiment.
    """

    t_p_fwhm: float
    n_a_peak: float
    t_center: float = 0.0
    rep_period: float = 20e-6

    def __post_init__(self):
        if self.t_p_fwhm <= 0:
            raise InvalidParameterError("t_p_fwhm must be > 0")
        if self.n_a_peak < 0:
            raise InvalidParameterError("n_a_peak must be >= 0")
        if self.rep_period <= self.t_p_fwhm:
            raise InvalidParameterError("rep_period must exceed the pulse FWHM")


@dataclass(frozen=True)
class HybridizedModes:
    """Hybridized electromechanical modes at the resonant operating point."""

    omega_plus: float
    omega_minus: float

    @property
    def beat_period(self) -> float:
        return 1.0 / (self.omega_plus - self.omega_minus)

    @property
    def splitting(self) -> float:
        return self.omega_plus - self.omega_minus


def hybridized_modes(params: SystemParams) -> HybridizedModes:
    """Mode pair at omega_c ± g_pe (valid at omega_b = omega_c)."""
    return HybridizedModes(
        omega_plus=params.omega_c + params.g_pe,
        omega_minus=params.omega_c - params.g_pe,
    )


def pump_occupation(t, pulse: PulseProfile):
    """Intra-cavity photon occupation n_a(t): Gaussian with FWHM t_p_fwhm."""
    t = np.asarray(t, dtype=float)
    arg = 4.0 * math.log(2.0) * ((t - pulse.t_center) / pulse.t_p_fwhm) ** 2
    return pulse.n_a_peak * np.exp(-arg)


def pump_pulse_area(pulse: PulseProfile) -> float:
    """Closed form of ∫ n_a dt = n_a_peak * T_p * sqrt(pi / (4 ln 2))."""
    return pulse.n_a_peak * pulse.t_p_fwhm * math.sqrt(math.pi / (4.0 * math.log(2.0)))


def scattering_rate(t, params: SystemParams, pulse: PulseProfile):
    """Optomechanical phonon-photon pair scattering rate (ordinary Hz).

    Gamma(t) = 4 n_a(t) g_om^2 / kappa_a, with the enhanced coupling
    sqrt(n_a) g_om set parametrically by the pump.  The 2*pi factors cancel,
    so ordinary-frequency inputs give an ordinary-frequency rate.
    """
    if params.kappa_a <= 0:
        raise InvalidParameterError("total optical linewidth must be > 0")
    return 4.0 * pump_occupation(t, pulse) * params.g_om**2 / params.kappa_a


def integrated_scattering(params: SystemParams, pulse: PulseProfile) -> float:
    """Integrated jump probability ∫ Gamma_angular dt (dimensionless).

    Must stay << 1 for the single-jump conditioning picture to hold.
    """
    peak = 4.0 * pulse.n_a_peak * params.g_om**2 / params.kappa_a
    return TWO_PI * peak * pulse.t_p_fwhm * math.sqrt(math.pi / (4.0 * math.log(2.0)))


def engine_hamiltonian(params: SystemParams, dims: ModeDims | tuple = (10, 10)) -> Operator:
    """Two-mode engine Hamiltonian in the frame rotating at omega_c, in
    angular-frequency units (rad/s).

    H = 2*pi * [ -g_pe (b^† c + b c^†) + (omega_b - omega_c) b^† b ]

    At resonance the eigen-splitting is 2 g_pe with hybrid eigenvectors
    (b ± c)/sqrt(2); the detuning term supports off-resonant operation.
    """
    dims = dims if isinstance(dims, ModeDims) else ModeDims(tuple(dims))
    if len(dims) != 2:
        raise InvalidParameterError("engine space is exactly two modes (acoustic, microwave)")
    b = embed(annihilation(dims.dims[0]), 0, dims)
    c = embed(annihilation(dims.dims[1]), 1, dims)
    bd, cd = b.dag.matrix, c.dag.matrix
    bm, cm = b.matrix, c.matrix
    h = -params.g_pe * (bd @ cm + bm @ cd) + params.detuning_bc * (bd @ bm)
    return Operator(TWO_PI * h, dims)
