"""Time-dependent Lindblad evolution of the reduced (acoustic, microwave)
system, quantum-regression two-time correlators, and quantum-jump
conditioning.

The optical mode never appears here: it is adiabatically eliminated
upstream and enters only through the time-dependent phonon-pair scattering
rate.  All rates are converted to angular frequency exactly once, in
:class:`EngineModel`.

Propagation is fixed-step classical RK4 on a uniform grid.  The generator
is trace-preserving for any input matrix, so every RK4 stage is traceless
and trace is conserved to rounding; trace drift and Hermiticity are still
checked as integrator diagnostics.  Correlator grids batch all regression
starts through a single pass over global time, which keeps the default
200x200 grid affordable on one core.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from . import _kernel
from .device import PulseProfile, SystemParams, scattering_rate
from .errors import (
    IntegratorAccuracyError,
    InvalidDataError,
    InvalidDimensionError,
    InvalidParameterError,
    InvalidRangeError,
)
from .fock import (
    DensityMatrix,
    ModeDims,
    Operator,
    annihilation,
    embed,
    jump_conditioned,
)

__all__ = [
    "BathSchedule",
    "Trajectory",
    "CorrelatorGrid",
    "EngineModel",
    "liouvillian_apply",
    "evolve",
    "jump_condition",
    "two_time_correlator",
    "heralded_correlation_pass",
    "HeraldedKernels",
    "second_moment_rhs",
    "stationary_second_moments",
    "gaussian_state_from_moments",
    "steady_state",
    "tune_constant_bath",
]

TWO_PI = 2.0 * math.pi
TRACE_DRIFT_TOL = 1e-8
HERMITICITY_TOL = 1e-10
STEPS_PER_RATE = 50  # fixed-step rule: dt <= 1 / (STEPS_PER_RATE * max rate)


def _knots_array(knots) -> np.ndarray:
    arr = np.asarray([[float(t), float(n)] for t, n in knots], dtype=float)
    if arr.size == 0:
        raise InvalidDataError("bath schedule needs at least one knot")
    if arr.shape[0] > 1 and np.any(np.diff(arr[:, 0]) <= 0):
        raise InvalidDataError("bath knot times must be strictly increasing")
    if np.any(arr[:, 1] < 0):
        raise InvalidDataError("bath occupations must be >= 0")
    return arr


@dataclass(frozen=True)
class BathSchedule:
    """Piecewise-linear thermal occupations of the intrinsic baths.

    Evaluation is linear interpolation between knots and constant
    extrapolation outside; ``n_th_w`` is the constant waveguide occupation.
    """

    knots_b: tuple
    knots_c: tuple
    n_th_w: float = 0.0

    def __post_init__(self):
        kb = _knots_array(self.knots_b)
        kc = _knots_array(self.knots_c)
        if self.n_th_w < 0:
            raise InvalidDataError("n_th_w must be >= 0")
        object.__setattr__(self, "knots_b", tuple(map(tuple, kb)))
        object.__setattr__(self, "knots_c", tuple(map(tuple, kc)))

    @classmethod
    def constant(cls, n_b: float, n_c: float, n_th_w: float = 0.0) -> "BathSchedule":
        return cls(knots_b=((0.0, n_b),), knots_c=((0.0, n_c),), n_th_w=n_th_w)

    def occupation_b(self, t):
        kb = np.asarray(self.knots_b)
        return np.interp(t, kb[:, 0], kb[:, 1])

    def occupation_c(self, t):
        kc = np.asarray(self.knots_c)
        return np.interp(t, kc[:, 0], kc[:, 1])

    def scaled(self, factor: float) -> "BathSchedule":
        """Occupations multiplied by ``factor`` (power-sweep helper)."""
        return BathSchedule(
            knots_b=tuple((t, factor * n) for t, n in self.knots_b),
            knots_c=tuple((t, factor * n) for t, n in self.knots_c),
            n_th_w=self.n_th_w * factor,
        )

    def min_knot_spacing(self) -> float:
        spacings = []
        for knots in (self.knots_b, self.knots_c):
            ts = np.asarray(knots)[:, 0]
            if ts.size > 1:
                spacings.append(float(np.diff(ts).min()))
        return min(spacings) if spacings else math.inf


class EngineModel:
    """Prepared engine: angular rates, truncation, step size, kernel hooks.

    This class is the single ordinary-to-angular conversion site of the
    package.
    """

    def __init__(self, params: SystemParams, pulse: PulseProfile | None,
                 baths: BathSchedule, dims=(10, 10), dt: float | None = None):
        self.params = params
        self.pulse = pulse
        self.baths = baths
        self.dims = dims if isinstance(dims, ModeDims) else ModeDims(tuple(dims))
        if len(self.dims) != 2:
            raise InvalidDimensionError("engine space is exactly two modes")
        self.g_ang = -TWO_PI * params.g_pe  # H = g_ang (b†c + bc†) + delta_ang b†b
        self.delta_ang = TWO_PI * params.detuning_bc
        self.kib_ang = TWO_PI * params.kappa_i_b
        self.kic_ang = TWO_PI * params.kappa_i_c
        self.kec_ang = TWO_PI * params.kappa_e_c
        self.dt = float(dt) if dt is not None else self.default_dt()
        db, dc = self.dims.dims
        self._sq = np.sqrt(np.arange(max(db, dc) + 1, dtype=np.float64))
        self._b = embed(annihilation(db), 0, self.dims)
        self._c = embed(annihilation(dc), 1, self.dims)

    # -- rates ---------------------------------------------------------

    def pair_rate_ang(self, t):
        """Angular phonon-pair scattering rate (0 when no pulse is set)."""
        if self.pulse is None:
            return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
        return TWO_PI * scattering_rate(t, self.params, self.pulse)

    def max_rate(self) -> float:
        rates = [
            abs(self.g_ang),
            abs(self.delta_ang),
            self.params.kappa_i_b + self.params.kappa_c,
        ]
        if self.pulse is not None:
            rates.append(4.0 * self.pulse.n_a_peak * self.params.g_om**2 / self.params.kappa_a)
        spacing = self.baths.min_knot_spacing()
        if math.isfinite(spacing):
            rates.append(1.0 / spacing)
        # a fully rate-free system has no timescale to resolve; floor at
        # 1 Hz so the step rule stays defined
        return max(max(rates), 1.0)

    def default_dt(self) -> float:
        return 1.0 / (STEPS_PER_RATE * self.max_rate())

    def coeffs(self, t: float) -> _kernel.LindbladCoeffs:
        n_b = float(self.baths.occupation_b(t))
        n_c = float(self.baths.occupation_c(t))
        n_w = self.baths.n_th_w
        return _kernel.LindbladCoeffs(
            g=self.g_ang,
            delta=self.delta_ang,
            up_b=float(self.pair_rate_ang(t)) + n_b * self.kib_ang,
            down_b=(n_b + 1.0) * self.kib_ang,
            up_c=n_c * self.kic_ang + n_w * self.kec_ang,
            down_c=(n_c + 1.0) * self.kic_ang + (n_w + 1.0) * self.kec_ang,
        )

    def _coeff_fn(self) -> Callable:
        db, dc = self.dims.dims

        def fn(t):
            c = self.coeffs(t)
            wb, wc = c.diagonal_tables(db, dc)
            return c, wb, wc

        return fn

    # -- operators -----------------------------------------------------

    @property
    def b(self) -> Operator:
        return self._b

    @property
    def c(self) -> Operator:
        return self._c

    def apply(self, t: float, mat: np.ndarray) -> np.ndarray:
        """L(t) applied to one matrix (fused-kernel path)."""
        db, dc = self.dims.dims
        V = np.ascontiguousarray(mat.reshape(db, dc, db, dc))
        out = _kernel.apply_liouvillian(V, self.coeffs(t))
        return out.reshape(mat.shape)


@dataclass
class Trajectory:
    """Stored solution of the master equation on a time grid."""

    times: np.ndarray
    states: np.ndarray  # (n_t, D, D)
    model: EngineModel

    def state(self, i: int) -> DensityMatrix:
        return DensityMatrix(self.states[i], self.model.dims)

    def expect(self, op: Operator) -> np.ndarray:
        return np.einsum("ij,tji->t", op.matrix, self.states)

    def validate(self, check_positivity: bool = True) -> None:
        for i in range(len(self.times)):
            self.state(i).validate(check_positivity=check_positivity)


@dataclass
class CorrelatorGrid:
    """Two-time correlator K(t', tau') = <L(t'+tau') R(t')> on a product grid."""

    t_starts: np.ndarray
    taus: np.ndarray
    values: np.ndarray  # (n_t, n_tau) complex


def liouvillian_apply(t: float, rho: DensityMatrix, params: SystemParams,
                      pulse: PulseProfile | None, baths: BathSchedule) -> np.ndarray:
    """Action of the full generator at time t (dense reference path).

    Exact sum of the coherent commutator and the five dissipator families
    (pair scattering, acoustic up/down, microwave intrinsic and waveguide
    up/down); the result is traceless and Hermiticity-preserving.
    """
    model = EngineModel(params, pulse, baths, dims=rho.dims)
    return _kernel.apply_liouvillian_numpy(
        rho.matrix, model.coeffs(t), model.b.matrix, model.c.matrix
    )


def evolve(rho0: DensityMatrix, params: SystemParams, pulse: PulseProfile | None,
           baths: BathSchedule, t_grid, dims=None, dt: float | None = None,
           model: EngineModel | None = None) -> Trajectory:
    """Integrate the master equation, storing states on ``t_grid``."""
    if model is None:
        model = EngineModel(params, pulse, baths,
                            dims=dims if dims is not None else rho0.dims, dt=dt)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 2 or np.any(np.diff(t_grid) <= 0):
        raise InvalidRangeError("t_grid must be strictly increasing with >= 2 points")
    if rho0.dims != model.dims:
        raise InvalidDimensionError("initial state dims do not match engine dims")

    db, dc = model.dims.dims
    D = model.dims.total
    V = np.ascontiguousarray(rho0.matrix.reshape(1, db, dc, db, dc)).copy()
    work = _kernel._Workspace(1, db, dc)
    coeff_fn = model._coeff_fn()

    out = np.empty((t_grid.size, D, D), dtype=np.complex128)
    out[0] = rho0.matrix
    for i in range(t_grid.size - 1):
        span = t_grid[i + 1] - t_grid[i]
        n_sub = max(1, int(math.ceil(span / model.dt - 1e-12)))
        h = span / n_sub
        t = t_grid[i]
        for _ in range(n_sub):
            _kernel.rk4_step(V, t, h, coeff_fn, work, model._sq)
            t += h
        out[i + 1] = V[0].reshape(D, D)

    traj = Trajectory(times=t_grid, states=out, model=model)
    _check_trajectory(traj)
    return traj


def _check_trajectory(traj: Trajectory) -> None:
    if not np.isfinite(traj.states).all():
        raise IntegratorAccuracyError("non-finite state encountered; reduce dt")
    tr = np.einsum("tii->t", traj.states)
    drift = np.abs(tr - 1.0).max()
    if drift > TRACE_DRIFT_TOL:
        raise IntegratorAccuracyError(
            f"trace drift {drift:.3e} exceeds {TRACE_DRIFT_TOL}; step too coarse "
            f"(dt = {traj.model.dt:.3e}s, max rate = {traj.model.max_rate():.3e}/s)"
        )
    stride = max(1, len(traj.times) // 16)
    herm = max(
        float(np.abs(traj.states[i] - traj.states[i].conj().T).max())
        for i in range(0, len(traj.times), stride)
    )
    if herm > HERMITICITY_TOL:
        raise IntegratorAccuracyError(f"Hermiticity violation {herm:.3e} along trajectory")


def jump_condition(rho: DensityMatrix) -> DensityMatrix:
    """Conditional state after a heralded pair event: add one phonon.

    rho -> b^† rho b / Tr{...} with b the acoustic mode (index 0).
    """
    bd = embed(annihilation(rho.dims.dims[0]), 0, rho.dims).dag
    return jump_conditioned(rho, bd)


# ----------------------------------------------------------------------
# batched regression passes
# ----------------------------------------------------------------------


def _uniform_spacing(grid: np.ndarray, name: str) -> float:
    d = np.diff(grid)
    if np.any(d <= 0) or np.ptp(d) > 1e-9 * d[0]:
        raise InvalidRangeError(f"{name} must be uniform and strictly increasing")
    return float(d[0])


def two_time_correlator(op_left: Operator, op_right: Operator, trajectory: Trajectory,
                        tau_grid, t_starts=None) -> CorrelatorGrid:
    """<op_left(t'+tau) op_right(t')> by the quantum regression theorem.

    For each start t', op_right * rho(t') is propagated under the same
    time-dependent generator and traced against op_left; all starts are
    batched through a single pass over global time.  ``tau_grid`` must be
    uniform starting at 0; at tau = 0 the result equals the single-time
    moment exactly by construction.
    """
    model = trajectory.model
    tau_grid = np.asarray(tau_grid, dtype=float)
    if tau_grid.ndim != 1 or tau_grid.size < 1 or abs(tau_grid[0]) > 1e-15:
        raise InvalidRangeError("tau_grid must start at 0")
    if t_starts is None:
        t_starts = trajectory.times
    t_starts = np.asarray(t_starts, dtype=float)
    if np.any(np.diff(t_starts) <= 0):
        raise InvalidRangeError("t_starts must be strictly increasing")
    if t_starts[-1] + tau_grid[-1] > trajectory.times[-1] + 0.5 * model.dt:
        raise InvalidRangeError(
            f"trajectory ends at {trajectory.times[-1]:.4e}s but correlator needs "
            f"{t_starts[-1] + tau_grid[-1]:.4e}s"
        )
    # starts must be stored trajectory times
    idx = np.searchsorted(trajectory.times, t_starts - 1e-15)
    idx = np.clip(idx, 0, len(trajectory.times) - 1)
    if np.any(np.abs(trajectory.times[idx] - t_starts) > 1e-6 * model.dt + 1e-15):
        raise InvalidRangeError("every t_start must coincide with a stored trajectory time")

    db, dc = model.dims.dims
    D = model.dims.total
    n_t, n_tau = t_starts.size, tau_grid.size
    K = np.empty((n_t, n_tau), dtype=np.complex128)
    oL, oR = op_left.matrix, op_right.matrix

    for i, s in enumerate(idx):
        K[i, 0] = np.trace(oL @ (oR @ trajectory.states[s]))
    if n_tau == 1:
        return CorrelatorGrid(t_starts, tau_grid, K)

    dtau = _uniform_spacing(tau_grid, "tau_grid")
    m_sub = max(1, int(math.ceil(dtau / model.dt - 1e-12)))
    h = dtau / m_sub
    start_steps = np.round((t_starts - t_starts[0]) / h).astype(int)
    if np.any(np.abs(t_starts[0] + start_steps * h - t_starts) > 1e-6 * h):
        raise InvalidRangeError("t_starts must align with the internal step grid")
    n_retire = (n_tau - 1) * m_sub
    total_steps = int(start_steps[-1]) + n_retire

    max_active = int(np.max(
        np.searchsorted(start_steps, start_steps + n_retire, side="right")
        - np.arange(n_t)
    ))
    cols = np.empty((n_t, db, dc, db, dc), dtype=np.complex128)
    work = _kernel._Workspace(max_active, db, dc)
    coeff_fn = model._coeff_fn()

    started = 0
    retired = 0
    for step in range(total_steps):
        t = t_starts[0] + step * h
        while started < n_t and start_steps[started] == step:
            cols[started] = (oR @ trajectory.states[idx[started]]).reshape(db, dc, db, dc)
            started += 1
        while retired < started and start_steps[retired] + n_retire <= step:
            retired += 1
        if retired >= n_t:
            break
        act = cols[retired:started]
        if act.shape[0]:
            _kernel.rk4_step(act, t, h, coeff_fn, work, model._sq)
        s_next = step + 1
        for i in range(retired, started):
            done = s_next - start_steps[i]
            if done > 0 and done % m_sub == 0:
                r = done // m_sub
                if r < n_tau:
                    K[i, r] = np.trace(oL @ cols[i].reshape(D, D))
    return CorrelatorGrid(t_starts, tau_grid, K)


@dataclass
class HeraldedKernels:
    """Everything the temporal-mode layer needs from one conditional run.

    grid_uncond: regression kernel of the unconditional trajectory
    grid_mixture: kernel of the jump-weighted conditional mixture
        (unnormalized: the jump weights are folded in)
    weight_ahead: per start time, the click-weight mass whose kernel is
        still the unconditional one (noise clicks + jumps later than t')
    sigma_click: unnormalized sum_J w_J rho_J(t_J), the click-averaged
        post-jump state
    unc_click_avg: jump-weight average of the unconditional state at the
        click times (reference for noise clicks); unnormalized likewise
    """

    grid_uncond: CorrelatorGrid
    grid_mixture: CorrelatorGrid
    weight_ahead: np.ndarray
    jump_times: np.ndarray
    jump_weights: np.ndarray
    noise_weight: float
    sigma_click: np.ndarray
    unc_click_avg: np.ndarray
    occ_b: np.ndarray
    occ_c: np.ndarray
    trajectory_states: np.ndarray
    sigma_states: np.ndarray
    model: EngineModel

    def conditional_state(self, i: int) -> np.ndarray:
        """Full click-conditioned density matrix at start time i:
        sigma(t') plus the still-unconditional weight mass."""
        return self.sigma_states[i] + self.weight_ahead[i] * self.trajectory_states[i]


def heralded_correlation_pass(model: EngineModel, rho0: DensityMatrix,
                              t_starts, tau_grid, jump_times, jump_weights,
                              noise_weight: float = 0.0,
                              store_states: bool = True) -> HeraldedKernels:
    """One batched pass producing unconditional and conditional kernels.

    The conditional kernel of the jump-weighted average is computed exactly
    by linearity: the mixture sigma(t) = sum_{t_J <= t} w_J rho_J(t)
    satisfies the same master equation with impulse injections
    w_J rho_J(t_J) at the jump times, so a single propagation with sources
    replaces one propagation per jump sample.  Correlator base times before
    a jump use the unconditional kernel (via ``weight_ahead``), matching
    the per-jump weighted-average definition term by term.
    """
    t_starts = np.asarray(t_starts, dtype=float)
    tau_grid = np.asarray(tau_grid, dtype=float)
    jump_times = np.asarray(jump_times, dtype=float)
    jump_weights = np.asarray(jump_weights, dtype=float)
    if jump_times.size != jump_weights.size:
        raise InvalidDataError("jump times and weights must pair up")
    if t_starts.size < 2 or tau_grid.size < 2 or abs(tau_grid[0]) > 1e-15:
        raise InvalidRangeError("need >= 2 start times, >= 2 tau points, tau_grid[0] = 0")

    dt_start = _uniform_spacing(t_starts, "t_starts")
    dtau = _uniform_spacing(tau_grid, "tau_grid")
    m_sub = max(1, int(math.ceil(dtau / model.dt - 1e-12)))
    h = dtau / m_sub
    k_start = int(round(dt_start / h))
    if abs(k_start * h - dt_start) > 1e-6 * h:
        raise InvalidRangeError("start spacing must be an integer multiple of the step")

    db, dc = model.dims.dims
    D = model.dims.total
    n_t, n_tau = t_starts.size, tau_grid.size
    n_retire = (n_tau - 1) * m_sub
    total_steps = (n_t - 1) * k_start + n_retire

    t0 = t_starts[0]
    j_idx = np.round((jump_times - t0) / h).astype(int)
    if jump_times.size and (j_idx.min() < 0 or j_idx.max() > total_steps):
        raise InvalidRangeError("jump times outside the simulated window")
    j_order = np.argsort(j_idx, kind="stable")
    j_idx = j_idx[j_order]
    j_w = jump_weights[j_order]

    b_mat = model.b.matrix
    bd_mat = b_mat.conj().T
    c_mat = model.c.matrix
    cd_mat = c_mat.conj().T
    nb_diag = np.real(np.diag(bd_mat @ b_mat))
    nc_diag = np.real(np.diag(cd_mat @ c_mat))

    P = np.zeros((2, db, dc, db, dc), dtype=np.complex128)
    P[0] = rho0.matrix.reshape(db, dc, db, dc)
    X = np.zeros((2 * n_t, db, dc, db, dc), dtype=np.complex128)
    max_active = 2 * (n_retire // k_start + 2)
    workP = _kernel._Workspace(2, db, dc)
    workX = _kernel._Workspace(min(2 * n_t, max_active), db, dc)
    coeff_fn = model._coeff_fn()

    K_unc = np.zeros((n_t, n_tau), dtype=np.complex128)
    K_mix = np.zeros((n_t, n_tau), dtype=np.complex128)
    weight_ahead = np.zeros(n_t)
    occ_b = np.zeros(n_t)
    occ_c = np.zeros(n_t)
    traj_states = np.zeros((n_t, D, D), dtype=np.complex128) if store_states else np.zeros((0,))
    sig_states = np.zeros((n_t, D, D), dtype=np.complex128) if store_states else np.zeros((0,))
    sigma_click = np.zeros((D, D), dtype=np.complex128)
    unc_click_avg = np.zeros((D, D), dtype=np.complex128)

    w_total = float(jump_weights.sum())
    injected = 0.0
    next_jump = 0
    started = 0
    retired = 0

    for step in range(total_steps + 1):
        t = t0 + step * h
        # inject jumps scheduled at this step (before seeding: a click at
        # exactly t' conditions the t' kernel)
        while next_jump < j_idx.size and j_idx[next_jump] == step:
            rho_now = P[0].reshape(D, D)
            num = bd_mat @ rho_now @ b_mat
            wgt = float(np.real(np.trace(num)))
            if wgt <= 1e-14:
                raise InvalidDataError("degenerate jump during heralded pass")
            w = j_w[next_jump]
            P[1] += (w / wgt) * num.reshape(db, dc, db, dc)
            sigma_click += (w / wgt) * num
            unc_click_avg += w * rho_now
            injected += w
            next_jump += 1
        # seed regression columns
        if step % k_start == 0 and step // k_start < n_t and started == step // k_start:
            i = started
            rho_now = P[0].reshape(D, D)
            sig_now = P[1].reshape(D, D)
            X[2 * i] = (c_mat @ rho_now).reshape(db, dc, db, dc)
            X[2 * i + 1] = (c_mat @ sig_now).reshape(db, dc, db, dc)
            K_unc[i, 0] = np.trace(cd_mat @ c_mat @ rho_now)
            K_mix[i, 0] = np.trace(cd_mat @ c_mat @ sig_now)
            weight_ahead[i] = noise_weight + (w_total - injected)
            diag = np.real(np.diagonal(rho_now))
            occ_b[i] = float(nb_diag @ diag)
            occ_c[i] = float(nc_diag @ diag)
            if store_states:
                traj_states[i] = rho_now
                sig_states[i] = sig_now
            started += 1
        if step == total_steps:
            break
        _kernel.rk4_step(P, t, h, coeff_fn, workP, model._sq)
        while retired < started and retired * k_start + n_retire <= step:
            retired += 1
        act = X[2 * retired: 2 * started]
        if act.shape[0]:
            _kernel.rk4_step(act, t, h, coeff_fn, workX, model._sq)
        s_next = step + 1
        for i in range(retired, started):
            done = s_next - i * k_start
            if done > 0 and done % m_sub == 0:
                r = done // m_sub
                if r < n_tau:
                    K_unc[i, r] = np.trace(cd_mat @ X[2 * i].reshape(D, D))
                    K_mix[i, r] = np.trace(cd_mat @ X[2 * i + 1].reshape(D, D))

    if w_total > 0 and injected < w_total - 1e-12:
        raise InvalidRangeError("not all jumps were injected (window too short)")

    return HeraldedKernels(
        grid_uncond=CorrelatorGrid(t_starts, tau_grid, K_unc),
        grid_mixture=CorrelatorGrid(t_starts, tau_grid, K_mix),
        weight_ahead=weight_ahead,
        jump_times=jump_times,
        jump_weights=jump_weights,
        noise_weight=noise_weight,
        sigma_click=sigma_click,
        unc_click_avg=unc_click_avg,
        occ_b=occ_b,
        occ_c=occ_c,
        trajectory_states=traj_states,
        sigma_states=sig_states,
        model=model,
    )


# ----------------------------------------------------------------------
# linear (second-moment) helpers: exact for this quadratic model
# ----------------------------------------------------------------------


def _drift_and_source(model: EngineModel, t: float):
    c = model.coeffs(t)
    A = np.array(
        [[-1j * c.delta - 0.5 * (c.down_b - c.up_b), -1j * c.g],
         [-1j * c.g, -0.5 * (c.down_c - c.up_c)]],
        dtype=np.complex128,
    )
    S = np.diag([c.up_b, c.up_c]).astype(np.complex128)
    return A, S


def second_moment_rhs(model: EngineModel, t: float, M: np.ndarray) -> np.ndarray:
    """d/dt of M_ij = <a_i^† a_j> for a = (b, c); exact moment closure."""
    A, S = _drift_and_source(model, t)
    return A.conj() @ M + M @ A.T + S


def stationary_second_moments(model: EngineModel, t: float) -> np.ndarray:
    """Steady-state second moments of the generator frozen at time t.

    An undamped, unsourced mode makes the Lyapunov equation singular; the
    minimum-norm solution places it in vacuum, which is the physical
    choice.  An undamped *sourced* mode has no steady state and raises.
    """
    A, S = _drift_and_source(model, t)

    def lmap(M):
        return A.conj() @ M + M @ A.T

    basis = np.eye(4)
    L = np.column_stack([lmap(e.reshape(2, 2)).reshape(4) for e in basis])
    rhs = -S.reshape(4)
    M, *_ = np.linalg.lstsq(L, rhs, rcond=None)
    if np.abs(L @ M - rhs).max() > 1e-9 * max(1.0, float(np.abs(rhs).max())):
        raise InvalidParameterError(
            "no steady state: an undamped mode is driven by a thermal source"
        )
    M = M.reshape(2, 2)
    return 0.5 * (M + M.conj().T)


def gaussian_state_from_moments(M: np.ndarray, dims) -> DensityMatrix:
    """Two-mode phase-symmetric Gaussian state with <a_i^† a_j> = M.

    Diagonalizes M into normal modes, builds the product of thermal states
    at the normal occupations and rotates back with the passive Fock-space
    beam-splitter unitary.  The construction is verified against the target
    moments before returning.
    """
    dims = dims if isinstance(dims, ModeDims) else ModeDims(tuple(dims))
    db, dc = dims.dims
    M = np.asarray(M, dtype=np.complex128)
    nu, U = np.linalg.eigh(M)
    nu = np.clip(nu.real, 0.0, None)
    # align each normal mode with the physical mode its eigenvector
    # dominates, so the thermal factors are built in the right truncations
    # and the residual rotation stays small
    if abs(U[0, 0]) < abs(U[0, 1]):
        U = U[:, ::-1]
        nu = nu[::-1]

    def thermal_diag(dim, n):
        if n <= 0:
            p = np.zeros(dim)
            p[0] = 1.0
            return p
        x = n / (n + 1.0)
        p = (1.0 - x) * x ** np.arange(dim)
        return p / p.sum()

    rho_n = np.diag(np.kron(thermal_diag(db, nu[0]), thermal_diag(dc, nu[1]))).astype(np.complex128)

    K = 1j * scipy.linalg.logm(U.conj())
    K = 0.5 * (K + K.conj().T)
    b = embed(annihilation(db), 0, dims).matrix
    c = embed(annihilation(dc), 1, dims).matrix
    ops = (b, c)
    G = sum(K[i, j] * (ops[i].conj().T @ ops[j]) for i in range(2) for j in range(2))
    R = scipy.linalg.expm(-1j * G)
    rho = R @ rho_n @ R.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real

    got = np.array(
        [[np.trace(ops[i].conj().T @ ops[j] @ rho) for j in range(2)] for i in range(2)]
    )
    # the achievable accuracy is set by the truncated thermal tails of the
    # two factors; the check guards against convention errors, which are O(|M|)
    tails = [
        (nu[0] / (nu[0] + 1.0)) ** db if nu[0] > 0 else 0.0,
        (nu[1] / (nu[1] + 1.0)) ** dc if nu[1] > 0 else 0.0,
    ]
    tol = 1e-8 + 20.0 * max(tails) * max(1.0, float(np.abs(M).max()))
    if np.abs(got - M).max() > tol:
        raise InvalidDataError("gaussian state construction failed to match target moments")
    return DensityMatrix(rho, dims)


def steady_state(params: SystemParams, baths: BathSchedule, t: float = 0.0,
                 dims=(10, 10), pulse: PulseProfile | None = None) -> DensityMatrix:
    """Exact Gaussian steady state of the generator frozen at time t."""
    model = EngineModel(params, pulse, baths, dims=dims)
    M = stationary_second_moments(model, t)
    return gaussian_state_from_moments(M, model.dims)


def tune_constant_bath(params: SystemParams, pulse: PulseProfile, target_occupation: float,
                       gate: tuple, n_th_w: float = 0.0,
                       ratio_c_over_b: float = 1.0) -> BathSchedule:
    """Constant bath schedule whose gate-window acoustic occupation matches
    ``target_occupation``.

    The gate-averaged <b^†b> is exactly affine in the bath level (bath
    occupations enter the moment equations only through the source term),
    so two moment-level evaluations determine the answer.
    """
    from scipy.integrate import solve_ivp

    def gate_avg(level: float) -> float:
        baths = BathSchedule.constant(level, level * ratio_c_over_b, n_th_w)
        model = EngineModel(params, pulse, baths)
        t_pre = min(gate[0], pulse.t_center - 4 * pulse.t_p_fwhm)
        M0 = stationary_second_moments(model, t_pre)

        def rhs(t, y):
            return second_moment_rhs(model, t, y.reshape(2, 2)).reshape(4)

        ts = np.linspace(gate[0], gate[1], 33)
        sol = solve_ivp(rhs, (t_pre, gate[1]), M0.reshape(4).astype(complex), t_eval=ts,
                        rtol=1e-10, atol=1e-14, max_step=pulse.t_p_fwhm / 8)
        nb = sol.y[0].real
        return float(np.trapezoid(nb, ts) / (ts[-1] - ts[0]))

    y0 = gate_avg(0.0)
    y1 = gate_avg(1.0)
    if y1 - y0 <= 0:
        raise InvalidParameterError("bath response is not increasing; cannot tune")
    level = (target_occupation - y0) / (y1 - y0)
    if level < 0:
        raise InvalidParameterError(
            f"target occupation {target_occupation} below the pump-only floor {y0:.3e}"
        )
    return BathSchedule.constant(level, level * ratio_c_over_b, n_th_w)
