"""Low-level Lindblad propagation kernels for the two-mode engine.

The generator acting on a density matrix rho over (acoustic b, microwave c)
in the frame rotating at the microwave frequency is

    L(t) rho = -i [H, rho] + sum_k gamma_k(t) D(A_k) rho,

with H = g (b^† c + b c^†) + delta b^† b (angular units; the engine passes
g = -2*pi*g_pe) and jump operators A_k in {b, b^†, c, c^†}.  All operators
are ladder/diagonal in the Fock basis, so the action is written as direct
index shifts: one fused pass per evaluation instead of a chain of matrix
products.  This is what makes 200x200 two-time correlator grids affordable
on a laptop core.

Batch layout: V[n, i, j, k, l] with (i, j) the bra and (k, l) the ket
indices of (b, c).  The numpy implementations mirror the numba kernels and
are used as the correctness reference in tests.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = [
    "LindbladCoeffs",
    "apply_liouvillian",
    "apply_liouvillian_numpy",
    "rk4_step",
]


class LindbladCoeffs:
    """Scalar coefficients of the generator at one instant (angular units).

    g: beam-splitter coupling as it appears in H = g(b^†c + bc^†) + delta b^†b
    delta: acoustic-microwave detuning term
    up_b/down_b: raising/lowering dissipator rates on b (up_b includes the
        pair-scattering rate)
    up_c/down_c: same for c (include intrinsic and waveguide channels)
    """

    __slots__ = ("g", "delta", "up_b", "down_b", "up_c", "down_c")

    def __init__(self, g, delta, up_b, down_b, up_c, down_c):
        self.g = float(g)
        self.delta = float(delta)
        self.up_b = float(up_b)
        self.down_b = float(down_b)
        self.up_c = float(up_c)
        self.down_c = float(down_c)

    def diagonal_tables(self, db: int, dc: int):
        """Per-(bra,ket) diagonal coefficient split over the two modes.

        wb[i,k] + wc[j,l] collects every term of L that is diagonal in the
        Fock indices: the anticommutator halves of all four dissipators and
        the detuning commutator.  In the truncated space a a^† has diagonal
        (1, ..., d-1, 0) -- the top level is annihilated by the truncated
        creation operator -- so the raising-dissipator part uses that
        truncated diagonal, exactly matching the dense-operator algebra.
        """
        ib = np.arange(db, dtype=np.float64)
        jc = np.arange(dc, dtype=np.float64)
        ub = ib + 1.0
        ub[-1] = 0.0  # truncated b b^† top level
        uc = jc + 1.0
        uc[-1] = 0.0
        wb = (
            -0.5 * (self.down_b * (ib[:, None] + ib[None, :])
                    + self.up_b * (ub[:, None] + ub[None, :]))
            - 1j * self.delta * (ib[:, None] - ib[None, :])
        ).astype(np.complex128)
        wc = (
            -0.5 * (self.down_c * (jc[:, None] + jc[None, :])
                    + self.up_c * (uc[:, None] + uc[None, :]))
        ).astype(np.complex128)
        return wb, wc


@njit(cache=True, fastmath=True)
def _apply_kernel(V, out, sq, wb, wc, g, up_b, down_b, up_c, down_c, pre, alpha):
    """out = L(V + alpha*pre) for a batch V[n,i,j,k,l]; pre may equal V.

    sq[n] = sqrt(n).  The eight off-diagonal terms are the two-sided ladder
    shifts of the commutator and the jump parts of the dissipators; the
    diagonal part is wb[i,k] + wc[j,l].
    """
    N, db, dc = V.shape[0], V.shape[1], V.shape[2]
    use_affine = alpha != 0.0
    ig = 1j * g
    for n in range(N):
        if use_affine:
            v = V[n] + alpha * pre[n]
        else:
            v = V[n]
        o = out[n]
        for i in range(db):
            for j in range(dc):
                for k in range(db):
                    for l in range(dc):
                        acc = (wb[i, k] + wc[j, l]) * v[i, j, k, l]
                        # -i g [b^†c + bc^†, rho]
                        if i >= 1 and j + 1 < dc:
                            acc += -ig * sq[i] * sq[j + 1] * v[i - 1, j + 1, k, l]
                        if i + 1 < db and j >= 1:
                            acc += -ig * sq[i + 1] * sq[j] * v[i + 1, j - 1, k, l]
                        if k + 1 < db and l >= 1:
                            acc += ig * sq[k + 1] * sq[l] * v[i, j, k + 1, l - 1]
                        if k >= 1 and l + 1 < dc:
                            acc += ig * sq[k] * sq[l + 1] * v[i, j, k - 1, l + 1]
                        # jump parts: down: A rho A^†, up: A^† rho A
                        if i + 1 < db and k + 1 < db:
                            acc += down_b * sq[i + 1] * sq[k + 1] * v[i + 1, j, k + 1, l]
                        if i >= 1 and k >= 1:
                            acc += up_b * sq[i] * sq[k] * v[i - 1, j, k - 1, l]
                        if j + 1 < dc and l + 1 < dc:
                            acc += down_c * sq[j + 1] * sq[l + 1] * v[i, j + 1, k, l + 1]
                        if j >= 1 and l >= 1:
                            acc += up_c * sq[j] * sq[l] * v[i, j - 1, k, l - 1]
                        o[i, j, k, l] = acc


@njit(cache=True, fastmath=True)
def _rk4_combine(V, k1, k2, k3, k4, h):
    n = V.size
    v = V.reshape(n)
    a = k1.reshape(n)
    b = k2.reshape(n)
    c = k3.reshape(n)
    d = k4.reshape(n)
    s = h / 6.0
    for i in range(n):
        v[i] = v[i] + s * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i])


def _sqrt_table(db: int, dc: int) -> np.ndarray:
    return np.sqrt(np.arange(max(db, dc) + 1, dtype=np.float64))


def apply_liouvillian(V: np.ndarray, coeffs: LindbladCoeffs, out=None) -> np.ndarray:
    """Apply the generator to a batch V[n,i,j,k,l] (or a single [i,j,k,l])."""
    single = V.ndim == 4
    if single:
        V = V[None, ...]
    db, dc = V.shape[1], V.shape[2]
    if out is None:
        out = np.empty_like(V)
    wb, wc = coeffs.diagonal_tables(db, dc)
    _apply_kernel(
        V, out, _sqrt_table(db, dc), wb, wc,
        coeffs.g, coeffs.up_b, coeffs.down_b, coeffs.up_c, coeffs.down_c,
        V, 0.0,
    )
    return out[0] if single else out


def apply_liouvillian_numpy(rho: np.ndarray, coeffs: LindbladCoeffs,
                            b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Dense-matrix reference: same generator via explicit matrix products.

    ``b``/``c`` are the embedded annihilation operators on the full space;
    ``rho`` is (D, D).  Used to validate the fused kernel.
    """
    bd, cd = b.conj().T, c.conj().T
    H = coeffs.g * (bd @ c + b @ cd) + coeffs.delta * (bd @ b)

    def diss(L, r):
        LdL = L.conj().T @ L
        return L @ r @ L.conj().T - 0.5 * (LdL @ r + r @ LdL)

    out = -1j * (H @ rho - rho @ H)
    out += coeffs.up_b * diss(bd, rho) + coeffs.down_b * diss(b, rho)
    out += coeffs.up_c * diss(cd, rho) + coeffs.down_c * diss(c, rho)
    return out


class _Workspace:
    """Reusable RK4 stage buffers for a fixed batch capacity."""

    def __init__(self, capacity, db, dc):
        shape = (capacity, db, dc, db, dc)
        self.k1 = np.empty(shape, dtype=np.complex128)
        self.k2 = np.empty(shape, dtype=np.complex128)
        self.k3 = np.empty(shape, dtype=np.complex128)
        self.k4 = np.empty(shape, dtype=np.complex128)


def rk4_step(V: np.ndarray, t: float, h: float, coeff_fn, work: _Workspace, sq: np.ndarray):
    """Advance the batch V in place by one classical RK4 step.

    ``coeff_fn(t)`` returns (LindbladCoeffs, wb, wc) at time t.  The
    generator is trace-preserving for any input, so every stage is
    traceless and the step conserves Tr(V) to rounding.
    """
    n = V.shape[0]
    k1, k2, k3, k4 = work.k1[:n], work.k2[:n], work.k3[:n], work.k4[:n]
    c1, wb1, wc1 = coeff_fn(t)
    c2, wb2, wc2 = coeff_fn(t + 0.5 * h)
    c3, wb3, wc3 = coeff_fn(t + h)
    _apply_kernel(V, k1, sq, wb1, wc1, c1.g, c1.up_b, c1.down_b, c1.up_c, c1.down_c, V, 0.0)
    _apply_kernel(V, k2, sq, wb2, wc2, c2.g, c2.up_b, c2.down_b, c2.up_c, c2.down_c, k1, 0.5 * h)
    _apply_kernel(V, k3, sq, wb2, wc2, c2.g, c2.up_b, c2.down_b, c2.up_c, c2.down_c, k2, 0.5 * h)
    _apply_kernel(V, k4, sq, wb3, wc3, c3.g, c3.up_b, c3.down_b, c3.up_c, c3.down_c, k3, h)
    _rk4_combine(V, k1, k2, k3, k4, h)
