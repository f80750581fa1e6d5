"""Truncated-Fock-space linear algebra: operators, states, tensor embedding.

Everything is dense complex128; the engine never needs more than two modes
at dimension <= 20 each, so sparse machinery would be unjustified
complexity.  Mode ordering is fixed globally as (acoustic, microwave).
All values are immutable after construction and all operations are pure
functions, so concurrent evaluation is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateConditionError, InvalidDimensionError, TruncationError

__all__ = [
    "ModeDims",
    "Operator",
    "DensityMatrix",
    "annihilation",
    "creation",
    "number",
    "identity",
    "embed",
    "dissipator",
    "thermal_state",
    "fock_state",
    "expect",
    "number_distribution",
    "total_number_distribution",
]

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8
EIGENVALUE_FLOOR = -1e-8
THERMAL_TAIL_TOL = 1e-9


@dataclass(frozen=True)
class ModeDims:
    """Ordered per-mode truncation dimensions."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) == 0:
            raise InvalidDimensionError("ModeDims requires at least one mode")
        if any(d < 2 for d in dims):
            raise InvalidDimensionError(f"every mode dimension must be >= 2, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def total(self) -> int:
        return math.prod(self.dims)

    def __len__(self) -> int:
        return len(self.dims)


def _as_dims(dims) -> ModeDims:
    return dims if isinstance(dims, ModeDims) else ModeDims(tuple(dims))


@dataclass(frozen=True)
class Operator:
    """Dense complex square matrix with tensor-structure metadata."""

    matrix: np.ndarray
    dims: ModeDims

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        dims = _as_dims(self.dims)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidDimensionError(f"operator matrix must be square, got {m.shape}")
        if m.shape[0] != dims.total:
            raise InvalidDimensionError(
                f"matrix side {m.shape[0]} != product of mode dims {dims.total}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", dims)

    @property
    def dag(self) -> "Operator":
        return Operator(self.matrix.conj().T, self.dims)

    def __matmul__(self, other: "Operator") -> "Operator":
        if self.dims != other.dims:
            raise InvalidDimensionError("operator dims mismatch in product")
        return Operator(self.matrix @ other.matrix, self.dims)


@dataclass(frozen=True)
class DensityMatrix:
    """Density matrix over a truncated Fock space.

    Invariants (checked by :meth:`validate`): Hermitian to 1e-10, unit trace
    to 1e-8, minimum eigenvalue >= -1e-8.  Positivity is a diagnostic, not
    enforced by projection; projecting would mask integrator bugs.
    """

    matrix: np.ndarray
    dims: ModeDims

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        dims = _as_dims(self.dims)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != dims.total:
            raise InvalidDimensionError(
                f"density matrix shape {m.shape} incompatible with dims {dims.dims}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", dims)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def validate(self, check_positivity: bool = True) -> None:
        m = self.matrix
        herm = np.abs(m - m.conj().T).max()
        if herm > HERMITICITY_TOL:
            raise InvalidDimensionError(f"density matrix not Hermitian: max |rho - rho^†| = {herm:.3e}")
        tr = abs(self.trace - 1.0)
        if tr > TRACE_TOL:
            raise InvalidDimensionError(f"density matrix trace off unity by {tr:.3e}")
        if check_positivity:
            lo = float(np.linalg.eigvalsh(m).min())
            if lo < EIGENVALUE_FLOOR:
                raise InvalidDimensionError(f"density matrix min eigenvalue {lo:.3e} below floor")

    def normalized(self) -> "DensityMatrix":
        return DensityMatrix(self.matrix / np.trace(self.matrix), self.dims)


def annihilation(dim: int) -> Operator:
    """Single-mode lowering operator: M[n-1, n] = sqrt(n)."""
    if dim < 2:
        raise InvalidDimensionError(f"annihilation needs dim >= 2, got {dim}")
    m = np.zeros((dim, dim), dtype=np.complex128)
    n = np.arange(1, dim)
    m[n - 1, n] = np.sqrt(n)
    return Operator(m, ModeDims((dim,)))


def creation(dim: int) -> Operator:
    return annihilation(dim).dag


def number(dim: int) -> Operator:
    if dim < 2:
        raise InvalidDimensionError(f"number needs dim >= 2, got {dim}")
    return Operator(np.diag(np.arange(dim, dtype=np.complex128)), ModeDims((dim,)))


def identity(dims) -> Operator:
    dims = _as_dims(dims)
    return Operator(np.eye(dims.total, dtype=np.complex128), dims)


def embed(op: Operator, mode_index: int, dims) -> Operator:
    """Kronecker-embed a single-mode operator into the full space.

    Ordering is fixed as the order of ``dims`` (acoustic first, microwave
    second for the engine space).
    """
    dims = _as_dims(dims)
    if not 0 <= mode_index < len(dims):
        raise InvalidDimensionError(f"mode_index {mode_index} out of range for {len(dims)} modes")
    if op.matrix.shape[0] != dims.dims[mode_index]:
        raise InvalidDimensionError(
            f"operator dim {op.matrix.shape[0]} != mode dim {dims.dims[mode_index]}"
        )
    left = math.prod(dims.dims[:mode_index])
    right = math.prod(dims.dims[mode_index + 1:])
    m = np.kron(np.kron(np.eye(left), op.matrix), np.eye(right))
    return Operator(m, dims)


def dissipator(L: Operator, rho: DensityMatrix) -> np.ndarray:
    """Lindblad dissipator D(L)rho = L rho L^† - (1/2){L^†L, rho}."""
    if L.dims != rho.dims:
        raise InvalidDimensionError("dissipator: operator and state dims mismatch")
    Lm = L.matrix
    r = rho.matrix
    LdL = Lm.conj().T @ Lm
    return Lm @ r @ Lm.conj().T - 0.5 * (LdL @ r + r @ LdL)


def thermal_state(dim: int, n_th: float) -> DensityMatrix:
    """Single-mode thermal state, p(n) ∝ (n_th/(n_th+1))^n, renormalized.

    The truncated tail weight must stay below 1e-9 so that the g2 = 2
    identity survives at 1e-8 tolerance; callers pick ``dim`` accordingly
    and the guard here enforces it.
    """
    if n_th < 0:
        raise InvalidDimensionError(f"thermal occupation must be >= 0, got {n_th}")
    if dim < 2:
        raise InvalidDimensionError(f"thermal_state needs dim >= 2, got {dim}")
    if n_th == 0.0:
        p = np.zeros(dim)
        p[0] = 1.0
        return DensityMatrix(np.diag(p).astype(np.complex128), ModeDims((dim,)))
    x = n_th / (n_th + 1.0)
    tail = x**dim  # untruncated geometric tail mass
    if tail >= THERMAL_TAIL_TOL:
        raise TruncationError(
            f"thermal_state(dim={dim}, n_th={n_th}): tail weight {tail:.3e} >= {THERMAL_TAIL_TOL}"
        )
    p = (1.0 - x) * x ** np.arange(dim)
    p /= p.sum()
    return DensityMatrix(np.diag(p).astype(np.complex128), ModeDims((dim,)))


def fock_state(dims, occupations) -> DensityMatrix:
    """Projector onto |n_0, n_1, ...> for the given mode dims."""
    dims = _as_dims(dims)
    occ = tuple(int(n) for n in occupations)
    if len(occ) != len(dims):
        raise InvalidDimensionError("one occupation per mode required")
    if any(n < 0 or n >= d for n, d in zip(occ, dims.dims)):
        raise InvalidDimensionError(f"occupations {occ} outside dims {dims.dims}")
    idx = 0
    for n, d in zip(occ, dims.dims):
        idx = idx * d + n
    m = np.zeros((dims.total, dims.total), dtype=np.complex128)
    m[idx, idx] = 1.0
    return DensityMatrix(m, dims)


def expect(op: Operator, rho: DensityMatrix) -> complex:
    if op.dims != rho.dims:
        raise InvalidDimensionError("expect: dims mismatch")
    return complex(np.einsum("ij,ji->", op.matrix, rho.matrix))


def number_distribution(rho: DensityMatrix, mode_index: int) -> np.ndarray:
    """Marginal photon-number distribution of one mode (diagonal marginal)."""
    dims = rho.dims
    diag = np.real(np.diagonal(rho.matrix)).reshape(dims.dims)
    axes = tuple(a for a in range(len(dims)) if a != mode_index)
    return diag.sum(axis=axes) if axes else diag


def total_number_distribution(rho: DensityMatrix) -> np.ndarray:
    """Distribution of the total quanta summed over all modes."""
    dims = rho.dims
    diag = np.real(np.diagonal(rho.matrix)).reshape(dims.dims)
    n_max = sum(d - 1 for d in dims.dims)
    out = np.zeros(n_max + 1)
    for idx in np.ndindex(*dims.dims):
        out[sum(idx)] += diag[idx]
    return out


def jump_conditioned(rho: DensityMatrix, L: Operator) -> DensityMatrix:
    """Conditional state L rho L^† / Tr{...} after a detected quantum jump."""
    if L.dims != rho.dims:
        raise InvalidDimensionError("jump_conditioned: dims mismatch")
    m = L.matrix @ rho.matrix @ L.matrix.conj().T
    w = float(np.real(np.trace(m)))
    if w < 1e-14:
        raise DegenerateConditionError(f"jump weight {w:.3e} below 1e-14")
    return DensityMatrix(m / w, rho.dims)
