"""Two-level linear algebra for polarization qubits.

Kets are length-2 complex arrays and density matrices are 2x2 complex arrays,
both in the {H, V} basis. Pauli operators are unnormalized, so
``Tr[E_m E_n] = 2 delta_mn``.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)

PAULI_LABELS = ("I", "X", "Y", "Z")
PAULI_BASIS = np.stack([I2, X, Y, Z])
for _op in PAULI_BASIS:
    _op.flags.writeable = False
PAULI_BASIS.flags.writeable = False

PROJECTOR_LABELS = ("H", "V", "R", "L", "D", "A")

# Each label's orthogonal partner.
PARTNER = {"H": "V", "V": "H", "R": "L", "L": "R", "D": "A", "A": "D"}

_S = 1 / math.sqrt(2)
_KETS = {
    "H": (1.0, 0.0),
    "V": (0.0, 1.0),
    "D": (_S, _S),
    "A": (_S, -_S),
    "R": (_S, -1j * _S),
    "L": (_S, 1j * _S),
}

NORM_TOL = 1e-12
PSD_TOL = 1e-10
_RANK_TOL = 1e-14


def ket(label: str) -> np.ndarray:
    """Return the ket for one of the six polarization labels."""
    try:
        return np.array(_KETS[label], dtype=complex)
    except KeyError:
        raise ValueError(f"unknown polarization label {label!r}") from None


def ket_from_angles(theta: float, phi: float) -> np.ndarray:
    """Polarization ket ``cos(theta)|H> + exp(i phi) sin(theta)|V>``."""
    if not (math.isfinite(theta) and math.isfinite(phi)):
        raise ValueError(f"angles must be finite, got theta={theta}, phi={phi}")
    theta = math.remainder(theta, 2 * math.pi)
    phi = math.remainder(phi, 2 * math.pi)
    return np.array([math.cos(theta), cmath.exp(1j * phi) * math.sin(theta)], dtype=complex)


def density_from_ket(k) -> np.ndarray:
    k = np.asarray(k, dtype=complex).reshape(2)
    norm = np.vdot(k, k).real
    if abs(norm - 1) > 1e-10:
        raise ValueError(f"ket is not normalized (norm^2 = {norm})")
    return np.outer(k, k.conj())


def projector(label: str) -> np.ndarray:
    """Rank-1 projector onto the labelled polarization state."""
    return density_from_ket(ket(label))


def eigvals_2x2(m) -> tuple[float, float]:
    """Closed-form eigenvalues (ascending) of a 2x2 Hermitian matrix."""
    m = np.asarray(m)
    a, d = m[0, 0].real, m[1, 1].real
    b = m[0, 1]
    mean = 0.5 * (a + d)
    rad = math.hypot(0.5 * (a - d), abs(b))
    return mean - rad, mean + rad


def is_hermitian(m, tol: float = NORM_TOL) -> bool:
    m = np.asarray(m)
    return bool(np.max(np.abs(m - m.conj().T)) <= tol)


def validate_density(rho, *, normalized: bool = True, name: str = "rho") -> np.ndarray:
    """Check Hermiticity, trace and positivity of a 2x2 density matrix.

    Unnormalized channel outputs pass with ``normalized=False`` as long as the
    trace lies in (0, 1].
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError(f"{name} must be 2x2, got shape {rho.shape}")
    if not is_hermitian(rho, 1e-10):
        raise ValueError(f"{name} is not Hermitian")
    tr = np.trace(rho).real
    if normalized and abs(tr - 1) > 1e-10:
        raise ValueError(f"{name} has trace {tr}, expected 1")
    if not normalized and not (0 < tr <= 1 + 1e-10):
        raise ValueError(f"{name} has trace {tr}, expected a value in (0, 1]")
    if eigvals_2x2(rho)[0] < -PSD_TOL:
        raise ValueError(f"{name} is not positive semidefinite")
    return rho


def state_fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2`` for qubits.

    Both arguments must be normalized, positive semidefinite 2x2 matrices.
    """
    rho = validate_density(rho, name="rho")
    sigma = validate_density(sigma, name="sigma")
    # For 2x2: Tr sqrt(M) = sqrt(Tr M + 2 sqrt(det M)), M = sqrt(rho) sigma sqrt(rho).
    # Eigenvalues at rounding level are zeroed; sqrt would amplify them to ~1e-9.
    det = 1.0
    for m in (rho, sigma):
        lo, hi = eigvals_2x2(m)
        det *= (lo if lo > _RANK_TOL else 0.0) * hi
    overlap = np.trace(rho @ sigma).real
    f = overlap + 2 * math.sqrt(det)
    return min(max(f, 0.0), 1.0)


def general_fidelity(a, b) -> float:
    """Uhlmann fidelity between two PSD matrices of any size, after trace normalization.

    Used for comparing full process matrices, where neither side is rank one.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    a = 0.5 * (a + a.conj().T) / np.trace(a).real
    b = 0.5 * (b + b.conj().T) / np.trace(b).real
    w, v = np.linalg.eigh(a)
    sa = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    m = sa @ b @ sa
    ev = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    f = np.sum(np.sqrt(np.clip(ev, 0, None))) ** 2
    return float(min(max(f, 0.0), 1.0))


def stokes_to_density(sx: float, sy: float, sz: float) -> np.ndarray:
    return 0.5 * (I2 + sx * X + sy * Y + sz * Z)
