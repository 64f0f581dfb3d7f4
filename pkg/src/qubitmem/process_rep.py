"""Single-qubit processes as Pauli-basis chi matrices and Kraus sets.

A process acts as ``E(rho) = sum_mn chi[m, n] E_m rho E_n^dagger`` with
``E = (I, X, Y, Z)``. Because the Paulis are unnormalized, a trace-preserving
chi has unit trace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qubit_core import PAULI_BASIS, PAULI_LABELS

HERMITIAN_TOL = 1e-10
CP_TOL = -1e-8

CHI_IDENTITY = np.zeros((4, 4), dtype=complex)
CHI_IDENTITY[0, 0] = 1.0
CHI_IDENTITY.flags.writeable = False


@dataclass(frozen=True)
class CpTpReport:
    cp_ok: bool
    tp_defect: float
    min_eigenvalue: float
    hermitian: bool

    @property
    def ok(self) -> bool:
        return self.cp_ok and self.hermitian and self.tp_defect <= 1e-6


def _as_chi(chi) -> np.ndarray:
    chi = np.asarray(chi, dtype=complex)
    if chi.shape != (4, 4):
        raise ValueError(f"chi must be 4x4, got shape {chi.shape}")
    return chi


def hermiticity_defect(chi) -> float:
    chi = np.asarray(chi)
    return float(np.max(np.abs(chi - chi.conj().T)))


def apply_chi(chi, rho) -> np.ndarray:
    """Apply a chi matrix to a 2x2 operator. The result is not renormalized."""
    chi = _as_chi(chi)
    if hermiticity_defect(chi) > HERMITIAN_TOL:
        raise ValueError("chi is not Hermitian")
    rho = np.asarray(rho, dtype=complex)
    # out = sum_mn chi_mn E_m rho E_n
    left = np.einsum("mij,jk->mik", PAULI_BASIS, rho)
    return np.einsum("mn,mik,nkl->il", chi, left, PAULI_BASIS)


def apply_kraus(kraus, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    return sum(k @ rho @ k.conj().T for k in kraus)


def pauli_coefficients(op) -> np.ndarray:
    """Coefficients ``a_m = Tr[E_m K] / 2`` with ``K = sum_m a_m E_m``."""
    return 0.5 * np.einsum("mij,ji->m", PAULI_BASIS, np.asarray(op, dtype=complex))


def chi_from_kraus(kraus) -> np.ndarray:
    ops = [np.asarray(k, dtype=complex) for k in kraus]
    if not ops:
        raise ValueError("Kraus set is empty")
    for k in ops:
        if k.shape != (2, 2):
            raise ValueError(f"Kraus operators must be 2x2, got shape {k.shape}")
    a = np.array([pauli_coefficients(k) for k in ops])
    return a.T @ a.conj()


def kraus_from_chi(chi, tol: float = 1e-14) -> list[np.ndarray]:
    """Canonical Kraus operators from the eigendecomposition of chi."""
    chi = _as_chi(chi)
    w, v = np.linalg.eigh(0.5 * (chi + chi.conj().T))
    ops = []
    for lam, vec in zip(w[::-1], v.T[::-1]):
        if lam <= tol:
            continue
        ops.append(np.sqrt(lam) * np.einsum("m,mij->ij", vec, PAULI_BASIS))
    return ops


def tp_operator(chi) -> np.ndarray:
    """``sum_mn chi_mn E_n E_m``, the 2x2 sum of K^dagger K over the process."""
    chi = _as_chi(chi)
    return np.einsum("mn,nij,mjk->ik", chi, PAULI_BASIS, PAULI_BASIS)


def check_cp_tp(chi) -> CpTpReport:
    chi = _as_chi(chi)
    herm = hermiticity_defect(chi) <= HERMITIAN_TOL
    min_eig = float(np.linalg.eigvalsh(0.5 * (chi + chi.conj().T))[0])
    defect = float(np.linalg.norm(tp_operator(chi) - np.eye(2), ord=2))
    return CpTpReport(
        cp_ok=min_eig >= CP_TOL,
        tp_defect=defect,
        min_eigenvalue=min_eig,
        hermitian=herm,
    )


def right_multiplication_matrix(b) -> np.ndarray:
    """4x4 matrix M with ``E_m @ b = sum_p M[p, m] E_p``."""
    b = np.asarray(b, dtype=complex)
    prods = np.einsum("mij,jk->mik", PAULI_BASIS, b)
    return np.array([pauli_coefficients(p) for p in prods]).T


def project_trace_preserving(chi) -> np.ndarray:
    """Rescale chi by the congruence ``K -> K A^(-1/2)``, ``A = sum K^dagger K``.

    The result is completely positive and exactly trace preserving. For a
    process that only loses photons uniformly the result is the conditioned
    (renormalized) process.
    """
    chi = _as_chi(chi)
    a = tp_operator(chi)
    a = 0.5 * (a + a.conj().T)
    w, v = np.linalg.eigh(a)
    if w[0] <= 0:
        raise ValueError("chi annihilates some input state; cannot renormalize")
    b = (v / np.sqrt(w)) @ v.conj().T
    m = right_multiplication_matrix(b)
    out = m @ chi @ m.conj().T
    return 0.5 * (out + out.conj().T)


def process_fidelity(chi_exp, chi_ideal=CHI_IDENTITY) -> float:
    """Overlap ``Tr[chi_exp chi_ideal]`` with a unitary (rank-1, trace-1) ideal.

    ``chi_exp`` is trace-normalized first.
    """
    chi_exp = _as_chi(chi_exp)
    chi_ideal = _as_chi(chi_ideal)
    tr_ideal = np.trace(chi_ideal).real
    if abs(tr_ideal - 1) > 1e-8:
        raise ValueError(f"chi_ideal must have unit trace, got {tr_ideal}")
    ev = np.linalg.eigvalsh(0.5 * (chi_ideal + chi_ideal.conj().T))
    if ev[-1] < 1 - 1e-8 or np.any(np.abs(ev[:-1]) > 1e-8):
        raise ValueError("chi_ideal must be rank one (a unitary process)")
    tr_exp = np.trace(chi_exp).real
    if tr_exp <= 0:
        raise ValueError(f"chi_exp must have positive trace, got {tr_exp}")
    f = np.trace(chi_exp @ chi_ideal).real / tr_exp
    return float(min(max(f, 0.0), 1.0))


def unitary_chi(u) -> np.ndarray:
    return chi_from_kraus([u])


def chi_to_dict(chi) -> dict:
    """Serialize chi as ``{"basis", "re", "im"}`` with nested lists."""
    chi = _as_chi(chi)
    return {
        "basis": list(PAULI_LABELS),
        "re": chi.real.tolist(),
        "im": chi.imag.tolist(),
    }


def chi_from_dict(data: dict) -> np.ndarray:
    if list(data.get("basis", [])) != list(PAULI_LABELS):
        raise ValueError(f"unsupported chi basis {data.get('basis')!r}")
    re = np.asarray(data["re"], dtype=float)
    im = np.asarray(data["im"], dtype=float)
    if re.shape != (4, 4) or im.shape != (4, 4):
        raise ValueError("chi 're' and 'im' must be 4x4 arrays")
    return re + 1j * im
