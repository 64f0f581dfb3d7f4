"""Process and state reconstruction from polarization tomography records.

Two estimators share the same records:

* ``linear_inversion_chi`` estimates each output state from pair-normalized
  frequencies and solves the 16x16 linear system for chi. It is exact on
  exact probabilities and may return non-physical chi on sampled data.
* ``mle_chi`` maximizes the Poisson likelihood over completely positive,
  trace-preserving processes. ``chi = T^+ T`` with ``T`` lower triangular
  (16 real parameters) guarantees positivity; each candidate is then
  renormalized by the congruence ``K -> K A^(-1/2)`` (see
  :func:`~qubitmem.process_rep.project_trace_preserving`), so the likelihood
  only ever sees trace-preserving processes. The objective is minimized with
  L-BFGS-B using an analytic gradient, starting from the Cholesky factor of
  ``chi_identity + init_perturbation * I``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize

from .measurement_sim import (
    BASIS_PAIRS,
    INPUT_LABELS,
    CountModel,
    PoissonStream,
    TomographyRecord,
    group_by_input,
    input_state,
    records_from_outputs,
    tomography_dataset,
)
from .memory_channel import MemoryParams, snapshot
from .process_rep import (
    CHI_IDENTITY,
    apply_chi,
    check_cp_tp,
    process_fidelity,
    project_trace_preserving,
)
from .qubit_core import PAULI_BASIS, PROJECTOR_LABELS, projector, stokes_to_density

_P_FLOOR = 1e-12
_TRIL_OFF = np.tril_indices(4, -1)
_PROJECTORS = np.stack([projector(lbl) for lbl in PROJECTOR_LABELS])
_INPUTS = np.stack([input_state(lbl) for lbl in INPUT_LABELS])


@dataclass(frozen=True)
class MleOptions:
    max_iterations: int = 2000
    nll_tolerance: float = 1e-15
    init_perturbation: float = 0.1

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.nll_tolerance > 0:
            raise ValueError("nll_tolerance must be > 0")
        if not self.init_perturbation > 0:
            raise ValueError("init_perturbation must be > 0")


class MleConvergenceError(RuntimeError):
    def __init__(self, message: str, last_chi: np.ndarray, nll_history: list[float]):
        super().__init__(message)
        self.last_chi = last_chi
        self.nll_history = nll_history


class LinearInversion(NamedTuple):
    chi: np.ndarray
    physical: bool


@dataclass
class MleResult:
    chi: np.ndarray
    nll: float
    nll_history: list[float]
    iterations: int
    tp_defect: float
    min_eigenvalue: float

    @property
    def fidelity_to_identity(self) -> float:
        return process_fidelity(self.chi, CHI_IDENTITY)


@dataclass(frozen=True)
class FidelityCurve:
    storage_times: np.ndarray
    fidelities: np.ndarray
    efficiencies: np.ndarray
    chis: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.storage_times)
        if len(self.fidelities) != n or len(self.efficiencies) != n:
            raise ValueError("curve columns differ in length")


# -- data tables -------------------------------------------------------------


def _count_table(records: Sequence[TomographyRecord]) -> tuple[np.ndarray, np.ndarray]:
    """Counts and expected trials as (4 inputs, 6 projectors) arrays."""
    table = group_by_input(records)
    counts = np.empty((4, 6))
    trials = np.empty((4, 6))
    for j, inp in enumerate(INPUT_LABELS):
        row = table.get(inp, {})
        for s, proj in enumerate(PROJECTOR_LABELS):
            if proj not in row:
                raise ValueError(f"missing tomography setting ({inp}, {proj})")
            counts[j, s] = row[proj].counts
            trials[j, s] = row[proj].expected_trials
    extra = set(table) - set(INPUT_LABELS)
    if extra:
        raise ValueError(f"unexpected input labels {sorted(extra)}")
    return counts, trials


def _pair_frequencies(counts_row: np.ndarray, inp: str = "") -> dict[str, float]:
    freq = {}
    for a, b in BASIS_PAIRS:
        ia, ib = PROJECTOR_LABELS.index(a), PROJECTOR_LABELS.index(b)
        total = counts_row[ia] + counts_row[ib]
        if total <= 0:
            raise ValueError(f"both counts of basis pair {a}/{b} are zero for input {inp}")
        freq[a] = counts_row[ia] / total
        freq[b] = counts_row[ib] / total
    return freq


def _output_state_estimate(counts_row: np.ndarray, inp: str = "") -> np.ndarray:
    f = _pair_frequencies(counts_row, inp)
    # R = (H - iV)/sqrt2 is the -1 eigenstate of Y, L the +1 eigenstate.
    return stokes_to_density(f["D"] - f["A"], f["L"] - f["R"], f["H"] - f["V"])


# -- linear inversion --------------------------------------------------------


def _design_matrix(inputs: np.ndarray) -> np.ndarray:
    # rows (j, i, k), columns (m, n): (E_m rho_j E_n)_ik
    blocks = np.einsum("mab,jbc,ncd->jadmn", PAULI_BASIS, inputs, PAULI_BASIS)
    return blocks.reshape(len(inputs) * 4, 16)


_DESIGN = _design_matrix(_INPUTS)


def linear_inversion_chi(records: Sequence[TomographyRecord]) -> LinearInversion:
    counts, _ = _count_table(records)
    outs = np.stack([_output_state_estimate(counts[j], inp) for j, inp in enumerate(INPUT_LABELS)])
    chi = np.linalg.solve(_DESIGN, outs.reshape(16)).reshape(4, 4)
    chi = 0.5 * (chi + chi.conj().T)
    rep = check_cp_tp(chi)
    return LinearInversion(chi, rep.cp_ok)


# -- process MLE -------------------------------------------------------------


def _t_from_params(x: np.ndarray) -> np.ndarray:
    t = np.zeros((4, 4), dtype=complex)
    t[np.diag_indices(4)] = x[:4]
    n_off = len(_TRIL_OFF[0])
    t[_TRIL_OFF] = x[4 : 4 + n_off] + 1j * x[4 + n_off :]
    return t


def _params_from_t(t: np.ndarray) -> np.ndarray:
    off = t[_TRIL_OFF]
    return np.concatenate([np.diag(t).real, off.real, off.imag])


def _kraus_from_t(t: np.ndarray) -> np.ndarray:
    # K_k = sum_m conj(T_km) E_m, giving chi = T^+ T
    return np.einsum("km,mij->kij", t.conj(), PAULI_BASIS)


def _inv_sqrt_and_derivative(a: np.ndarray):
    w, u = np.linalg.eigh(0.5 * (a + a.conj().T))
    if w[0] <= 0:
        raise FloatingPointError("singular Kraus completeness operator")
    f = w**-0.5
    dw = w[:, None] - w[None, :]
    same = np.abs(dw) <= 1e-12 * np.abs(w).max()
    with np.errstate(divide="ignore", invalid="ignore"):
        f1 = np.where(same, -0.5 * w[:, None] ** -1.5, (f[:, None] - f[None, :]) / dw)
    b = (u * f) @ u.conj().T
    return b, u, f1


class _ProcessObjective:
    """Poisson deviance (normalized by total counts) and its gradient in T."""

    def __init__(self, counts: np.ndarray, trials: np.ndarray):
        if np.any(trials <= 0):
            raise ValueError("expected_trials must be positive for every setting")
        self.counts = counts
        self.trials = trials
        self.total = float(counts.sum())
        if self.total <= 0:
            raise ValueError("dataset has no counts")
        pos = counts > 0
        self.saturated = float(np.sum(counts - np.where(pos, counts * np.log(np.where(pos, counts, 1)), 0)))

    def probabilities(self, t: np.ndarray):
        k = _kraus_from_t(t)
        a = np.einsum("kji,kjl->il", k.conj(), k)
        b, u, f1 = _inv_sqrt_and_derivative(a)
        sigma = np.einsum("ab,jbc,cd->jad", b, _INPUTS, b)
        out = np.einsum("kab,jbc,kdc->jad", k, sigma, k.conj())
        p = np.einsum("sab,jba->js", _PROJECTORS, out).real
        return p, (k, b, u, f1, sigma)

    def deviance(self, p: np.ndarray) -> float:
        mu = self.trials * np.maximum(p, _P_FLOOR)
        n = self.counts
        pos = n > 0
        x = np.where(pos, mu / np.where(pos, n, 1) - 1, 0)
        dev = np.where(pos, n * (x - np.log1p(x)), mu)
        return float(dev.sum() / self.total)

    def nll(self, p: np.ndarray) -> float:
        """Unnormalized Poisson NLL ``sum(mu - n ln mu)``."""
        return self.deviance(p) * self.total + self.saturated

    def __call__(self, x: np.ndarray):
        t = _t_from_params(x)
        p, (k, b, u, f1, sigma) = self.probabilities(t)
        pc = np.maximum(p, _P_FLOOR)
        value = self.deviance(p)
        g = (self.trials - self.counts / pc) / self.total
        q = np.einsum("js,sab->jab", g, _PROJECTORS)
        # R_j = sum_k K^+ Q_j K; C = sum_j rho_j B R_j + h.c.
        r = np.einsum("kba,jbc,kcd->jad", k.conj(), q, k)
        xmat = np.einsum("jab,bc,jcd->ad", _INPUTS, b, r)
        c = xmat + xmat.conj().T
        ct = u.conj().T @ c @ u
        d = u @ (ct * f1) @ u.conj().T
        w = np.einsum("jab,kbc,jcd->kad", q, k, sigma) + np.einsum("kab,bc->kac", k, d)
        coef = np.einsum("mab,kba->km", PAULI_BASIS, w)
        gt_re = 2 * coef.real
        gt_im = -2 * coef.imag
        grad = np.concatenate([np.diag(gt_re), gt_re[_TRIL_OFF], gt_im[_TRIL_OFF]])
        return value, grad


def _initial_t(opts: MleOptions) -> np.ndarray:
    start = CHI_IDENTITY.real + opts.init_perturbation * np.eye(4)
    # start is diagonal, so its Cholesky factor is too
    return np.linalg.cholesky(start).astype(complex)


def _run_lbfgs(fun, x0: np.ndarray, opts: MleOptions, to_chi, to_nll):
    history: list[float] = []
    last = {"x": x0}

    def callback(intermediate_result):
        last["x"] = intermediate_result.x
        history.append(to_nll(intermediate_result.fun))

    history.append(to_nll(fun(x0)[0]))
    res = minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=callback,
        options={
            "maxiter": opts.max_iterations,
            "ftol": opts.nll_tolerance,
            "gtol": 1e-12,
            "maxcor": 20,
        },
    )
    x = res.x
    history.append(to_nll(res.fun))
    # status 2 is a line-search stall at machine precision, which is a converged optimum here
    converged = res.status == 0 or (res.status == 2 and res.nit > 0)
    if not converged:
        raise MleConvergenceError(
            f"MLE did not converge after {res.nit} iterations: {res.message}",
            to_chi(last["x"]),
            history,
        )
    return x, history, int(res.nit)


def mle_fit(records: Sequence[TomographyRecord], opts: MleOptions | None = None) -> MleResult:
    opts = opts or MleOptions()
    counts, trials = _count_table(records)
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    objective = _ProcessObjective(counts, trials)

    def to_chi(x):
        t = _t_from_params(x)
        return project_trace_preserving(t.conj().T @ t)

    x0 = _params_from_t(_initial_t(opts))
    x, history, nit = _run_lbfgs(
        objective, x0, opts, to_chi, lambda dev: dev * objective.total + objective.saturated
    )
    chi = to_chi(x)
    rep = check_cp_tp(chi)
    p, _ = objective.probabilities(_t_from_params(x))
    return MleResult(
        chi=chi,
        nll=objective.nll(p),
        nll_history=history,
        iterations=nit,
        tp_defect=rep.tp_defect,
        min_eigenvalue=rep.min_eigenvalue,
    )


def mle_chi(records: Sequence[TomographyRecord], opts: MleOptions | None = None) -> np.ndarray:
    return mle_fit(records, opts).chi


# -- state MLE ---------------------------------------------------------------


class _StateObjective:
    def __init__(self, counts: np.ndarray, trials: np.ndarray):
        self.counts = counts
        self.trials = trials
        self.total = float(counts.sum())
        if self.total <= 0:
            raise ValueError("no counts for this input")

    @staticmethod
    def t_from_params(x):
        return np.array([[x[0], 0], [x[2] + 1j * x[3], x[1]]], dtype=complex)

    def __call__(self, x):
        t = self.t_from_params(x)
        s = t.conj().T @ t
        tau = np.trace(s).real
        p = np.einsum("sab,ba->s", _PROJECTORS, s).real / tau
        pc = np.maximum(p, _P_FLOOR)
        mu = self.trials * pc
        n = self.counts
        pos = n > 0
        xr = np.where(pos, mu / np.where(pos, n, 1) - 1, 0)
        value = float(np.where(pos, n * (xr - np.log1p(xr)), mu).sum() / self.total)
        g = (self.trials - n / pc) / self.total
        q = np.einsum("s,sab->ab", g, _PROJECTORS)
        gmat = (q - np.dot(g, p) * np.eye(2)) / tau
        w = t @ gmat
        grad = 2 * np.array([w[0, 0].real, w[1, 1].real, w[1, 0].real, w[1, 0].imag])
        return value, grad


def state_mle(records: Sequence[TomographyRecord], opts: MleOptions | None = None) -> np.ndarray:
    """Maximum-likelihood 2x2 density matrix from one input's six projector records."""
    opts = opts or MleOptions()
    by_proj = {r.projector_label: r for r in records}
    if len(by_proj) != len(records) or set(by_proj) != set(PROJECTOR_LABELS):
        raise ValueError("state_mle needs exactly one record per projector H, V, R, L, D, A")
    counts = np.array([by_proj[s].counts for s in PROJECTOR_LABELS], dtype=float)
    trials = np.array([by_proj[s].expected_trials for s in PROJECTOR_LABELS], dtype=float)
    objective = _StateObjective(counts, trials)

    def to_rho(x):
        t = objective.t_from_params(x)
        s = t.conj().T @ t
        return s / np.trace(s).real

    x0 = np.array([1 / math.sqrt(2), 1 / math.sqrt(2), 0.0, 0.0])
    x, _, _ = _run_lbfgs(objective, x0, opts, to_rho, lambda dev: dev)
    rho = to_rho(x)
    return 0.5 * (rho + rho.conj().T)


# -- datasets for known processes and sweeps ---------------------------------


def records_for_process(
    chi,
    cm: CountModel | None = None,
    *,
    exact: bool = True,
    stream: PoissonStream | None = None,
) -> list[TomographyRecord]:
    """Tomography records for an arbitrary chi, conditioned on retrieval."""
    cm = cm or CountModel(trials_per_setting=1.0, dark_rate=0.0)
    outputs = {}
    for j, inp in enumerate(INPUT_LABELS):
        out = apply_chi(chi, _INPUTS[j])
        out = 0.5 * (out + out.conj().T)
        prob = float(np.trace(out).real)
        outputs[inp] = (out / prob, min(prob, 1.0))
    return records_from_outputs(outputs, cm, exact=exact, stream=stream)


def fidelity_vs_time(
    mp: MemoryParams,
    cm: CountModel,
    times: Sequence[float],
    opts: MleOptions | None = None,
    *,
    exact: bool = False,
) -> FidelityCurve:
    """Reconstruct the memory at each storage time and record fidelity and efficiency.

    Sampled datasets use one Philox stream per time point, keyed by the
    count-model seed and the point's index.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("times must be nonempty")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    fids, effs, chis = [], [], []
    for i, t in enumerate(times):
        stream = None if exact else PoissonStream(cm.seed, i)
        records = tomography_dataset(mp, float(t), cm, exact=exact, stream=stream)
        chi = mle_chi(records, opts)
        chis.append(chi)
        fids.append(process_fidelity(chi, CHI_IDENTITY))
        effs.append(snapshot(mp, float(t)).mean_efficiency)
    return FidelityCurve(times, np.array(fids), np.array(effs), chis)
