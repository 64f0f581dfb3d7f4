import math

import numpy as np
import pytest

from qubitmem.measurement_sim import CountModel, PoissonStream, TomographyRecord, tomography_dataset
from qubitmem.memory_channel import MemoryParams, chi_of_memory
from qubitmem.process_rep import (
    CHI_IDENTITY,
    check_cp_tp,
    chi_from_kraus,
    process_fidelity,
    unitary_chi,
)
from qubitmem.qubit_core import I2, PROJECTOR_LABELS, X, Y, Z, projector, state_fidelity
from qubitmem.tomography import (
    FidelityCurve,
    MleConvergenceError,
    MleOptions,
    fidelity_vs_time,
    linear_inversion_chi,
    mle_chi,
    mle_fit,
    records_for_process,
    state_mle,
)
from conftest import random_cptp_kraus


def dephasing_kraus(lam):
    q = (1 - lam) / 2
    return [math.sqrt(1 - q) * I2, math.sqrt(q) * Z]


def depolarizing_kraus(w):
    # rho -> (1 - w) rho + w I/2
    return [math.sqrt(1 - 3 * w / 4) * I2] + [math.sqrt(w / 4) * p for p in (X, Y, Z)]


TEST_CHANNELS = {
    "identity": [I2],
    "x": [X],
    "z": [Z],
    "dephasing-0.2": dephasing_kraus(0.2),
    "dephasing-0.5": dephasing_kraus(0.5),
    "dephasing-0.8": dephasing_kraus(0.8),
    "depolarizing-0.1": depolarizing_kraus(0.1),
    "depolarizing-0.3": depolarizing_kraus(0.3),
}


def frob(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))


def test_linear_inversion_identity():
    li = linear_inversion_chi(records_for_process(CHI_IDENTITY))
    np.testing.assert_allclose(li.chi, CHI_IDENTITY, atol=1e-12)
    assert li.physical


def test_linear_inversion_dephasing():
    chi = linear_inversion_chi(records_for_process(chi_from_kraus(dephasing_kraus(0.8)))).chi
    np.testing.assert_allclose(chi, np.diag([0.9, 0, 0, 0.1]), atol=1e-10)


def test_linear_inversion_random_channels(rng):
    for _ in range(20):
        chi = chi_from_kraus(random_cptp_kraus(rng, int(rng.integers(1, 5))))
        np.testing.assert_allclose(linear_inversion_chi(records_for_process(chi)).chi, chi, atol=1e-10)


def test_linear_inversion_noisy_counts_flagged_not_raised():
    cm = CountModel(trials_per_setting=1e3, dark_rate=0.0)
    flagged = 0
    for seed in range(40):
        records = records_for_process(CHI_IDENTITY, cm, exact=False, stream=PoissonStream(seed))
        li = linear_inversion_chi(records)
        assert np.allclose(li.chi, li.chi.conj().T)
        assert np.trace(li.chi).real == pytest.approx(1.0, abs=1e-12)
        rep = check_cp_tp(li.chi)
        assert li.physical == rep.cp_ok
        flagged += not li.physical
    # a pure process sits on the boundary, so shot noise pushes it outside regularly
    assert flagged > 0


def test_linear_inversion_missing_setting():
    records = records_for_process(CHI_IDENTITY)[:-1]
    with pytest.raises(ValueError, match="missing"):
        linear_inversion_chi(records)


def test_linear_inversion_empty_basis_pair():
    records = []
    for r in records_for_process(CHI_IDENTITY):
        counts = 0 if r.input_label == "V" and r.projector_label in "DA" else r.counts
        records.append(TomographyRecord(r.input_label, r.projector_label, counts, r.expected_trials))
    with pytest.raises(ValueError, match="both counts"):
        linear_inversion_chi(records)


def test_mle_identity():
    assert process_fidelity(mle_chi(records_for_process(CHI_IDENTITY))) >= 0.9999


def test_mle_dephasing_matches_analytic():
    records = records_for_process(chi_from_kraus(dephasing_kraus(0.8)))
    chi = mle_chi(records)
    assert frob(chi, np.diag([0.9, 0, 0, 0.1])) <= 1e-4
    assert frob(chi, linear_inversion_chi(records).chi) <= 1e-4


@pytest.mark.parametrize("name", sorted(TEST_CHANNELS))
def test_oracle_equivalence(name):
    truth = chi_from_kraus(TEST_CHANNELS[name])
    records = records_for_process(truth)
    mle = mle_fit(records)
    li = linear_inversion_chi(records).chi
    assert frob(mle.chi, li) <= 1e-4
    assert frob(mle.chi, truth) <= 1e-4
    assert frob(li, truth) <= 1e-10
    assert mle.tp_defect <= 1e-6
    assert mle.min_eigenvalue >= -1e-8
    assert np.allclose(mle.chi, mle.chi.conj().T, atol=1e-10)


def test_oracle_equivalence_memory_channel():
    mp = MemoryParams(dephasing_rate=3e4, phase_offset=0.5)
    truth = chi_of_memory(mp, 6e-6)
    records = tomography_dataset(mp, 6e-6, CountModel(dark_rate=0.0), exact=True)
    assert frob(mle_chi(records), truth) <= 1e-4
    assert frob(linear_inversion_chi(records).chi, truth) <= 1e-10


def test_x_channel_peak():
    chi = mle_chi(records_for_process(unitary_chi(X)))
    assert chi[1, 1].real >= 0.9999


def test_random_cptp_recovery(rng):
    for _ in range(10):
        truth = chi_from_kraus(random_cptp_kraus(rng, int(rng.integers(1, 5))))
        assert frob(mle_chi(records_for_process(truth)), truth) <= 1e-4


def test_nll_history_non_increasing():
    cm = CountModel(seed=3)
    records = tomography_dataset(MemoryParams(), 7e-6, cm)
    result = mle_fit(records)
    h = np.array(result.nll_history)
    assert len(h) >= 3
    assert np.all(np.diff(h) <= 1e-9 * np.abs(h[:-1]).max())
    assert result.nll == pytest.approx(h[-1], rel=1e-9)


def test_sampled_output_physical():
    for seed in range(10):
        records = tomography_dataset(MemoryParams(), 16e-6, CountModel(trials_per_setting=300), stream=PoissonStream(seed))
        result = mle_fit(records)
        assert result.tp_defect <= 1e-6
        assert result.min_eigenvalue >= -1e-8


def test_mle_deterministic():
    records = tomography_dataset(MemoryParams(), 7e-6, CountModel(seed=5))
    np.testing.assert_array_equal(mle_chi(records), mle_chi(records))


def test_non_convergence_carries_state():
    records = tomography_dataset(MemoryParams(), 7e-6, CountModel(seed=5))
    with pytest.raises(MleConvergenceError) as info:
        mle_fit(records, MleOptions(max_iterations=1))
    err = info.value
    assert err.last_chi.shape == (4, 4)
    assert len(err.nll_history) >= 1


@pytest.mark.parametrize("kwargs", [{"max_iterations": 0}, {"nll_tolerance": 0.0}, {"init_perturbation": -1.0}])
def test_options_validation(kwargs):
    with pytest.raises(ValueError):
        MleOptions(**kwargs)


def test_mle_missing_settings():
    with pytest.raises(ValueError):
        mle_chi(records_for_process(CHI_IDENTITY)[:20])


def _state_records(rho, n=1.0, stream=None):
    records = []
    for s in PROJECTOR_LABELS:
        p = float(np.trace(projector(s) @ rho).real)
        counts = n * p if stream is None else stream.poisson(n * p)
        records.append(TomographyRecord("H", s, counts, n))
    return records


@pytest.mark.parametrize("rho", [projector("D"), I2 / 2, projector("L"), 0.7 * projector("H") + 0.3 * projector("A")])
def test_state_mle_exact(rho):
    np.testing.assert_allclose(state_mle(_state_records(rho)), rho, atol=1e-6)


def test_state_mle_sampled_r():
    rho = projector("R")
    fids = [state_fidelity(state_mle(_state_records(rho, 1e4, PoissonStream(seed))), rho) for seed in range(50)]
    assert np.median(fids) >= 0.995


def test_state_mle_needs_six_settings():
    with pytest.raises(ValueError):
        state_mle(_state_records(I2 / 2)[:5])


def test_fidelity_vs_time_ideal():
    curve = fidelity_vs_time(MemoryParams.ideal(), CountModel(), [0, 5e-6, 16e-6], exact=True)
    np.testing.assert_allclose(curve.fidelities, 1.0, atol=1e-8)


def test_fidelity_vs_time_calibrated_exact():
    times = [0, 1e-6, 2e-6, 4e-6, 7e-6, 10e-6, 13e-6, 16e-6]
    mp = MemoryParams()
    curve = fidelity_vs_time(mp, CountModel(seed=1), times, exact=True)
    assert np.all(curve.fidelities >= 0.91)
    assert np.all(np.diff(curve.fidelities) <= 1e-9)
    expected_eff = [0.5 * (mp.rail_h.efficiency(t) + mp.rail_v.efficiency(t)) for t in times]
    np.testing.assert_allclose(curve.efficiencies, expected_eff, atol=1e-10)
    other = fidelity_vs_time(mp, CountModel(seed=99), times, exact=True)
    np.testing.assert_array_equal(curve.fidelities, other.fidelities)


def test_fidelity_vs_time_rejects_bad_times():
    with pytest.raises(ValueError):
        fidelity_vs_time(MemoryParams(), CountModel(), [])
    with pytest.raises(ValueError):
        fidelity_vs_time(MemoryParams(), CountModel(), [1e-6, 1e-6])


def test_curve_length_check():
    with pytest.raises(ValueError):
        FidelityCurve(np.zeros(2), np.zeros(3), np.zeros(2))


def test_sweep_sampled_reproducible():
    times = [0.0, 8e-6]
    a = fidelity_vs_time(MemoryParams(), CountModel(seed=4), times)
    b = fidelity_vs_time(MemoryParams(), CountModel(seed=4), times)
    np.testing.assert_array_equal(a.fidelities, b.fidelities)
