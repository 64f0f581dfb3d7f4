import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qubitmem.eit_medium import (
    EitError,
    EitParams,
    Spectrum,
    StorageTiming,
    calibrate_to_fwhm,
    calibration_grid,
    fwhm,
    group_delay,
    retrieval_efficiency,
    storage_timetrace,
    transmission_spectrum,
)

GRID = calibration_grid(90e3)


@pytest.fixture(scope="module")
def calibrated():
    return calibrate_to_fwhm(90e3, d=4.0)


def test_perfect_dark_state_is_transparent():
    p = EitParams(gamma_ground=0.0)
    s = transmission_spectrum(p, [-1e3, 0.0, 1e3])
    assert s.transmissions[1] == 1.0


def test_no_coupling_gives_bare_absorption():
    p = EitParams(omega_c=0.0, gamma_ground=0.0, optical_depth=4.0)
    s = transmission_spectrum(p, [-1e3, 0.0, 1e3])
    assert s.transmissions[1] == pytest.approx(math.exp(-4.0), rel=1e-12)


def test_far_from_window_reaches_absorption_floor():
    p = EitParams(omega_c=2 * math.pi * 0.3e6, gamma_ground=0.0)
    # well outside the window but well inside the 5.75 MHz absorption line
    t = transmission_spectrum(p, [50e3, 80e3]).transmissions
    assert t[-1] == pytest.approx(math.exp(-4.0), rel=0.3)


def test_calibrated_spectrum_fwhm(calibrated):
    assert fwhm(transmission_spectrum(calibrated, GRID)) == pytest.approx(90e3, rel=0.02)
    assert fwhm(transmission_spectrum(calibrated, GRID)) == pytest.approx(90e3, rel=0.005)


@pytest.mark.parametrize("grid", [[], [0.0, 1.0, 1.0], [1.0, 0.0]])
def test_bad_grids(grid):
    with pytest.raises(EitError):
        transmission_spectrum(EitParams(), grid)


def test_fwhm_lorentzian_oracle():
    w = 3.0e3
    x = np.linspace(-50 * w, 50 * w, 20001)
    y = 1 / (1 + (x / w) ** 2)
    floor = y[0]
    # closed form with the edge floor: half level (1 + floor)/2
    exact = 2 * w * math.sqrt((1 - floor) / (1 + floor))
    got = fwhm(Spectrum(x, y))
    assert got == pytest.approx(2 * w, rel=0.005)
    assert got == pytest.approx(exact, rel=1e-4)


def test_fwhm_flat_spectrum():
    with pytest.raises(EitError, match="no interior peak"):
        fwhm(Spectrum(np.linspace(0, 1, 11), np.full(11, 0.5)))


def test_fwhm_peak_at_boundary():
    x = np.linspace(0, 1, 11)
    with pytest.raises(EitError):
        fwhm(Spectrum(x, 1 - x))


def test_calibration_round_trip():
    original = EitParams(omega_c=2 * math.pi * 1.4e6)
    w1 = fwhm(transmission_spectrum(original, calibration_grid(150e3)))
    target = fwhm(transmission_spectrum(original, calibration_grid(w1)))
    found = calibrate_to_fwhm(target, d=original.optical_depth, gamma_ground=original.gamma_ground)
    assert found.omega_c == pytest.approx(original.omega_c, rel=0.01)


@pytest.mark.parametrize("target", [0.0, -1.0, math.nan])
def test_calibration_unreachable(target):
    with pytest.raises(EitError):
        calibrate_to_fwhm(target)


def test_calibration_bracket_failure_reports_widths():
    # no coupling strength opens a window in an optically thin, fast-decohering medium
    with pytest.raises(EitError, match="bracket"):
        calibrate_to_fwhm(1.0, d=4.0, gamma_ground=1e9)


def test_retrieval_efficiency_examples():
    p = EitParams(gamma_ground=0.5 / 20e-6)
    assert retrieval_efficiency(p, 0.3, 0.0) == 0.3
    assert retrieval_efficiency(replace(p, gamma_ground=0.0), 0.3, 1.0) == 0.3
    assert retrieval_efficiency(p, 0.2, 16e-6) == pytest.approx(0.2 * math.exp(-0.8), rel=1e-12)
    assert retrieval_efficiency(p, 0.2, 16e-6) == pytest.approx(0.0899, abs=5e-5)


def test_retrieval_efficiency_monotone():
    p = EitParams()
    values = [retrieval_efficiency(p, 0.5, t) for t in np.linspace(0, 50e-6, 30)]
    assert all(b <= a for a, b in zip(values, values[1:]))


@settings(max_examples=60, deadline=None)
@given(
    d=st.floats(0, 20),
    gamma=st.floats(1e5, 1e8),
    omega=st.floats(0, 1e8),
    g12=st.floats(0, 1e6),
)
def test_transmission_bounded_and_symmetric(d, gamma, omega, g12):
    p = EitParams(optical_depth=d, gamma_excited=gamma, omega_c=omega, gamma_ground=g12)
    grid = np.linspace(-2e6, 2e6, 401)
    t = transmission_spectrum(p, grid).transmissions
    assert np.all(t >= 0) and np.all(t <= 1 + 1e-12)
    np.testing.assert_allclose(t, t[::-1], atol=1e-12)


def test_fwhm_monotone_in_coupling():
    omegas = 2 * math.pi * np.linspace(0.6e6, 1.6e6, 10)
    widths = [fwhm(transmission_spectrum(EitParams(omega_c=o), GRID)) for o in omegas]
    assert all(b > a for a, b in zip(widths, widths[1:]))


# -- time trace --------------------------------------------------------------

TIMING = StorageTiming(probe_duration=7e-6, write_off_time=7e-6, storage_duration=7e-6, gate_width=1e-6)


def test_pure_leak_is_delayed_input():
    p = EitParams()
    tr = storage_timetrace(p, eta0=0.0, leak_fraction=1.0, timing=TIMING, grid_step=1e-8)
    delay = group_delay(p)
    inside = (tr.times >= delay + 1e-8) & (tr.times + 1e-8 <= delay + 7e-6)
    assert np.allclose(tr.intensities[inside], 1.0)
    assert np.all(tr.intensities[(tr.times + 1e-8 <= delay) | (tr.times >= delay + 7e-6)] == 0)
    assert tr.retrieved_fraction == 0
    assert tr.energy() == pytest.approx(1.0, abs=1e-9)


def test_lossless_retrieval():
    p = EitParams(gamma_ground=0.0)
    timing = replace(TIMING, storage_duration=1e-6)
    tr = storage_timetrace(p, eta0=1.0, leak_fraction=0.0, timing=timing, grid_step=1e-9)
    # read window of one pulse length holds 1 - exp(-4) of the exponential pulse
    assert tr.retrieved_fraction == pytest.approx(1 - math.exp(-4), rel=1e-9)
    long_timing = StorageTiming(probe_duration=7e-6, write_off_time=7e-6, storage_duration=1e-6, gate_width=7e-6)
    assert storage_timetrace(p, 1.0, 0.0, long_timing, 1e-9).gated_fraction == pytest.approx(1 - math.exp(-4))


def test_retrieval_peak_starts_at_read_time():
    p = calibrate_to_fwhm(90e3)
    tr = storage_timetrace(p, eta0=0.14, leak_fraction=0.3, timing=TIMING, grid_step=1e-8)
    read = TIMING.read_time
    after = tr.times >= read
    assert tr.intensities[after].max() > 0
    # dark between the end of the leaked pulse and the read-out
    gap = (tr.times > group_delay(p) + 7e-6 + 1e-8) & (tr.times + 1e-8 < read)
    assert gap.any() and np.all(tr.intensities[gap] == 0)
    i_peak = np.argmax(np.where(after, tr.intensities, 0))
    assert tr.times[i_peak] == pytest.approx(read, abs=2e-8)


def test_grid_step_too_coarse():
    with pytest.raises(EitError):
        storage_timetrace(EitParams(), 0.1, 0.1, TIMING, grid_step=7e-6)


def test_gate_longer_than_read_window_rejected():
    with pytest.raises(EitError):
        StorageTiming(probe_duration=1e-6, gate_width=2e-6)


def test_energy_conserved_random(rng):
    for _ in range(100):
        eta0 = rng.uniform()
        leak = rng.uniform(0, 1 - eta0)
        p = EitParams(omega_c=2 * math.pi * rng.uniform(0.3e6, 3e6), gamma_ground=rng.uniform(0, 1e5))
        timing = StorageTiming(
            probe_duration=rng.uniform(1e-6, 10e-6),
            write_off_time=rng.uniform(1e-6, 10e-6),
            storage_duration=rng.uniform(0.1e-6, 20e-6),
            gate_width=0.5e-6,
        )
        step = timing.probe_duration / rng.uniform(3, 500)
        tr = storage_timetrace(p, eta0, leak, timing, step)
        assert np.all(tr.intensities >= 0)
        assert tr.energy() <= 1 + 1e-9
