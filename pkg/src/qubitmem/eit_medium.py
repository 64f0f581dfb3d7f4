"""Effective Lambda-system EIT medium.

Rates (``gamma_excited``, ``omega_c``, ``gamma_ground``) are angular rates in
s^-1. Detuning grids and linewidths are ordinary frequencies in Hz, converted
with a factor 2*pi where they enter the susceptibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

RB_D1_GAMMA = 2 * math.pi * 5.75e6
# Fitted with calibrate_to_fwhm(90e3, d=4): 2*pi * 1.0447 MHz.
CALIBRATED_OMEGA_C = 6.563945e6


class EitError(ValueError):
    pass


@dataclass(frozen=True)
class EitParams:
    optical_depth: float = 4.0
    gamma_excited: float = RB_D1_GAMMA
    omega_c: float = CALIBRATED_OMEGA_C
    gamma_ground: float = 2.5e4
    probe_detuning_offset: float = 100e6  # one-photon detuning in Hz; not modelled

    def __post_init__(self):
        for name in ("optical_depth", "gamma_excited", "omega_c", "gamma_ground"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise EitError(f"{name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class Spectrum:
    detunings: np.ndarray
    transmissions: np.ndarray

    def __post_init__(self):
        if len(self.detunings) != len(self.transmissions):
            raise EitError("detunings and transmissions differ in length")


@dataclass(frozen=True)
class StorageTiming:
    probe_duration: float = 7e-6
    write_off_time: float = 7e-6
    storage_duration: float = 7e-6
    gate_width: float = 1e-6

    def __post_init__(self):
        for name in ("probe_duration", "write_off_time", "storage_duration", "gate_width"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise EitError(f"{name} must be positive, got {value}")
        if self.gate_width > self.read_window:
            raise EitError(
                f"gate_width {self.gate_width} exceeds the read window {self.read_window}"
            )

    @property
    def read_window(self) -> float:
        return self.probe_duration

    @property
    def read_time(self) -> float:
        return self.write_off_time + self.storage_duration


@dataclass(frozen=True)
class PulseTrace:
    times: np.ndarray
    intensities: np.ndarray
    input_energy: float
    leaked_fraction: float
    retrieved_fraction: float
    gated_fraction: float

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def energy(self) -> float:
        """Output energy as a fraction of the input pulse energy."""
        return float(np.sum(self.intensities) * self.step / self.input_energy)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise EitError("detuning grid is empty")
    if not np.all(np.isfinite(grid)):
        raise EitError("detuning grid contains non-finite values")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise EitError("detuning grid must be strictly increasing")
    return grid


def susceptibility_factor(p: EitParams, detuning_hz) -> np.ndarray:
    """Normalized complex probe response L(delta); L = 1 on bare resonance."""
    delta = 2 * math.pi * np.asarray(detuning_hz, dtype=float)
    half_gamma = p.gamma_excited / 2
    if half_gamma == 0:
        return np.zeros_like(delta, dtype=complex)
    if p.omega_c == 0:
        # the (gamma_ground - i delta) factor cancels
        return half_gamma / (half_gamma - 1j * delta)
    ground = p.gamma_ground - 1j * delta
    return half_gamma * ground / ((half_gamma - 1j * delta) * ground + (p.omega_c / 2) ** 2)


def transmission_spectrum(p: EitParams, grid: Sequence[float]) -> Spectrum:
    grid = _check_grid(grid)
    t = np.exp(-p.optical_depth * susceptibility_factor(p, grid).real)
    return Spectrum(grid, np.minimum(t, 1.0))


def fwhm(s: Spectrum) -> float:
    """Width of the transparency peak measured above the absorption floor.

    The floor is the lower of the two edge samples; crossings are located by
    linear interpolation between grid points.
    """
    x = np.asarray(s.detunings, dtype=float)
    y = np.asarray(s.transmissions, dtype=float)
    if x.size < 3:
        raise EitError("no interior peak: spectrum too short")
    i_peak = int(np.argmax(y))
    floor = min(y[0], y[-1])
    peak = y[i_peak]
    if peak - floor <= 1e-12 * max(abs(peak), 1.0):
        raise EitError("no interior peak")
    if i_peak == 0 or i_peak == x.size - 1:
        raise EitError("peak at grid boundary")
    half = floor + 0.5 * (peak - floor)

    left = i_peak
    while left > 0 and y[left] >= half:
        left -= 1
    right = i_peak
    while right < x.size - 1 and y[right] >= half:
        right += 1
    if y[left] >= half or y[right] >= half:
        raise EitError("peak at grid boundary: half-maximum not reached inside grid")

    def cross(i_out: int, i_in: int) -> float:
        y0, y1 = y[i_out], y[i_in]
        return x[i_out] + (half - y0) * (x[i_in] - x[i_out]) / (y1 - y0)

    return float(cross(right, right - 1) - cross(left, left + 1))


def calibration_grid(target_fwhm: float, points: int = 4001) -> np.ndarray:
    """Symmetric detuning grid spanning +-10 target widths."""
    span = 10.0 * target_fwhm
    return np.linspace(-span, span, points)


def _try_fwhm(p: EitParams, grid) -> float | None:
    try:
        return fwhm(transmission_spectrum(p, grid))
    except EitError:
        return None


def calibrate_to_fwhm(
    target_fwhm: float,
    d: float = 4.0,
    gamma_excited: float = RB_D1_GAMMA,
    gamma_ground: float = 2.5e4,
    *,
    rel_tol: float = 1e-5,
    max_iter: int = 200,
) -> EitParams:
    """Find the coupling Rabi frequency giving a transparency window of ``target_fwhm`` Hz.

    Bisection on log(omega_c) after a doubling scan for a bracket. Widths are
    evaluated on :func:`calibration_grid`.
    """
    if not (math.isfinite(target_fwhm) and target_fwhm > 0):
        raise EitError(f"target FWHM {target_fwhm} is unreachable")
    grid = calibration_grid(target_fwhm)
    base = EitParams(optical_depth=d, gamma_excited=gamma_excited, gamma_ground=gamma_ground)

    def width(omega):
        return _try_fwhm(replace(base, omega_c=omega), grid)

    scale = max(gamma_excited, 2 * math.pi * target_fwhm)
    lo, hi = None, None
    lo_w = hi_w = None
    seen = []
    for k in range(-30, 8):
        omega = scale * 2.0**k
        w = width(omega)
        seen.append((omega, w))
        if w is None:
            if lo is not None:
                break
            continue
        if w < target_fwhm:
            lo, lo_w = omega, w
        else:
            if lo is not None:
                hi, hi_w = omega, w
            break
    if lo is None or hi is None:
        widths = [w for _, w in seen if w is not None]
        raise EitError(
            f"could not bracket target FWHM {target_fwhm:g} Hz; "
            f"bracketing widths ranged over {min(widths, default=float('nan')):g}"
            f"..{max(widths, default=float('nan')):g} Hz"
        )

    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        w = width(mid)
        if w is None:
            raise EitError(f"FWHM undefined at omega_c={mid:g} inside bracket [{lo_w:g}, {hi_w:g}] Hz")
        if abs(w - target_fwhm) <= rel_tol * target_fwhm:
            return replace(base, omega_c=mid)
        if w < target_fwhm:
            lo, lo_w = mid, w
        else:
            hi, hi_w = mid, w
        if hi / lo - 1 < 1e-15:
            break
    return replace(base, omega_c=math.sqrt(lo * hi))


def retrieval_efficiency(p: EitParams | float, eta0: float, storage_time: float) -> float:
    """``eta0 * exp(-2 gamma_ground t)``; accepts EitParams or the bare rate."""
    gamma = p.gamma_ground if isinstance(p, EitParams) else float(p)
    if not 0 <= eta0 <= 1:
        raise EitError(f"eta0 must lie in [0, 1], got {eta0}")
    if storage_time < 0:
        raise EitError(f"storage time must be >= 0, got {storage_time}")
    return eta0 * math.exp(-2 * gamma * storage_time)


def group_delay(p: EitParams) -> float:
    """Slow-light delay ``d * Gamma / Omega_c^2`` at two-photon resonance, in seconds."""
    if p.omega_c == 0:
        return 0.0
    return p.optical_depth * p.gamma_excited / p.omega_c**2


def _box_bin_average(t0: np.ndarray, dt: float, start: float, stop: float) -> np.ndarray:
    overlap = np.clip(np.minimum(t0 + dt, stop) - np.maximum(t0, start), 0.0, None)
    return overlap / dt


def _exp_bin_average(t0: np.ndarray, dt: float, start: float, tau: float) -> np.ndarray:
    a = np.clip(t0 - start, 0.0, None)
    b = np.clip(t0 + dt - start, 0.0, None)
    return (np.exp(-a / tau) - np.exp(-b / tau)) / dt


def storage_timetrace(
    p: EitParams,
    eta0: float,
    leak_fraction: float,
    timing: StorageTiming,
    grid_step: float,
) -> PulseTrace:
    """Phenomenological output intensity for one write/store/read cycle.

    Intensities are averages over each grid bin, normalized to the input peak,
    so ``sum(intensities) * grid_step`` is the output energy in units of the
    probe pulse duration. The leaked part is the input pulse delayed by the
    slow-light group delay; the retrieved part starts at the read time and
    decays with time constant ``probe_duration / 4``.
    """
    if not 0 <= leak_fraction <= 1:
        raise EitError(f"leak_fraction must lie in [0, 1], got {leak_fraction}")
    if not 0 <= eta0 <= 1:
        raise EitError(f"eta0 must lie in [0, 1], got {eta0}")
    if leak_fraction + eta0 > 1 + 1e-12:
        raise EitError("leak_fraction + eta0 exceeds 1")
    if not (grid_step > 0 and grid_step < timing.probe_duration):
        raise EitError(
            f"grid_step {grid_step:g} s must be positive and shorter than the "
            f"probe duration {timing.probe_duration:g} s"
        )

    pulse = timing.probe_duration
    delay = group_delay(p)
    tau = pulse / 4
    t_read = timing.read_time
    t_end = max(t_read + timing.read_window, delay + pulse)
    n = int(math.ceil(t_end / grid_step))
    times = np.arange(n) * grid_step

    leaked = leak_fraction * _box_bin_average(times, grid_step, delay, delay + pulse)
    eta = retrieval_efficiency(p, eta0, timing.storage_duration)
    # pulse energy is `pulse` in these units, so scale by eta * pulse
    retrieved = eta * pulse * _exp_bin_average(times, grid_step, t_read, tau)
    intensities = leaked + retrieved

    leaked_energy = float(np.sum(leaked) * grid_step / pulse)
    retrieved_energy = float(np.sum(retrieved) * grid_step / pulse)
    gated = eta * (1 - math.exp(-timing.gate_width / tau))
    return PulseTrace(times, intensities, pulse, leaked_energy, retrieved_energy, gated)
