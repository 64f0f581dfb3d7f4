"""Gated photon counting for polarization tomography.

Random numbers come from Philox4x64-10 keyed with ``(seed, stream)``; raw
64-bit outputs are turned into uniforms and Box-Muller normals here, so
datasets do not depend on numpy's distribution algorithms. Poisson variates
use CDF inversion below a mean of 30 and a rounded normal approximation above.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .memory_channel import MemoryParams, channel_output
from .qubit_core import PROJECTOR_LABELS, density_from_ket, ket, projector

INPUT_LABELS = ("H", "V", "R", "D")
BASIS_PAIRS = (("H", "V"), ("R", "L"), ("D", "A"))
DATASET_HEADER = ("input", "projector", "counts", "expected_trials")

POISSON_INVERSION_LIMIT = 30.0
_U64_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class CountModel:
    trials_per_setting: float = 1e4
    dark_rate: float = 100.0
    gate_width: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not self.trials_per_setting > 0:
            raise ValueError(f"trials_per_setting must be > 0, got {self.trials_per_setting}")
        if not self.dark_rate >= 0:
            raise ValueError(f"dark_rate must be >= 0, got {self.dark_rate}")
        if not self.gate_width > 0:
            raise ValueError(f"gate_width must be > 0, got {self.gate_width}")

    @property
    def dark_mean(self) -> float:
        return self.dark_rate * self.gate_width


@dataclass(frozen=True)
class TomographyRecord:
    """One (input, projector) setting.

    ``counts`` is an integer for sampled data and the exact expected count
    (a float) in exact-probability mode.
    """

    input_label: str
    projector_label: str
    counts: float
    expected_trials: float

    def __post_init__(self):
        if self.input_label not in INPUT_LABELS:
            raise ValueError(f"input label must be one of {INPUT_LABELS}, got {self.input_label!r}")
        if self.projector_label not in PROJECTOR_LABELS:
            raise ValueError(f"unknown projector label {self.projector_label!r}")
        if self.counts < 0:
            raise ValueError("counts must be nonnegative")


class PoissonStream:
    """Deterministic uniform/normal/Poisson variates from one Philox stream."""

    def __init__(self, seed: int, stream: int = 0):
        key = np.array([int(seed) & _U64_MASK, int(stream) & _U64_MASK], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)

    def uniform(self) -> float:
        """Uniform on [0, 1) with 53 random bits."""
        raw = int(self._bitgen.random_raw())
        return (raw >> 11) * 2.0**-53

    def normal(self) -> float:
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def poisson(self, mean: float) -> int:
        if mean < 0 or not math.isfinite(mean):
            raise ValueError(f"Poisson mean must be finite and >= 0, got {mean}")
        if mean == 0:
            return 0
        if mean < POISSON_INVERSION_LIMIT:
            u = self.uniform()
            k = 0
            prob = math.exp(-mean)
            cdf = prob
            while u > cdf and prob > 0:
                k += 1
                prob *= mean / k
                cdf += prob
            return k
        return max(0, int(math.floor(mean + math.sqrt(mean) * self.normal() + 0.5)))


def projection_probability(rho, label: str) -> float:
    p = float(np.trace(projector(label) @ np.asarray(rho)).real)
    return min(max(p, 0.0), 1.0)


def simulate_counts(
    p: float,
    cm: CountModel,
    rail_efficiency: float,
    stream: PoissonStream | None = None,
) -> int:
    """Poisson count with mean ``N * efficiency * p + dark_rate * gate_width``."""
    if not 0 <= p <= 1 + 1e-12:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    if not 0 <= rail_efficiency <= 1 + 1e-12:
        raise ValueError(f"rail efficiency must lie in [0, 1], got {rail_efficiency}")
    if stream is None:
        stream = PoissonStream(cm.seed)
    return stream.poisson(cm.trials_per_setting * rail_efficiency * p + cm.dark_mean)


def records_from_outputs(
    outputs: Mapping[str, tuple[np.ndarray, float]],
    cm: CountModel,
    *,
    exact: bool = False,
    stream: PoissonStream | None = None,
) -> list[TomographyRecord]:
    """Build the 24 records from per-input ``(rho_out, retrieval_prob)`` pairs."""
    if not exact and stream is None:
        stream = PoissonStream(cm.seed)
    records = []
    for inp in INPUT_LABELS:
        rho, eff = outputs[inp]
        expected = cm.trials_per_setting * eff
        for proj in PROJECTOR_LABELS:
            p = projection_probability(rho, proj)
            if exact:
                counts = expected * p + cm.dark_mean
            else:
                counts = simulate_counts(p, cm, eff, stream)
            records.append(TomographyRecord(inp, proj, counts, expected))
    return records


def input_state(label: str) -> np.ndarray:
    return density_from_ket(ket(label))


def tomography_dataset(
    mp: MemoryParams,
    t: float,
    cm: CountModel,
    *,
    exact: bool = False,
    stream: PoissonStream | None = None,
) -> list[TomographyRecord]:
    """Synthetic QPT data: inputs (H, V, R, D) x projectors (H, V, R, L, D, A)."""
    outputs = {}
    for inp in INPUT_LABELS:
        rho_out, p_ret, _ = channel_output(mp, input_state(inp), t)
        outputs[inp] = (rho_out, p_ret)
    return records_from_outputs(outputs, cm, exact=exact, stream=stream)


def _fmt(value: float) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def dataset_to_csv(records: Iterable[TomographyRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DATASET_HEADER)
    for r in records:
        writer.writerow([r.input_label, r.projector_label, _fmt(r.counts), _fmt(r.expected_trials)])
    return buf.getvalue()


def dataset_from_csv(text: str) -> list[TomographyRecord]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != DATASET_HEADER:
        raise ValueError(f"unexpected dataset header {header!r}")
    records = []
    for row in reader:
        if not row:
            continue
        inp, proj, counts, trials = row
        value = int(counts) if counts.isdigit() else float(counts)
        records.append(TomographyRecord(inp, proj, value, float(trials)))
    return records


def group_by_input(records: Sequence[TomographyRecord]) -> dict[str, dict[str, TomographyRecord]]:
    """Index records as ``{input: {projector: record}}``, rejecting gaps and duplicates."""
    table: dict[str, dict[str, TomographyRecord]] = {}
    for r in records:
        row = table.setdefault(r.input_label, {})
        if r.projector_label in row:
            raise ValueError(f"duplicate setting ({r.input_label}, {r.projector_label})")
        row[r.projector_label] = r
    return table
