"""CSV and JSON writers for spectra, pulse traces, fidelity curves and chi."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .eit_medium import PulseTrace, Spectrum
from .process_rep import chi_to_dict
from .tomography import FidelityCurve, MleResult

SIG_DIGITS = 15


def fmt(value: float, digits: int = SIG_DIGITS) -> str:
    return format(float(value), f".{digits}g")


def _csv(header: str, columns, digits: int) -> str:
    lines = [header]
    for row in zip(*columns):
        lines.append(",".join(fmt(v, digits) for v in row))
    return "\n".join(lines) + "\n"


def spectrum_csv(s: Spectrum, digits: int = SIG_DIGITS) -> str:
    return _csv("detuning_hz,transmission", (s.detunings, s.transmissions), digits)


def trace_csv(trace: PulseTrace, digits: int = SIG_DIGITS) -> str:
    return _csv("time_s,intensity", (trace.times, trace.intensities), digits)


def curve_csv(curve: FidelityCurve, digits: int = SIG_DIGITS) -> str:
    return _csv(
        "storage_time_s,process_fidelity,retrieval_efficiency",
        (curve.storage_times, curve.fidelities, curve.efficiencies),
        digits,
    )


def reconstruction_dict(result: MleResult) -> dict:
    out = chi_to_dict(result.chi)
    out.update(
        fidelity_to_identity=result.fidelity_to_identity,
        tp_defect=result.tp_defect,
        min_eigenvalue=result.min_eigenvalue,
        nll=result.nll,
    )
    return out


def to_json(data: dict) -> str:
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        raise TypeError(f"not JSON serializable: {type(o).__name__}")

    return json.dumps(data, indent=2, sort_keys=False, default=default) + "\n"


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
