"""INI run configuration with strict key checking.

Every value is in SI units (Hz, s^-1, seconds). Keys absent from a section
take the library defaults; unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .eit_medium import EitError, EitParams, StorageTiming
from .measurement_sim import CountModel
from .memory_channel import MemoryParams, RailParams
from .tomography import MleOptions


class ConfigError(ValueError):
    pass


EIT_KEYS = {f.name for f in fields(EitParams)}
STORAGE_KEYS = {"eta0", "leak_fraction", "probe_duration", "write_off_time", "storage_duration", "grid_step"}
MEMORY_KEYS = {
    "rail_h_eta0",
    "rail_h_gamma_ground",
    "rail_v_eta0",
    "rail_v_gamma_ground",
    "phase_offset",
    "dephasing_rate",
    "noise_flux",
    "signal_flux",
}
COUNTING_KEYS = {f.name for f in fields(CountModel)}
MLE_KEYS = {f.name for f in fields(MleOptions)}
SECTIONS = {
    "eit": EIT_KEYS | STORAGE_KEYS,
    "memory": MEMORY_KEYS,
    "counting": COUNTING_KEYS,
    "mle": MLE_KEYS,
    "sweep": {"times"},
    "output": {"directory", "precision"},
}


@dataclass
class StorageSettings:
    eta0: float = 0.14
    leak_fraction: float = 0.3
    probe_duration: float = 7e-6
    write_off_time: float = 7e-6
    storage_duration: float = 7e-6
    grid_step: float = 1e-8


@dataclass
class RunConfig:
    eit: EitParams = field(default_factory=EitParams)
    storage: StorageSettings = field(default_factory=StorageSettings)
    memory: MemoryParams = field(default_factory=MemoryParams)
    counting: CountModel = field(default_factory=CountModel)
    mle: MleOptions = field(default_factory=MleOptions)
    times: tuple[float, ...] = (0.0, 1e-6, 2e-6, 4e-6, 7e-6, 10e-6, 13e-6, 16e-6)
    output_dir: Path = Path("out")
    precision: int = 15
    sections: frozenset = frozenset()

    def require(self, *names: str) -> None:
        missing = [n for n in names if n not in self.sections]
        if missing:
            raise ConfigError(f"config is missing section(s): {', '.join(missing)}")

    def timing(self, gate_width: float | None = None) -> StorageTiming:
        s = self.storage
        return StorageTiming(
            probe_duration=s.probe_duration,
            write_off_time=s.write_off_time,
            storage_duration=s.storage_duration,
            gate_width=self.counting.gate_width if gate_width is None else gate_width,
        )


def _float(section: str, key: str, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected a number, got {raw!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"[{section}] {key}: value must be finite")
    return value


def _int(section: str, key: str, raw: str) -> int:
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected an integer, got {raw!r}") from None


def _section_values(parser: configparser.ConfigParser, name: str) -> dict[str, str]:
    allowed = SECTIONS[name]
    values = dict(parser.items(name)) if parser.has_section(name) else {}
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise ConfigError(f"[{name}] unknown key(s): {', '.join(unknown)}")
    return values


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=(";", "#"), default_section="__none__"
    )
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from None

    unknown = sorted(set(parser.sections()) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")

    cfg = RunConfig(sections=frozenset(parser.sections()))
    try:
        eit = _section_values(parser, "eit")
        eit_kw = {k: _float("eit", k, v) for k, v in eit.items() if k in EIT_KEYS}
        cfg.eit = EitParams(**eit_kw)
        storage_kw = {k: _float("eit", k, v) for k, v in eit.items() if k in STORAGE_KEYS}
        cfg.storage = StorageSettings(**storage_kw)

        mem = {k: _float("memory", k, v) for k, v in _section_values(parser, "memory").items()}
        defaults = MemoryParams()
        rail_h = RailParams(
            eta0=mem.pop("rail_h_eta0", defaults.rail_h.eta0),
            gamma_ground=mem.pop("rail_h_gamma_ground", defaults.rail_h.gamma_ground),
        )
        rail_v = RailParams(
            eta0=mem.pop("rail_v_eta0", defaults.rail_v.eta0),
            gamma_ground=mem.pop("rail_v_gamma_ground", defaults.rail_v.gamma_ground),
        )
        cfg.memory = MemoryParams(rail_h=rail_h, rail_v=rail_v, **mem)

        counting = _section_values(parser, "counting")
        count_kw = {k: _float("counting", k, v) for k, v in counting.items() if k != "seed"}
        if "seed" in counting:
            count_kw["seed"] = _int("counting", "seed", counting["seed"])
        cfg.counting = CountModel(**count_kw)

        mle = _section_values(parser, "mle")
        mle_kw = {k: _float("mle", k, v) for k, v in mle.items() if k != "max_iterations"}
        if "max_iterations" in mle:
            mle_kw["max_iterations"] = _int("mle", "max_iterations", mle["max_iterations"])
        cfg.mle = MleOptions(**mle_kw)
    except ConfigError:
        raise
    except (ValueError, EitError) as exc:
        raise ConfigError(str(exc)) from None

    sweep = _section_values(parser, "sweep")
    if "times" in sweep:
        parts = [p.strip() for p in sweep["times"].replace("\n", ",").split(",") if p.strip()]
        times = tuple(_float("sweep", "times", p) for p in parts)
        if not times:
            raise ConfigError("[sweep] times is empty")
        if any(b <= a for a, b in zip(times, times[1:])) or times[0] < 0:
            raise ConfigError("[sweep] times must be nonnegative and strictly increasing")
        cfg.times = times

    output = _section_values(parser, "output")
    if "directory" in output:
        cfg.output_dir = Path(output["directory"])
    if "precision" in output:
        cfg.precision = _int("output", "precision", output["precision"])
        if not 12 <= cfg.precision <= 17:
            raise ConfigError("[output] precision must be between 12 and 17 significant digits")
    return cfg


def default_config_text() -> str:
    return resources.files("qubitmem").joinpath("default.ini").read_text()


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return parse_config(default_config_text(), "default.ini")
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))
