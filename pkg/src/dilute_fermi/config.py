"""Run configuration: a sectioned key/value file.

Grammar (read by :mod:`configparser`)::

    [physical]
    rho_up = 1e-3          # spin densities
    rho_down = 1e-3
    delta = 0.25           # ε = ρ^(2/3 + δ), needs δ > 2/9
    alpha = 0.03           # smearing radius ρ_σ^(1/3 + α), needs 0 < α < 1/27
    a = 1.0                # scattering length, or give a potential instead:
    potential = square     # square | smooth | table | none
    R0 = 1.0
    V0 = 8.0
    table = path.csv       # for potential = table (columns r, V)

    [task]
    ...subcommand specific keys, see TASK_DEFAULTS...

    [io]
    output_dir = out
    seed = 0
    workers = 1
    json = true

Lists are comma separated.  Blank values mean "unset".  A JSON manifest
written by a previous run is accepted in place of the text file; its
``config`` member has the same three sections.
"""

from __future__ import annotations

import configparser
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .system import ConfigError, FermiSystem

SEED_ENV = "DILUTE_FERMI_SEED"
THREADS_ENV = "DILUTE_FERMI_THREADS"

PHYSICAL_DEFAULTS = {
    "rho_up": "1e-3", "rho_down": "1e-3", "delta": "0.25", "alpha": "0.03",
    "a": "", "potential": "none", "R0": "", "V0": "", "table": "",
}

TASK_DEFAULTS = {
    "q": "0,0,0",
    "sigma": "up",
    "smearing_radius": "",       # blank: ρ_σ^(1/3 + α)
    "max_samples": "1000000",
    "target_rel_err": "0.01",
    "method": "mc-importance",
    "x_values": "0.1,0.2,0.4,0.8,1.0",
    "s_values": "2,3",
    "q_values": "0,0.5,1,2,3,5",
    "xq_values": "0.25,0.5,1,2",
    "L_list": "20,28,40,56,80",
    "gap_threshold": "0.10",
    "rho_list": "1e-3,1e-4,1e-5",
    "q_over_kF": "0,0.5",
    "point_cap": "50000000",
}

IO_DEFAULTS = {"output_dir": "out", "seed": "", "workers": "", "json": "true"}


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


@dataclass
class RunConfig:
    physical: dict = field(default_factory=dict)
    task: dict = field(default_factory=dict)
    io: dict = field(default_factory=dict)

    # -- typed access -------------------------------------------------------

    def pf(self, key: str) -> float | None:
        v = self.physical.get(key, "")
        return float(v) if str(v).strip() != "" else None

    def tf(self, key: str) -> float:
        return float(self.task[key])

    def tlist(self, key: str) -> list[float]:
        return _floats(self.task[key])

    @property
    def seed(self) -> int:
        v = self.io.get("seed", "")
        if str(v).strip():
            return int(v)
        return int(os.environ.get(SEED_ENV, "0"))

    @property
    def workers(self) -> int:
        v = self.io.get("workers", "")
        if str(v).strip():
            return int(v)
        return int(os.environ.get(THREADS_ENV, "1"))

    @property
    def output_dir(self) -> Path:
        return Path(self.io.get("output_dir", "out"))

    @property
    def potential_kind(self) -> str:
        return str(self.physical.get("potential", "none")).strip().lower() or "none"

    def has_scattering_input(self) -> bool:
        return self.pf("a") is not None or self.potential_kind != "none"

    def system(self, a: float) -> FermiSystem:
        return FermiSystem(self.pf("rho_up"), self.pf("rho_down"), a,
                           self.pf("delta"), self.pf("alpha"))

    def as_dict(self) -> dict:
        return {"physical": dict(self.physical), "task": dict(self.task), "io": dict(self.io)}

    def validate(self) -> None:
        """Re-check every physical constraint with a message naming it."""
        for key in ("rho_up", "rho_down", "delta", "alpha"):
            try:
                if self.pf(key) is None:
                    raise ConfigError(f"[physical] {key} is required")
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"[physical] {key} is not a number: {self.physical[key]!r}")
        # FermiSystem performs the δ and α checks
        self.system(self.pf("a") or 0.0)
        if self.potential_kind not in ("none", "square", "smooth", "table"):
            raise ConfigError(f"unknown potential kind {self.potential_kind!r}")
        for key in ("max_samples", "target_rel_err"):
            try:
                float(self.task[key])
            except ValueError:
                raise ConfigError(f"[task] {key} is not a number: {self.task[key]!r}")


_DEFAULTS = {"physical": PHYSICAL_DEFAULTS, "task": TASK_DEFAULTS, "io": IO_DEFAULTS}


def _check_key(section: str, key: str) -> None:
    if key not in _DEFAULTS[section]:
        raise ConfigError(f"unknown key [{section}] {key}")


def _merge(section: str, given: dict) -> dict:
    out = dict(_DEFAULTS[section])
    for k, v in given.items():
        _check_key(section, k)
        out[k] = "" if v is None else str(v)
    return out


def from_sections(sections: dict) -> RunConfig:
    unknown = set(sections) - {"physical", "task", "io"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return RunConfig(*(_merge(s, sections.get(s) or {}) for s in ("physical", "task", "io")))


def load_config(path: str | Path | None) -> RunConfig:
    """Read a ``.ini``-style config or a JSON run manifest."""
    if path is None:
        return from_sections({})
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text()
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        doc = json.loads(text)
        return from_sections(doc.get("config", doc))
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep R0, V0, L_list as written
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return from_sections({s: dict(parser[s]) for s in parser.sections()})


def apply_overrides(cfg: RunConfig, items: list[str]) -> RunConfig:
    """Apply ``section.key=value`` overrides from the command line."""
    for item in items:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        lhs, value = item.split("=", 1)
        section, key = lhs.split(".", 1)
        if section not in ("physical", "task", "io"):
            raise ConfigError(f"unknown section in override {item!r}")
        _check_key(section, key)
        getattr(cfg, section)[key] = value
    return cfg
