"""Experiment configuration, drift/Lindblad presets and system resolution.

A config is a JSON object with the blocks ``system``, ``dataset``,
``optimizer``, ``training``, ``analysis`` plus ``output`` and ``threads``.
Unknown keys are rejected. See README for the full schema.

Drift expressions are sums of ``<coef><label>`` terms, e.g. ``0.8sx+0.2sy``.
A label ``s<a>`` means ``sigma_a (x) 1``, ``s<a><b>`` means
``sigma_a (x) sigma_b``, and an upper-case Pauli word such as ``IY`` is taken
literally. ``none`` (or ``gamma == 0``) gives no drift.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .dynamics import SystemSpec
from .grape import NCP_THRESHOLD, OptimConfig
from .lstm import TrainConfig
from .quantum import RngSeed, ketbra, kron, pauli

SINGLE_QUBIT_DRIFTS = ("sy", "0.2sx+0.8sy", "0.5sx+0.5sy", "0.8sx+0.2sy")
SINGLE_QUBIT_GAMMAS = (0.2, 0.4, 0.6, 0.8)
SPIN_CHAIN_DRIFTS = (
    "syy",
    "0.1sxx+0.8syy+0.1szz",
    "0.1sxx+0.6syy+0.3szz",
    "0.2sxx+0.6syy+0.2szz",
    "0.3sxx+0.6syy+0.1szz",
)
SPIN_CHAIN_GAMMAS = (0.6, 0.8)
# drift on the auxiliary qubit only
SECOND_QUBIT_DRIFTS = ("IY",)

LINDBLAD_PRESETS = {
    "none": (),
    "1": ("lower1",),
    "2": ("z1", "z2"),
    "3": ("z1", "lower1"),
}
DEFAULT_LINDBLAD_RATE = 0.01

SPLIT_STREAM = 2**64 - 1

_TERM = re.compile(r"([+-]?)\s*(\d*\.?\d*(?:[eE][+-]?\d+)?)\s*\*?\s*(s[xyz]{1,2}|[IXYZ]{2})")


class ConfigError(ValueError):
    pass


def _lindblad_op(name: str) -> np.ndarray:
    eye = pauli("I")
    return {
        "lower1": kron(ketbra(0, 1), eye),
        "z1": kron(pauli("Z"), eye),
        "z2": kron(eye, pauli("Z")),
    }[name]


def parse_drift(expr: str) -> np.ndarray:
    """Hermitian 4x4 operator for a drift expression (without gamma)."""
    text = expr.replace(" ", "")
    if text in ("", "none", "0"):
        return np.zeros((4, 4), dtype=complex)
    pos = 0
    total = np.zeros((4, 4), dtype=complex)
    for m in _TERM.finditer(text):
        if m.start() != pos or (pos > 0 and not m.group(1)):
            raise ConfigError(f"cannot parse drift expression {expr!r}")
        pos = m.end()
        coef = float(m.group(2)) if m.group(2) else 1.0
        if m.group(1) == "-":
            coef = -coef
        label = m.group(3)
        if label.startswith("s"):
            axes = label[1:].upper()
            op = kron(pauli(axes[0]), pauli(axes[1]) if len(axes) == 2 else pauli("I"))
        else:
            op = kron(pauli(label[0]), pauli(label[1]))
        total = total + coef * op
    if pos != len(text):
        raise ConfigError(f"cannot parse drift expression {expr!r}")
    return total


def lindblad_terms(preset: str, rates) -> tuple[tuple[np.ndarray, float], ...]:
    if preset not in LINDBLAD_PRESETS:
        raise ConfigError(f"unknown Lindblad preset {preset!r}; choose from {sorted(LINDBLAD_PRESETS)}")
    names = LINDBLAD_PRESETS[preset]
    if rates is None:
        rates = [DEFAULT_LINDBLAD_RATE] * len(names)
    rates = [float(r) for r in rates]
    if len(rates) != len(names):
        raise ConfigError(f"Lindblad preset {preset!r} needs {len(names)} rates, got {len(rates)}")
    if any(r < 0 for r in rates):
        raise ConfigError("Lindblad rates must be non-negative")
    return tuple((_lindblad_op(n), r) for n, r in zip(names, rates))


@dataclass
class SystemBlock:
    horizon: float = 6.0
    slots: int = 32
    drift: str = "sy"
    gamma: float = 0.2
    lindblad: str = "none"
    lindblad_rates: list | None = None

    def validate(self):
        if self.horizon <= 0 or self.slots < 1:
            raise ConfigError("system.horizon must be > 0 and system.slots >= 1")
        if self.gamma < 0:
            raise ConfigError("system.gamma must be >= 0")
        parse_drift(self.drift)
        lindblad_terms(self.lindblad, self.lindblad_rates)

    def tag(self) -> str:
        rates = "" if self.lindblad == "none" else ":" + ",".join(repr(float(r)) for r in self.resolved_rates())
        return f"drift={self.drift}|gamma={self.gamma!r}|lindblad={self.lindblad}{rates}|T={self.horizon!r}|n={self.slots}"

    def resolved_rates(self) -> list[float]:
        return [r for _, r in lindblad_terms(self.lindblad, self.lindblad_rates)]

    def build(self) -> SystemSpec:
        return SystemSpec(
            drift_h=self.gamma * parse_drift(self.drift),
            lindblads=lindblad_terms(self.lindblad, self.lindblad_rates),
            horizon=float(self.horizon),
            slots=int(self.slots),
            tag=self.tag(),
        )


@dataclass
class DatasetBlock:
    train: int = 500
    test: int = 100
    seed: int = 2024
    with_dcp: bool = True

    def validate(self):
        if self.train < 1 or self.test < 1:
            raise ConfigError("dataset.train and dataset.test must be >= 1")
        RngSeed(self.seed)


@dataclass
class OptimizerBlock:
    max_iters: int = 2000
    learning_rate: float = 0.05
    grad_tol: float = 1e-9
    ncp_target: float = NCP_THRESHOLD
    dcp_target: float = NCP_THRESHOLD

    def validate(self):
        self.ncp_config()
        self.dcp_config()
        if self.learning_rate <= 0:
            raise ConfigError("optimizer.learning_rate must be > 0")

    def ncp_config(self) -> OptimConfig:
        return OptimConfig(self.max_iters, self.ncp_target, self.learning_rate, self.grad_tol)

    def dcp_config(self) -> OptimConfig:
        return OptimConfig(self.max_iters, self.dcp_target, self.learning_rate, self.grad_tol)


@dataclass
class TrainingBlock:
    batch_size: int = 5
    epochs: int = 50
    learning_rate: float = 1e-3
    hidden_dim: int = 64
    seed: int = 7

    def validate(self):
        if self.batch_size < 1 or self.epochs < 0 or self.hidden_dim < 1:
            raise ConfigError("training.batch_size/hidden_dim must be >= 1 and epochs >= 0")
        if self.learning_rate <= 0:
            raise ConfigError("training.learning_rate must be > 0")
        RngSeed(self.seed)


@dataclass
class AnalysisBlock:
    eps: float = 0.1
    threshold: float = 0.9
    bins: int = 20

    def validate(self):
        if not 0 <= self.eps < 2:
            raise ConfigError("analysis.eps must lie in [0, 2)")
        if self.bins < 1:
            raise ConfigError("analysis.bins must be >= 1")


@dataclass
class ExperimentConfig:
    system: SystemBlock = field(default_factory=SystemBlock)
    dataset: DatasetBlock = field(default_factory=DatasetBlock)
    optimizer: OptimizerBlock = field(default_factory=OptimizerBlock)
    training: TrainingBlock = field(default_factory=TrainingBlock)
    analysis: AnalysisBlock = field(default_factory=AnalysisBlock)
    output: str = "runs/default"
    threads: int | None = None

    def validate(self) -> "ExperimentConfig":
        for block in (self.system, self.dataset, self.optimizer, self.training, self.analysis):
            try:
                block.validate()
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def train_config(self) -> TrainConfig:
        t = self.training
        return TrainConfig(
            batch_size=t.batch_size,
            epochs=t.epochs,
            learning_rate=t.learning_rate,
            hidden_dim=t.hidden_dim,
            seed=RngSeed(t.seed, 0),
            system=self.system.build(),
        )

    def init_seed(self) -> RngSeed:
        return RngSeed(self.training.seed, 1)

    def data_seed(self) -> RngSeed:
        return RngSeed(self.dataset.seed)

    def split_seed(self) -> RngSeed:
        return RngSeed(self.dataset.seed, SPLIT_STREAM)


_BLOCKS = {
    "system": SystemBlock,
    "dataset": DatasetBlock,
    "optimizer": OptimizerBlock,
    "training": TrainingBlock,
    "analysis": AnalysisBlock,
}


def _check_type(name: str, default: Any, value: Any) -> None:
    if default is None or value is None:
        return
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigError(f"{name}: expected {type(default).__name__}, got {value!r}")


def _coerce(cls, value: Any, name: str):
    if not isinstance(value, dict):
        raise ConfigError(f"{name} must be an object")
    defaults = asdict(cls())
    unknown = set(value) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    for key, v in value.items():
        _check_type(f"{name}.{key}", defaults[key], v)
    return cls(**value)


def config_from_dict(data: dict) -> ExperimentConfig:
    unknown = set(data) - set(_BLOCKS) - {"output", "threads"}
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    kwargs = {k: _coerce(cls, data[k], k) for k, cls in _BLOCKS.items() if k in data}
    for k in ("output", "threads"):
        if k in data:
            kwargs[k] = data[k]
    try:
        cfg = ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_config(path: Path | str | None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a JSON config (or start from defaults) and apply dotted-key overrides."""
    data: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    data = copy.deepcopy(data)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        parts = key.split(".")
        target = data
        for p in parts[:-1]:
            target = target.setdefault(p, {})
        target[parts[-1]] = value
    return config_from_dict(data)


def normalized_system(block: dict) -> dict:
    """System block with defaults filled in, for comparing datasets and configs."""
    return asdict(_coerce(SystemBlock, block, "system"))
