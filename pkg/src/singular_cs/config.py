"""Simulation configuration: dataclasses, document parsing and serialization.

A configuration document is YAML or JSON with the keys below; everything but
``t_final`` has a default.

    kernel:       {kind: singular | cucker_smale, alpha, K, beta, floor}
    n, dim:       positive integers
    normalization: over_n | unnormalized
    t_final:      positive real
    initial:      {scenario: NAME} | {positions: [[..]], velocities: [[..]]}
                  | {random: {box, speed, min_distance}}
    step_control: StepControl fields
    output:       {cadence, out_dir, reproducible}
    seed:         integer in [0, 2**64)

The published JSON schema lives in ``docs/config.schema.json``.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, fields, replace
from typing import Any

import numpy as np
import yaml

from .errors import InvalidParameter, SchemaError
from .integrator import StepControl
from .model import Normalization, ParticleSystem
from .weights import KernelKind, WeightKernel

DEFAULT_FLOOR = 1e-10


@dataclass(frozen=True)
class RandomCloud:
    """Positions uniform in [-box, box]^d, velocities uniform in the ball of radius ``speed``."""

    box: float = 1.0
    speed: float = 1.0
    min_distance: float = 1e-3


@dataclass(frozen=True)
class InitialCondition:
    scenario: str | None = None
    positions: tuple | None = None
    velocities: tuple | None = None
    random: RandomCloud | None = None

    @property
    def kind(self) -> str:
        if self.scenario is not None:
            return "scenario"
        if self.positions is not None:
            return "explicit"
        return "random"


@dataclass(frozen=True)
class OutputConfig:
    cadence: float | None = None  # defaults to t_final / 200
    out_dir: str | None = None
    reproducible: bool = True


@dataclass(frozen=True)
class SimConfig:
    kernel: WeightKernel = field(default_factory=lambda: WeightKernel.singular(0.3, DEFAULT_FLOOR))
    n_particles: int = 2
    dim: int = 1
    normalization: Normalization = Normalization.OVER_N
    t_final: float = 1.0
    initial: InitialCondition = field(default_factory=lambda: InitialCondition(random=RandomCloud()))
    step_control: StepControl = field(default_factory=StepControl)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "normalization", Normalization(self.normalization))
        if self.n_particles < 1:
            raise SchemaError("n", "must be a positive integer")
        if self.dim < 1:
            raise SchemaError("dim", "must be a positive integer")
        if not (math.isfinite(self.t_final) and self.t_final > 0):
            raise SchemaError("t_final", "must be a positive finite number")
        if not 0 <= self.seed < 2**64:
            raise SchemaError("seed", "must lie in [0, 2**64)")
        if self.output.cadence is not None and not self.output.cadence > 0:
            raise SchemaError("output.cadence", "must be positive")
        init = self.initial
        if init.kind == "explicit":
            for name in ("positions", "velocities"):
                arr = np.asarray(getattr(init, name), dtype=float)
                if arr.shape != (self.n_particles, self.dim):
                    raise SchemaError(
                        f"initial.{name}", f"shape {arr.shape} does not match (n, dim) = ({self.n_particles}, {self.dim})"
                    )
                if not np.all(np.isfinite(arr)):
                    raise SchemaError(f"initial.{name}", "entries must be finite")
        elif init.kind == "scenario":
            from .scenarios import SCENARIOS

            if init.scenario not in SCENARIOS:
                raise SchemaError("initial.scenario", f"unknown scenario {init.scenario!r}; known: {sorted(SCENARIOS)}")
            base = SCENARIOS[init.scenario].config()
            if (base.n_particles, base.dim) != (self.n_particles, self.dim):
                raise SchemaError(
                    "initial.scenario",
                    f"scenario {init.scenario!r} has (n, dim) = ({base.n_particles}, {base.dim})",
                )
        else:
            cloud = init.random
            if not (cloud.box > 0 and cloud.speed >= 0 and cloud.min_distance >= 0):
                raise SchemaError("initial.random", "box must be > 0, speed and min_distance >= 0")

    # -- derived objects -----------------------------------------------------

    def initial_state(self) -> ParticleSystem:
        init = self.initial
        if init.kind == "explicit":
            X, V = np.array(init.positions, dtype=float), np.array(init.velocities, dtype=float)
        elif init.kind == "scenario":
            from .scenarios import SCENARIOS

            base = SCENARIOS[init.scenario].config().initial_state()
            X, V = base.positions, base.velocities
        else:
            X, V = random_cloud(self.n_particles, self.dim, self.seed, init.random)
        return ParticleSystem(0.0, X, V, normalization=self.normalization)

    def refined(self, scale: float) -> "SimConfig":
        """Tolerances, event thresholds and kernel floor multiplied by ``scale``."""
        kernel = self.kernel.with_floor(self.kernel.floor * scale) if self.kernel.floor else self.kernel
        return replace(self, kernel=kernel, step_control=self.step_control.tightened(scale))

    def with_overrides(self, alpha=None, n=None, dim=None, t_final=None, seed=None, normalize=None) -> "SimConfig":
        """Apply command-line style overrides; ``None`` leaves a value unchanged."""
        doc = self.to_dict()
        if alpha is not None:
            doc["kernel"] = {**doc["kernel"], "kind": "singular", "alpha": alpha}
            doc["kernel"].pop("K", None)
            doc["kernel"].pop("beta", None)
        for key, value in (("n", n), ("dim", dim), ("t_final", t_final), ("seed", seed), ("normalization", normalize)):
            if value is not None:
                doc[key] = value
        return parse_config(doc)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        k = self.kernel
        if k.kind is KernelKind.SINGULAR:
            kernel = {"kind": k.kind.value, "alpha": k.alpha, "floor": k.floor}
        else:
            kernel = {"kind": k.kind.value, "K": k.K, "beta": k.beta}
        init = self.initial
        if init.kind == "scenario":
            initial: dict[str, Any] = {"scenario": init.scenario}
        elif init.kind == "explicit":
            initial = {"positions": [list(r) for r in init.positions], "velocities": [list(r) for r in init.velocities]}
        else:
            initial = {"random": {f.name: getattr(init.random, f.name) for f in fields(RandomCloud)}}
        return {
            "kernel": kernel,
            "n": self.n_particles,
            "dim": self.dim,
            "normalization": self.normalization.value,
            "t_final": self.t_final,
            "initial": initial,
            "step_control": {f.name: getattr(self.step_control, f.name) for f in fields(StepControl)},
            "output": {f.name: getattr(self.output, f.name) for f in fields(OutputConfig)},
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def random_cloud(n: int, dim: int, seed: int, cloud: RandomCloud = RandomCloud(), max_tries: int = 10_000):
    """Seeded positions and velocities; a candidate closer than ``min_distance`` to an accepted particle is redrawn."""
    rng = np.random.default_rng(seed)
    X = np.empty((n, dim))
    for i in range(n):
        for _ in range(max_tries):
            x = rng.uniform(-cloud.box, cloud.box, dim)
            if i == 0 or np.linalg.norm(X[:i] - x, axis=1).min() >= cloud.min_distance:
                X[i] = x
                break
        else:
            raise InvalidParameter("could not place particles with the requested minimum distance")
    direction = rng.normal(size=(n, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = cloud.speed * rng.uniform(0.0, 1.0, n) ** (1.0 / dim)
    return X, direction * radius[:, None]


# ---------------------------------------------------------------------------
# parsing

_TOP = {"kernel", "n", "dim", "normalization", "t_final", "initial", "step_control", "output", "seed"}
_KERNEL = {"kind", "alpha", "K", "beta", "floor"}
_INITIAL = {"scenario", "positions", "velocities", "random"}


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e-10`` (no dot) as a float, as YAML 1.2 and JSON do."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


def _reject_unknown(doc: dict, allowed: set, path: str) -> None:
    if not isinstance(doc, dict):
        raise SchemaError(path or "<root>", f"expected a mapping, got {type(doc).__name__}")
    for key in doc:
        if key not in allowed:
            where = f"{path}.{key}" if path else str(key)
            raise SchemaError(where, "unknown key")


def _number(value, path: str, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected a number, got {value!r}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise SchemaError(path, f"expected an integer, got {value!r}")
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        raise SchemaError(path, "must be finite")
    return value


def _matrix(value, path: str) -> tuple:
    if not isinstance(value, list) or not all(isinstance(r, list) for r in value):
        raise SchemaError(path, "expected a list of rows")
    return tuple(tuple(_number(v, f"{path}[{i}][{j}]") for j, v in enumerate(r)) for i, r in enumerate(value))


def _kernel(doc: dict) -> WeightKernel:
    _reject_unknown(doc, _KERNEL, "kernel")
    kind = doc.get("kind", "singular")
    try:
        kind = KernelKind(kind)
    except ValueError:
        raise SchemaError("kernel.kind", f"must be one of {[k.value for k in KernelKind]}") from None
    if kind is KernelKind.SINGULAR:
        for key in ("K", "beta"):
            if key in doc:
                raise SchemaError(f"kernel.{key}", "only valid for the cucker_smale kernel")
        alpha = _number(doc.get("alpha", 0.3), "kernel.alpha")
        floor = _number(doc.get("floor", DEFAULT_FLOOR), "kernel.floor")
        if not alpha > 0:
            raise SchemaError("kernel.alpha", "must be > 0")
        if floor < 0:
            raise SchemaError("kernel.floor", "must be >= 0")
        return WeightKernel.singular(alpha, floor)
    for key in ("alpha", "floor"):
        if key in doc:
            raise SchemaError(f"kernel.{key}", "only valid for the singular kernel")
    K = _number(doc.get("K", 1.0), "kernel.K")
    beta = _number(doc.get("beta", 0.0), "kernel.beta")
    if not K > 0:
        raise SchemaError("kernel.K", "must be > 0")
    if beta < 0:
        raise SchemaError("kernel.beta", "must be >= 0")
    return WeightKernel.cucker_smale(K, beta)


def _initial(doc: dict) -> InitialCondition:
    _reject_unknown(doc, _INITIAL, "initial")
    forms = [k for k in ("scenario", "positions", "random") if k in doc]
    if "velocities" in doc and "positions" not in doc:
        raise SchemaError("initial.positions", "required together with velocities")
    if len(forms) > 1:
        raise SchemaError("initial", f"give exactly one of scenario, positions/velocities, random (got {forms})")
    if not forms:
        return InitialCondition(random=RandomCloud())
    if forms[0] == "scenario":
        if not isinstance(doc["scenario"], str):
            raise SchemaError("initial.scenario", "expected a string")
        return InitialCondition(scenario=doc["scenario"])
    if forms[0] == "positions":
        if "velocities" not in doc:
            raise SchemaError("initial.velocities", "required together with positions")
        return InitialCondition(
            positions=_matrix(doc["positions"], "initial.positions"),
            velocities=_matrix(doc["velocities"], "initial.velocities"),
        )
    sub = doc["random"] or {}
    _reject_unknown(sub, {f.name for f in fields(RandomCloud)}, "initial.random")
    return InitialCondition(
        random=RandomCloud(**{k: _number(v, f"initial.random.{k}") for k, v in sub.items()})
    )


def _step_control(doc: dict) -> StepControl:
    names = {f.name for f in fields(StepControl)}
    _reject_unknown(doc, names, "step_control")
    values = {k: _number(v, f"step_control.{k}", integer=(k == "max_steps")) for k, v in doc.items()}
    try:
        return StepControl(**values)
    except InvalidParameter as exc:
        raise SchemaError("step_control", str(exc)) from None


def _output(doc: dict) -> OutputConfig:
    _reject_unknown(doc, {f.name for f in fields(OutputConfig)}, "output")
    cadence = doc.get("cadence")
    out_dir = doc.get("out_dir")
    reproducible = doc.get("reproducible", True)
    if cadence is not None:
        cadence = _number(cadence, "output.cadence")
    if out_dir is not None and not isinstance(out_dir, str):
        raise SchemaError("output.out_dir", "expected a string")
    if not isinstance(reproducible, bool):
        raise SchemaError("output.reproducible", "expected a boolean")
    return OutputConfig(cadence, out_dir, reproducible)


def parse_config(document) -> SimConfig:
    """Validate a configuration given as a mapping or as YAML/JSON text."""
    if isinstance(document, (str, bytes)):
        try:
            document = yaml.load(document, Loader=_Loader)
        except yaml.YAMLError as exc:
            raise SchemaError("<root>", f"not a valid YAML/JSON document: {exc}") from None
    if document is None:
        document = {}
    _reject_unknown(document, _TOP, "")
    if "t_final" not in document:
        raise SchemaError("t_final", "required")
    kernel = _kernel(document.get("kernel") or {})
    norm = document.get("normalization", "over_n")
    try:
        norm = Normalization(norm)
    except ValueError:
        raise SchemaError("normalization", f"must be one of {[n.value for n in Normalization]}") from None
    return SimConfig(
        kernel=kernel,
        n_particles=_number(document.get("n", 2), "n", integer=True),
        dim=_number(document.get("dim", 1), "dim", integer=True),
        normalization=norm,
        t_final=_number(document["t_final"], "t_final"),
        initial=_initial(document.get("initial") or {}),
        step_control=_step_control(document.get("step_control") or {}),
        output=_output(document.get("output") or {}),
        seed=_number(document.get("seed", 0), "seed", integer=True),
    )


def load_config(path: str) -> SimConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SchemaError(str(path), f"cannot read config: {exc.strerror}") from None
    return parse_config(text)
