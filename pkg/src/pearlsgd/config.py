"""Experiment configuration files (YAML) with line-anchored validation errors."""
import copy
import dataclasses
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .engine import MODES
from .problems import (RobotControlGame, SineNonCocoerciveGame, generate_nplayer_quadratic,
                       generate_quadratic_minimax, load_problem, scalar_game)
from .problems.quadratic import ROBOT_NOISE_VARIANCE
from .schedules import KINDS

SEED_ENV = "PEARL_SEED"
DEFAULT_TAUS = (1, 2, 4, 5, 8, 20)

# generator keyword arguments accepted by each problem kind
PROBLEM_ARGS = {
    "quad-minimax": {"d": 10, "M": 100, "mu_a": 1.0, "L_a": 2.0, "mu_c": 1.0, "L_c": 2.0, "L_b": 10.0,
                     "seed": None, "batch_size": 1},
    "nplayer": {"n": 5, "d": 10, "M": 100, "mu_a": 1.0, "L_a": 2.0, "L_b": 1.0, "seed": None, "batch_size": 1},
    "robot": {"noise_variance": ROBOT_NOISE_VARIANCE},
    "sine": {"mu": 1.0, "ell": 4.0, "noise_std": 0.0},
    "scalar": {"mu": 1.0, "coupling": 1.0, "shift": [0.0, 0.0], "noise_std": 0.0},
    "file": {"path": None},
}


class ConfigError(ValueError):
    def __init__(self, message, line=None, source=None):
        self.line, self.source = line, source
        where = ""
        if line is not None:
            where = f"{source or 'config'}:{line}: "
        super().__init__(where + message)


@dataclass
class ProblemSpec:
    kind: str = "quad-minimax"
    args: dict = field(default_factory=dict)

    def full_args(self, default_seed=0):
        out = dict(PROBLEM_ARGS[self.kind])
        out.update(self.args)
        if "seed" in out and out["seed"] is None:
            out["seed"] = default_seed
        return out

    def build(self, default_seed=0):
        a = self.full_args(default_seed)
        if self.kind == "quad-minimax":
            return generate_quadratic_minimax(**a)
        if self.kind == "nplayer":
            return generate_nplayer_quadratic(**a)
        if self.kind == "robot":
            return RobotControlGame.preset(a["noise_variance"])
        if self.kind == "sine":
            return SineNonCocoerciveGame(a["mu"], a["ell"], a["noise_std"])
        if self.kind == "scalar":
            return scalar_game(a["mu"], a["coupling"], tuple(a["shift"]), a["noise_std"])
        if not a["path"]:
            raise ConfigError("problem kind 'file' needs problem.args.path")
        return load_problem(a["path"])


@dataclass
class RunSpec:
    tau: list = field(default_factory=lambda: [1])
    schedule: str = "theoretical"
    gamma: Optional[float] = None
    total_iterations: Optional[int] = None
    rounds: int = 100
    mode: str = "deterministic"
    seed: int = 0
    replicates: int = 1
    divergence_threshold: float = 1e12
    gammas: Optional[list] = None


@dataclass
class ExperimentConfig:
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    run: RunSpec = field(default_factory=RunSpec)
    x0: object = "ones"
    output: str = "pearl-out"

    def to_dict(self):
        return {"problem": {"kind": self.problem.kind, "args": copy.deepcopy(self.problem.args)},
                "run": dataclasses.asdict(self.run), "x0": copy.deepcopy(self.x0), "output": self.output}

    def dumps(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)

    @classmethod
    def from_dict(cls, data, lines=None, source=None):
        return _build(data, lines or {}, source)

    @classmethod
    def loads(cls, text, source=None):
        try:
            node = yaml.compose(text)
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"malformed YAML: {getattr(exc, 'problem', exc)}",
                              None if mark is None else mark.line + 1, source) from None
        if data is None:
            data = {}
        lines = {}
        if node is not None:
            _collect_lines(node, (), lines)
        if not isinstance(data, dict):
            raise ConfigError("top level must be a mapping", 1, source)
        return _build(data, lines, source)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.loads(text, source=str(path))

    def with_env(self, environ=None):
        """Apply the PEARL_SEED override."""
        env = os.environ if environ is None else environ
        raw = env.get(SEED_ENV)
        if raw is None or raw == "":
            return self
        try:
            seed = int(raw)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None
        out = copy.deepcopy(self)
        out.run.seed = seed
        return out

    def build_problem(self):
        return self.problem.build(self.run.seed)

    def x0_array(self, D):
        return parse_x0(self.x0, D)


def parse_x0(spec, D):
    if isinstance(spec, str):
        if spec == "ones":
            return np.ones(D)
        if spec == "zeros":
            return np.zeros(D)
        raise ConfigError(f"x0 must be 'ones', 'zeros', a number or a list, got {spec!r}")
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return np.full(D, float(spec))
    arr = np.asarray(spec, dtype=float)
    if arr.shape != (D,):
        raise ConfigError(f"x0 has {arr.size} entries but the game has dimension {D}")
    return arr


def _collect_lines(node, path, out):
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _collect_lines(v, path + (k.value,), out)
            out[path + (k.value,)] = k.start_mark.line + 1


def _build(data, lines, source):
    def fail(msg, *path):
        line = None
        for cut in range(len(path), -1, -1):
            if path[:cut] in lines:
                line = lines[path[:cut]]
                break
        raise ConfigError(msg, line, source)

    def section(name):
        value = data.get(name, {})
        if value is None:
            return {}
        if not isinstance(value, dict):
            fail(f"'{name}' must be a mapping", name)
        return value

    unknown = set(data) - {"problem", "run", "x0", "output"}
    if unknown:
        key = sorted(unknown)[0]
        fail(f"unknown top-level key {key!r}", key)

    prob = section("problem")
    kind = prob.get("kind", "quad-minimax")
    if kind not in PROBLEM_ARGS:
        fail(f"unknown problem kind {kind!r}; choose from {', '.join(PROBLEM_ARGS)}", "problem", "kind")
    for key in set(prob) - {"kind", "args"}:
        fail(f"unknown key problem.{key}", "problem", key)
    args = prob.get("args") or {}
    if not isinstance(args, dict):
        fail("problem.args must be a mapping", "problem", "args")
    for key in args:
        if key not in PROBLEM_ARGS[kind]:
            fail(f"problem kind {kind!r} does not take argument {key!r}", "problem", "args", key)

    run_raw = section("run")
    run = RunSpec()
    names = {f.name for f in dataclasses.fields(RunSpec)}
    for key, value in run_raw.items():
        if key not in names:
            fail(f"unknown key run.{key}", "run", key)
        setattr(run, key, value)
    if isinstance(run.tau, (int, float)) and not isinstance(run.tau, bool):
        run.tau = [run.tau]
    if not isinstance(run.tau, list) or not run.tau:
        fail("run.tau must be an integer or a nonempty list", "run", "tau")
    for t in run.tau:
        if isinstance(t, bool) or not isinstance(t, int) or t < 1:
            fail(f"synchronization interval tau must be an integer >= 1, got {t!r}", "run", "tau")
    if run.schedule not in KINDS:
        fail(f"unknown schedule {run.schedule!r}; choose from {', '.join(KINDS)}", "run", "schedule")
    if run.mode not in MODES:
        fail(f"mode must be one of {', '.join(MODES)}", "run", "mode")
    for key in ("rounds", "replicates"):
        v = getattr(run, key)
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            fail(f"run.{key} must be an integer >= 1, got {v!r}", "run", key)
    if isinstance(run.seed, bool) or not isinstance(run.seed, int) or run.seed < 0:
        fail(f"run.seed must be a nonnegative integer, got {run.seed!r}", "run", "seed")
    if run.schedule == "constant" and not (isinstance(run.gamma, (int, float)) and run.gamma > 0):
        fail("constant schedule needs run.gamma > 0", "run", "gamma" if "gamma" in run_raw else "schedule")
    if run.schedule == "corollary" and not (isinstance(run.total_iterations, int) and run.total_iterations > 0):
        fail("corollary schedule needs run.total_iterations > 0", "run",
             "total_iterations" if "total_iterations" in run_raw else "schedule")
    if run.gammas is not None:
        if not isinstance(run.gammas, list) or not run.gammas or \
                any(not isinstance(g, (int, float)) or g <= 0 for g in run.gammas):
            fail("run.gammas must be a nonempty list of positive numbers", "run", "gammas")
    try:
        run.divergence_threshold = float(run.divergence_threshold)
    except (TypeError, ValueError):
        fail("run.divergence_threshold must be a number", "run", "divergence_threshold")

    x0 = data.get("x0", "ones")
    if isinstance(x0, str) and x0 not in ("ones", "zeros"):
        fail(f"x0 must be 'ones', 'zeros', a number or a list, got {x0!r}", "x0")
    output = data.get("output", "pearl-out")
    if not isinstance(output, str):
        fail("output must be a path string", "output")
    return ExperimentConfig(ProblemSpec(kind, dict(args)), run, x0, output)
