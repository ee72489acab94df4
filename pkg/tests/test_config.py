import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pearlsgd.config import ConfigError, ExperimentConfig, parse_x0


@given(taus=st.lists(st.integers(1, 50), min_size=1, max_size=6), rounds=st.integers(1, 10 ** 6),
       seed=st.integers(0, 2 ** 40), mode=st.sampled_from(["deterministic", "stochastic"]),
       schedule=st.sampled_from(["theoretical", "theoretical-robot", "decreasing"]),
       L_b=st.floats(0, 100), x0=st.one_of(st.just("ones"), st.floats(-5, 5)))
@settings(max_examples=50, deadline=None)
def test_yaml_round_trip_is_lossless(taus, rounds, seed, mode, schedule, L_b, x0):
    cfg = ExperimentConfig()
    cfg.problem.args = {"L_b": L_b, "d": 3}
    cfg.run.tau, cfg.run.rounds, cfg.run.seed = taus, rounds, seed
    cfg.run.mode, cfg.run.schedule = mode, schedule
    cfg.x0 = x0
    back = ExperimentConfig.loads(cfg.dumps())
    assert back.to_dict() == cfg.to_dict()
    assert back.dumps() == cfg.dumps()


def test_errors_point_at_the_offending_line():
    text = "problem:\n  kind: quad-minimax\nrun:\n  rounds: 10\n  tau: [1, 0]\n"
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.loads(text, source="exp.yaml")
    assert err.value.line == 5 and "exp.yaml:5:" in str(err.value) and "tau" in str(err.value)


@pytest.mark.parametrize("text,line", [
    ("run:\n  tua: 3\n", 2),
    ("problem:\n  kind: quad-minimax\n  args:\n    n: 3\n", 4),
    ("problem:\n  kind: banana\n", 2),
    ("x0: ones\nrun:\n  mode: sometimes\n", 3),
    ("run:\n  schedule: constant\n", 2),
    ("extra: 1\n", 1),
    ("run: [1, 2\n", 2),
])
def test_malformed_configs(text, line):
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.loads(text)
    assert err.value.line == line


def test_seed_env_override():
    cfg = ExperimentConfig()
    assert cfg.with_env({"PEARL_SEED": "42"}).run.seed == 42
    assert cfg.with_env({}).run.seed == 0
    with pytest.raises(ConfigError):
        cfg.with_env({"PEARL_SEED": "x"})


def test_problem_seed_follows_run_seed_unless_given():
    cfg = ExperimentConfig()
    cfg.problem.args = {"d": 2, "M": 3}
    cfg.run.seed = 5
    assert cfg.problem.full_args(cfg.run.seed)["seed"] == 5
    cfg.problem.args["seed"] = 1
    assert cfg.problem.full_args(cfg.run.seed)["seed"] == 1


def test_parse_x0():
    assert parse_x0("zeros", 3).tolist() == [0, 0, 0]
    assert parse_x0(2, 2).tolist() == [2.0, 2.0]
    assert parse_x0([1, 2], 2).tolist() == [1.0, 2.0]
    with pytest.raises(ConfigError):
        parse_x0([1, 2], 3)
