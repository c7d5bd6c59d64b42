import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ippal.config import ConfigFileError, ExperimentConfig, dump_config, load_config, parse_config


def test_defaults_validate():
    ExperimentConfig().validate()


def test_round_trip_defaults():
    cfg = ExperimentConfig()
    assert parse_config(dump_config(cfg)) == cfg


@settings(max_examples=30, deadline=None)
@given(
    missions=st.integers(1, 20),
    budget=st.floats(0, 500, allow_nan=False),
    objective=st.sampled_from(["bayes_mc_dropout", "bayes_ensemble", "entropy", "novelty"]),
    kind=st.sampled_from(["local", "frontier", "optimisation", "sampling", "coverage"]),
    seeds=st.lists(st.integers(0, 10**6), min_size=1, max_size=4),
    priors=st.booleans(),
    k=st.integers(3, 8),
)
def test_round_trip_random(missions, budget, objective, kind, seeds, priors, k):
    text = f"""
missions = {missions}
budget = {budget!r}
objective = "{objective}"
seeds = {seeds}
informed_priors = {str(priors).lower()}

[terrain]
n_classes = {k}

[planner]
kind = "{kind}"
"""
    cfg = parse_config(text)
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert cfg.terrain.n_classes == k and cfg.planner.kind == kind and cfg.seeds == tuple(seeds)


def test_integer_promoted_to_float():
    cfg = parse_config("budget = 90\n[kinematics]\nv_max = 3\n")
    assert cfg.budget == 90.0 and isinstance(cfg.kinematics.v_max, float)


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("missions = 3\nbudget = 'x'\n", 2, "budget must be a number"),
        ("missions = 3\n\n[terrain]\nn_classes = 2.5\n", 4, "terrain.n_classes"),
        ("missions = 3\n[planner]\nwhat = 1\n", 3, "unknown key planner.what"),
        ("bogus = 1\n", 1, "unknown key bogus"),
        ("missions = 0\n", 1, "missions"),
        ("objective = \"magic\"\n", 1, "objective"),
        ("[planner]\nhorizon = 0\n", 2, "planner.horizon"),
        ("missions = [\n", 1, "TOML syntax"),
    ],
)
def test_line_precise_errors(text, line, fragment):
    with pytest.raises(ConfigFileError) as err:
        parse_config(text, "exp.toml")
    assert err.value.line == line
    assert fragment in str(err.value)
    assert f"exp.toml:{line}" in str(err.value)


def test_missing_file_names_path(tmp_path):
    p = tmp_path / "absent.toml"
    with pytest.raises(ConfigFileError) as err:
        load_config(p)
    assert str(p) in str(err.value)


def test_geometry_constraints():
    with pytest.raises(ConfigFileError):
        parse_config("[camera]\nfov_px = [12, 12]\n")
    with pytest.raises(ConfigFileError):
        parse_config("[terrain]\nwidth_m = 8\nheight_m = 8\n")
