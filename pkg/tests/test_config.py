import pytest

from dmesolve.config import dump_config, load_config, parse_config
from dmesolve.exceptions import ConfigurationError
from dmesolve.schemes import SchemeSpec
from dmesolve.validation import check_h_grid, check_positive_int, check_tolerance

BASE = {"problem": {"generator": "heat2d", "nx": 4, "gain": False},
        "scheme": {"composition": "F12", "n_steps": 8}}


def test_defaults():
    cfg = parse_config({})
    assert cfg.scheme.spec() == SchemeSpec()
    assert cfg.study.repetitions >= 5 and cfg.output.directory == "out"
    with pytest.raises(ConfigurationError, match="problem"):
        cfg.build_problem()


def test_builds_problem_and_schemes():
    cfg = parse_config(BASE)
    assert cfg.build_problem().n == 16
    assert cfg.schemes() == [SchemeSpec("F12", "strang", 8)]
    many = parse_config(dict(BASE, study={"schemes": [{"composition": "F1F2", "kind": "Lie"}]}))
    assert many.schemes()[0].kind == "lie"


@pytest.mark.parametrize("patch, where", [
    ({"scheme": {"n_steps": 0}}, "scheme.n_steps"),
    ({"scheme": {"composition": "F2F1"}}, "scheme.composition"),
    ({"scheme": {"typo": 1}}, "scheme.typo"),
    ({"problem": {"generator": "heat2d", "nx": 4, "bogus": 1}}, "bogus"),
    ({"problem": {"generator": "heat2d"}}, "nx"),
    ({"problem": {"generator": "lorenz"}}, "lorenz"),
    ({"study": {"h_grid": [0.1, 0.05]}}, "study.h_grid"),
    ({"study": {"repetitions": 3}}, "study.repetitions"),
    ({"study": {"threads": [0]}}, "study.threads"),
])
def test_errors_name_the_field(patch, where):
    with pytest.raises(ConfigurationError, match=where.replace(".", r"\.")):
        parse_config(dict(BASE, **patch))


def test_yaml_round_trip(tmp_path):
    cfg = parse_config(BASE)
    dump_config(cfg, tmp_path / "a.yaml")
    assert load_config(tmp_path / "a.yaml") == cfg


def test_bad_files(tmp_path):
    with pytest.raises(ConfigurationError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("scheme: [unclosed\n")
    with pytest.raises(ConfigurationError, match="invalid YAML"):
        load_config(tmp_path / "bad.yaml")
    (tmp_path / "list.yaml").write_text("- 1\n")
    with pytest.raises(ConfigurationError, match="mapping"):
        load_config(tmp_path / "list.yaml")


def test_digest_ignores_output_only():
    a = parse_config(BASE)
    assert a.digest() == a.with_overrides(out="elsewhere").digest()
    assert a.digest() != a.with_overrides(seed=5).digest()
    assert a.with_overrides(seed=5).problem.params["seed"] == 5


def test_seed_override_needs_seeded_generator():
    cfg = parse_config({"problem": {"generator": "stochastic_heat", "nx": 3}})
    with pytest.raises(ConfigurationError, match="seed"):
        cfg.with_overrides(seed=1)


def test_validation_helpers():
    assert check_positive_int(3, "n") == 3
    for bad in (0, 2.5, True):
        with pytest.raises(ConfigurationError):
            check_positive_int(bad, "n")
    assert check_tolerance(0, "tol") == 0.0
    with pytest.raises(ConfigurationError):
        check_tolerance(0, "tol", allow_zero=False)
    with pytest.raises(ConfigurationError):
        check_tolerance(float("nan"), "tol")
    assert check_h_grid([0.25, 0.125, 0.0625], 1.0) == [0.25, 0.125, 0.0625]
    for grid in ([0.5, 0.25], [0.5, 0.5, 0.25], [0.3, 0.2, 0.1]):
        with pytest.raises(ConfigurationError):
            check_h_grid(grid, 1.0)
