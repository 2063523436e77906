import json
import math
from pathlib import Path

import pytest

from xnas.lr_plan import CIFAR10_SCHEDULE, SearchSchedule, effective_horizon, plan, plan_rows

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_effective_horizons():
    assert effective_horizon(CIFAR10_SCHEDULE, "normal") == 7_500_000
    assert effective_horizon(CIFAR10_SCHEDULE, "reduction") == 2_500_000
    s = SearchSchedule(validation_size=123, epochs=1, replications={"c": 1})
    assert effective_horizon(s, "c") == 123


def test_unknown_cell_type():
    with pytest.raises(KeyError):
        effective_horizon(CIFAR10_SCHEDULE, "stem")


def test_cifar_plan():
    rates = plan(CIFAR10_SCHEDULE)
    assert 7.4e-4 <= rates["normal"] <= 7.5e-4
    assert 1.25e-3 <= rates["reduction"] <= 1.35e-3


def test_equal_replications_give_equal_rates():
    s = SearchSchedule(100, 3, {"a": 2, "b": 2})
    r = plan(s)
    assert r["a"] == r["b"]


def test_more_experts_scale_rate():
    a = SearchSchedule(100, 3, {"c": 1}, experts_per_forecaster=8)
    b = SearchSchedule(100, 3, {"c": 1}, experts_per_forecaster=64)
    assert plan(b)["c"] / plan(a)["c"] == pytest.approx(math.sqrt(2), rel=1e-12)


def test_config_file_matches_builtin():
    cfg = json.loads((CONFIGS / "cifar10_schedule.json").read_text())
    s = SearchSchedule.from_dict(cfg)
    assert s == CIFAR10_SCHEDULE
    assert SearchSchedule.from_dict(s.to_dict()) == s
    assert [r[0] for r in plan_rows(s)] == ["normal", "reduction"]


@pytest.mark.parametrize("cfg", [
    {"validation_size": 10, "epochs": 1},
    {"validation_size": 10, "epochs": 1, "replications": {"a": 1}, "bogus": 3},
    {"validation_size": 0, "epochs": 1, "replications": {"a": 1}},
    {"validation_size": 10, "epochs": 1, "replications": {}},
    {"validation_size": 10, "epochs": 1, "replications": {"a": 1}, "grad_bound": 0},
])
def test_bad_schedules(cfg):
    with pytest.raises(ValueError):
        SearchSchedule.from_dict(cfg)
