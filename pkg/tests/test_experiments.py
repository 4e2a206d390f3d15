import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.lame_spectral.config import config
from src.lame_spectral.experiments import (
    ExperimentConfig,
    ExperimentKind,
    CEILING_SAFETY,
    calibrated_ceiling,
    initial_data,
    run_experiment,
)
from src.lame_spectral.models import LameParams, Verdict

LAME = {"lambda": 1.0, "mu": 1.0}
SMALL_GRID = {"n": 2, "N": 16, "L": 2 * math.pi}


def make_config(**overrides):
    payload = {"kind": "diag_check", "grid": SMALL_GRID, "lame": LAME} | overrides
    return ExperimentConfig.model_validate(payload)


def test_default_section_is_filled_in():
    cfg = make_config()
    assert cfg.kind is ExperimentKind.DIAG_CHECK
    assert cfg.diag is not None
    assert cfg.diag.norm_exponents == [1.5, 2.0, 4.0]
    assert cfg.strichartz is None


@pytest.mark.parametrize(
    "overrides, match",
    [
        ({"kind": "strichartz"}, "needs a 'strichartz' section"),
        ({"kind": "strichartz", "strichartz": {"q": 2, "r": 2}}, "not admissible"),
        (
            {
                "kind": "strichartz",
                "grid": {"n": 2, "N": 16, "L": 2 * math.pi},
                "strichartz": {"q": math.inf, "r": 2, "shells": [1, 2, 3]},
            },
            "Nyquist",
        ),
        (
            {"kind": "inhomo", "inhomogeneous": {"q": 4, "r": 4, "q_dual": 2, "r_dual": 4}},
            "gap condition",
        ),
        ({"kind": "perturbed"}, "n >= 3"),
        (
            {"kind": "perturbed", "grid": {"n": 3, "N": 16, "L": 8.0}, "potential": {"p": 2.0}},
            "outside",
        ),
        (
            {"kind": "resolvent_sweep", "sweep": {"p": 2.0, "q": 2.0, "z_values": [1j]}},
            "resolvent-admissible",
        ),
        ({"kind": "resolvent_sweep", "sweep": {"M": 12, "z_values": [1j]}}, "power of two"),
        (
            {"kind": "resolvent_sweep", "sweep": {"z_values": [1j], "probe_p": 2.0}},
            "together",
        ),
        ({"kind": "decay_fit", "decay": {"t_window": [2.0, 1.0]}}, "Invalid time window"),
        ({"lame": {"lambda": -3.0, "mu": 1.0}}, "llipticity|lambda"),
        ({"grid": {"n": 2, "N": 12, "L": 1.0}}, "power of two >= 8"),
        ({"unexpected": 1}, "Extra inputs"),
    ],
)
def test_invalid_configs_are_rejected(overrides, match):
    with pytest.raises(ValidationError, match=match):
        make_config(**overrides)


def test_config_hash_is_canonical():
    first = make_config(seed=3)
    reordered = ExperimentConfig.model_validate(
        {"seed": 3, "lame": {"mu": 1.0, "lambda": 1.0}, "grid": SMALL_GRID, "kind": "diag_check"}
    )
    assert first.config_hash() == reordered.config_hash()
    assert first.config_hash() != make_config(seed=4).config_hash()
    assert len(first.config_hash()) == 64
    assert '"lambda":1.0' in first.canonical_json()


def test_config_from_file_accepts_infinity(tmp_path):
    path = tmp_path / "strichartz.json"
    path.write_text(
        '{"kind": "strichartz", "grid": {"n": 2, "N": 64, "L": 16.0}, '
        '"lame": {"lambda": 1.0, "mu": 1.0}, '
        '"strichartz": {"q": Infinity, "r": 2, "shells": [1, 2]}}',
        encoding="utf-8",
    )
    cfg = ExperimentConfig.from_file(path)
    assert cfg.strichartz is not None
    assert math.isinf(cfg.strichartz.q)
    assert cfg.strichartz.ceiling is None


def test_seed_override_from_settings(monkeypatch):
    cfg = make_config(seed=1)
    assert cfg.with_seed_override(5).seed == 5
    monkeypatch.setattr(config, "seed", 9)
    assert cfg.with_seed_override().seed == 9
    monkeypatch.setattr(config, "seed", None)
    assert cfg.with_seed_override() is cfg


def test_run_diag_stamps_provenance():
    cfg = make_config(diag={"samples": 4, "norm_exponents": [2.0], "equivalence_trials": 1})
    report = run_experiment(cfg, jobs=1)
    assert report.verdict is Verdict.PASS, report.checks
    assert report.provenance == cfg.config_hash()
    assert report.parameters["config"]["kind"] == "diag_check"
    assert report.checks["norm_equivalence_r=2"]


def test_propagate_is_deterministic_across_jobs():
    cfg = make_config(
        kind="propagate",
        grid={"n": 2, "N": 8, "L": 2 * math.pi},
        trials=3,
        seed=4,
        propagate={"times": [0.0, 0.5, 2.0]},
    )
    serial = run_experiment(cfg, jobs=1)
    threaded = run_experiment(cfg, jobs=2)
    assert serial.values() == threaded.values()
    assert serial.provenance == threaded.provenance


def test_initial_data_for_displacement_only_strichartz():
    cfg = make_config(
        kind="strichartz",
        grid={"n": 2, "N": 64, "L": 16.0},
        strichartz={"q": math.inf, "r": 2.0, "shells": [1, 2], "velocity_data": False},
    )
    data = initial_data(cfg)
    assert not np.any(data.g.values)
    assert np.any(data.f.values)
    assert data.f.space.value == "physical"


def test_small_resolvent_sweep_run():
    cfg = make_config(
        kind="resolvent_sweep",
        sweep={"M": 16, "T": 16.0, "z_values": [10j, complex(20, 10)]},
    )
    report = run_experiment(cfg, jobs=2)
    assert report.checks["inverse_identity"]
    assert report.checks["all_finite"]
    assert report.statistics["inverse_identity_error"] <= 1e-12
    assert report.experiment_id == "resolvent_sweep"


def _energy_pair_config(**strichartz):
    return make_config(
        kind="strichartz",
        grid={"n": 2, "N": 64, "L": 16.0},
        trials=2,
        strichartz={"q": math.inf, "r": 2.0, "shells": [1, 2], "steps": 8, "velocity_data": False}
        | strichartz,
    )


def test_calibrated_ceiling_scales_the_measured_quotient():
    params = LameParams(lam=1.0, mu=1.0)
    ceiling = calibrated_ceiling(2, math.inf, 2.0, params, velocity_data=False)
    assert ceiling == pytest.approx(CEILING_SAFETY, abs=1e-9)


def test_missing_ceiling_is_calibrated_and_stored():
    cfg = _energy_pair_config()
    stored = cfg.with_calibrated_ceiling()
    assert stored.strichartz.ceiling == pytest.approx(CEILING_SAFETY, abs=1e-9)
    assert stored.with_calibrated_ceiling() is stored
    report = run_experiment(cfg, jobs=1)
    assert report.verdict is Verdict.PASS, report.checks
    assert report.tolerances["ceiling"] == stored.strichartz.ceiling
    assert report.parameters["config"]["strichartz"]["ceiling"] == stored.strichartz.ceiling


def test_ceiling_below_the_measured_quotient_fails():
    report = run_experiment(_energy_pair_config(ceiling=0.5), jobs=1)
    assert report.verdict is Verdict.FAIL
    assert not report.checks["bounded"]
    assert report.checks["unitarity"]
    assert report.checks["shell_stable"]
    assert report.tolerances["ceiling"] == 0.5
    assert report.statistics["max_quotient"] == pytest.approx(1.0, abs=1e-10)
