import dataclasses

import pytest
from hypothesis import HealthCheck, settings

from asrlab import pipeline
from asrlab.corpus import SynthSpec
from asrlab.ga import GaConfig
from asrlab.som import SomConfig

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def small_config(out_dir, **kw):
    """A few seconds per run: 4 words, 2 speakers, 5 repetitions."""
    cfg = pipeline.ExperimentConfig(
        out_dir=str(out_dir),
        corpus=SynthSpec(n_words=4, n_speakers=2, n_reps=5),
        som=SomConfig(k_units=4, epochs=10),
        mlp=pipeline.MlpSettings(hidden=8, epochs=30),
        ga=GaConfig(population=8, generations=4),
        dev_fraction=0.25,
    )
    return dataclasses.replace(cfg, **kw)


@pytest.fixture
def small_cfg(tmp_path):
    return small_config(tmp_path / "exp")


ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    """One summary line per acceptance criterion, printed at the end of the run."""
    status = "PASS" if passed is True else ("WARN" if passed is None else "FAIL")
    ACCEPTANCE_LINES[number] = f"criterion {number}: {status}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
