import pytest

from iard.experiments import ESTIMATORS, ExperimentSpec, run_experiment

SUPERRES_SPEC = ExperimentSpec(
    "superresolution",
    snr_db=(30.0,),
    delta=(0.2, 0.5, 1.0),
    runs=300,
    base_seed=2024,
    estimators=ESTIMATORS,
)


@pytest.fixture(scope="session")
def superres():
    """Two-component delay-Doppler study at 30 dB, shared by every module that needs it.

    Returns ``{(delta, estimator): MetricsRecord}`` and the raw per-run outcomes.
    """
    table, raw = run_experiment(SUPERRES_SPEC, return_outcomes=True)
    by_key = {(rec.delta, rec.estimator): rec for rec in table}
    outcomes = {}
    for ci, (_, delta, _, _) in enumerate(SUPERRES_SPEC.cells()):
        for name in SUPERRES_SPEC.estimators:
            outcomes[(float(delta), name)] = raw[(ci, name)]
    return by_key, outcomes


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line for an acceptance criterion and return the verdict."""

    def _report(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
