import pytest

from dvsconv.synth import SceneConfig, generate_recording


@pytest.fixture(scope="session")
def small_recording():
    cfg = SceneConfig(duration_us=300_000, seed=3, burst_period_us=50_000, burst_len_us=5_000, burst_multiplier=4.0)
    return generate_recording(cfg)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
