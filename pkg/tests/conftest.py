import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


SMALL = dict(input_width=64, hidden_sizes=(32, 32), output_size=4, bypass=(True, True),
             sparsity=0.75, weight_gain=8.0, threshold=0.5, dsst_period=20, epochs=2)


@pytest.fixture
def small_cfg():
    from elfcore.config import RunConfig

    return RunConfig(**SMALL)


@pytest.fixture(scope="session")
def small_task(tmp_path_factory):
    from elfcore.task import SyntheticTaskSpec, generate_task

    out = tmp_path_factory.mktemp("task")
    spec = SyntheticTaskSpec(classes=4, timesteps=16, width=64, generators=24, jitter=1, drop_rate=0.1,
                             noise_rate=0.01, samples_per_class=4, test_samples_per_class=3)
    generate_task(spec, seed=11, out=out)
    return out


# one verdict line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
