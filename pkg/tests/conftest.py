import numpy as np
import pytest

from ciae.loss import LossConfig
from ciae.scene import SceneGenConfig, generate_scene


def problem_dict(problem):
    """Plain-list view of an EmbeddingProblem for the reference oracle."""
    h, w = problem.pixel_to_query.shape
    return {
        "pixel_to_query": problem.pixel_to_query.tolist(),
        "queries": np.asarray(problem.queries).tolist(),
        "valid": None if problem.valid is None else np.asarray(problem.valid).tolist(),
        "weights": None if problem.pixel_weights is None else np.asarray(problem.pixel_weights).tolist(),
    }


def small_scene(seed, height=8, width=8, num_things=2, **kw):
    cfg = SceneGenConfig(height=height, width=width, num_stuff_regions=kw.pop("num_stuff_regions", 2),
                         num_things=num_things, num_stuff_classes=kw.pop("num_stuff_classes", 3),
                         num_thing_classes=kw.pop("num_thing_classes", 2),
                         size_range=kw.pop("size_range", (0.3, 0.6)), seed=seed, **kw)
    return generate_scene(cfg)


@pytest.fixture
def loss_cfg():
    return LossConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def record_criterion(name, passed, detail):
    """Remember one acceptance verdict for the end-of-run summary."""
    line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
