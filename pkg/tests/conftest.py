import numpy as np
import pytest

from viewdesc.scene.dataset import DatasetConfig, build_dataset, read_manifest


def central_diff(f, x, idx, h=1e-5):
    old = x[idx]
    x[idx] = old + h
    fp = f()
    x[idx] = old - h
    fm = f()
    x[idx] = old
    return (fp - fm) / (2 * h)


def rel_err(a, b):
    a, b = float(a), float(b)
    denom = max(abs(a), abs(b))
    if denom < 1e-10:
        return abs(a - b)
    return abs(a - b) / denom


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory):
    """Three objects, coarse viewpoints, a handful of test views."""
    cfg = DatasetConfig(objects=("crate", "cone", "wedge"), template_level=1, train_level=2, n_test=4)
    path = build_dataset(cfg, tmp_path_factory.mktemp("tiny") / "data", seed=5)
    return read_manifest(path)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from aclog import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    order = {f"AC{i}": i for i in range(1, 11)}
    for ac, ok, detail in sorted(RESULTS, key=lambda r: order.get(r[0], 99)):
        terminalreporter.write_line(f"{ac} {'PASS' if ok else 'FAIL'}: {detail}")
