import numpy as np
import pytest

ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)


class CountingModel:
    """Wraps a model and counts every call to ``scores``, independent of QueryCounter."""

    def __init__(self, model):
        self.inner = model
        self.kind = model.kind
        self.dim = model.dim
        self.classes = model.classes
        self.calls = 0

    def scores(self, x):
        self.calls += 1
        return self.inner.scores(x)


class ConstantModel:
    kind = "constant"

    def __init__(self, dim, label=0, classes=2):
        self.dim, self.classes, self.label = dim, classes, label

    def scores(self, x):
        s = np.zeros(self.classes)
        s[self.label] = 1.0
        return s


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
