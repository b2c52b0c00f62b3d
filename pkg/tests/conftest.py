import numpy as np
import pytest

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


class ScriptedRng:
    """Stand-in generator that replays fixed draws, for hand-checked examples.

    Each method pops from its own queue; ``random(n)`` consumes ``n`` values.
    """

    def __init__(self, **queues):
        self.queues = {k: list(v) for k, v in queues.items()}

    def _pop(self, name):
        q = self.queues.get(name)
        if not q:
            raise AssertionError(f"unexpected draw from {name}")
        return q.pop(0)

    def integers(self, *args, **kwargs):
        return self._pop("integers")

    def random(self, size=None):
        if size is None:
            return self._pop("random")
        return np.array([self._pop("random") for _ in range(size)])

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._pop("uniform")

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._pop("normal")

    def standard_cauchy(self, size=None):
        return self._pop("standard_cauchy")


@pytest.fixture
def scripted():
    return ScriptedRng


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def toy_target():
    from cade.data import make_toy_dataset
    from cade.toydata import ToyConfig

    return make_toy_dataset(ToyConfig(classes=(1, 3, 5, 7, 9)), 300, np.random.default_rng(42))
