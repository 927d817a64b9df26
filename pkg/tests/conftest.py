"""Shared fixtures: memoized synthetic-data/training factories and the
acceptance-criteria summary block printed at the end of the run."""

import numpy as np
import pytest

from overdict import (
    GenerativeModel,
    L0Constrained,
    TrainConfig,
    gen_dictionary,
    odl_train,
    sample_batch,
)

# Seed layout shared with the experiment drivers: one base seed per repeat,
# fixed offsets for the train and test streams.
TRAIN_SEED_OFFSET = 10_000
TEST_SEED_OFFSET = 77_777

_criterion_lines = []


@pytest.fixture(scope="session")
def criterion_log():
    """Recorder for acceptance-criteria results (one line per criterion)."""

    def record(num, ok, detail):
        line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
        _criterion_lines.append((num, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_criterion_lines):
            terminalreporter.write_line(line)


class SynthFactory:
    """Memoized ground-truth models, datasets, and trained reports.

    Several tests revisit the same (d, p, k, n, seed) cells; training runs
    dominate the suite's wall time, so results are shared per session.
    """

    def __init__(self):
        self._data = {}
        self._test = {}
        self._runs = {}

    def data(self, *, d=50, p=70, k=3, n=300, seed=0, sigma=0.0):
        key = (d, p, k, n, seed, sigma)
        if key not in self._data:
            D0 = gen_dictionary(d, p, seed)
            model = GenerativeModel(D0, k, noise_sigma=sigma)
            self._data[key] = (D0, sample_batch(model, n, seed + TRAIN_SEED_OFFSET))
        return self._data[key]

    def test_set(self, *, d=50, p=70, k=3, n_test=1000, seed=0, sigma=0.0):
        key = (d, p, k, n_test, seed, sigma)
        if key not in self._test:
            D0 = gen_dictionary(d, p, seed)
            model = GenerativeModel(D0, k, noise_sigma=sigma)
            self._test[key] = sample_batch(model, n_test, seed + TEST_SEED_OFFSET)
        return self._test[key]

    def odl(self, *, d=50, p=70, k=3, n=300, p_prime, seed=0, sigma=0.0,
            iterations=2000):
        key = (d, p, k, n, p_prime, seed, sigma, iterations)
        if key not in self._runs:
            D0, train = self.data(d=d, p=p, k=k, n=n, seed=seed, sigma=sigma)
            cfg = TrainConfig(
                p_prime=p_prime,
                iterations=iterations,
                coder=L0Constrained(k),
                seed=seed,
            )
            self._runs[key] = odl_train(train, cfg)
        D0, train = self.data(d=d, p=p, k=k, n=n, seed=seed, sigma=sigma)
        return D0, train, self._runs[key]


@pytest.fixture(scope="session")
def synth():
    return SynthFactory()


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
