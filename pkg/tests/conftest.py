import numpy as np
import pytest

ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_factor(rng, m, k, scale=1.0):
    from hybridvi.factor import FactorCovariance

    B = np.tril(rng.standard_normal((m, k)) * scale)
    d = rng.uniform(0.3, 1.5, size=m)
    return FactorCovariance(B, d)


class CriterionCheck:
    """Context manager recording one part of an acceptance criterion as pass or fail."""

    def __init__(self, log: dict, criterion: int, label: str):
        self.log, self.criterion, self.label = log, criterion, label
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        text = f"{self.label} {self.detail}".strip()
        self.log.setdefault(self.criterion, []).append((exc_type is None, text))
        return False


@pytest.fixture
def criterion(request):
    log = request.config.stash.setdefault(ACCEPTANCE_KEY, {})
    return lambda number, label: CriterionCheck(log, number, label)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(ACCEPTANCE_KEY, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(log):
        parts = log[number]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        details = "; ".join(f"{text}{'' if ok else ' [failed]'}" for ok, text in parts)
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {details}")
