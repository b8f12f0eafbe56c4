import os

import pytest
from hypothesis import HealthCheck, settings

from hetho.model import macro_pico_config

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def cfg5():
    """Two-tier macro/pico operating point (lambda = 1 and 2 per km^2, P2/P1 = 0.2, alpha = 3.5)."""
    return macro_pico_config()


@pytest.fixture(scope="session")
def desk_rates():
    """Simulated rate matrices at the operating point (desk profile), cached per (model, mean speed)."""
    from hetho.experiments import profile_sim, simulated_rates
    from hetho.io import Scenario
    from hetho.model import SpeedModel

    cache = {}

    def get(model: str = "straight", mean_speed: float = 5.0):
        key = (model, mean_speed)
        if key not in cache:
            sc = Scenario(macro_pico_config(), SpeedModel.uniform(mean_speed))
            cache[key] = simulated_rates(sc, profile_sim("desk"), model)
        return cache[key]

    return get


_ACCEPTANCE = pytest.StashKey[dict]()


class _Criterion:
    def __init__(self, results: dict, number: int, title: str):
        self.results, self.number, self.title = results, number, title
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        ok = exc_type is None
        line = f"criterion {self.number:2d}: {'PASS' if ok else 'FAIL'}  {self.title}"
        if self.detail:
            line += f"  [{self.detail}]"
        if not ok and exc is not None:
            line += f"  ({type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
        self.results.setdefault(self.number, []).append(line)
        print(line)
        return False


@pytest.fixture
def criterion(request):
    """Context manager recording one pass/fail line per acceptance criterion."""
    results = request.config.stash.setdefault(_ACCEPTANCE, {})
    return lambda number, title: _Criterion(results, number, title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, None)
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for k in sorted(results):
        for line in results[k]:
            terminalreporter.write_line(line)
