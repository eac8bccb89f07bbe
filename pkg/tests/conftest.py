import time
from dataclasses import replace

import pytest

from vestsim import Scenario, default_config, run_charge

# criterion number -> (passed, detail); filled in by test_acceptance.py
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[n]
        ok = all(p for p, _ in checks)
        detail = "; ".join(f"{d}{'' if p else ' [FAIL]'}" for p, d in checks)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture(scope="session")
def base(cfg):
    return Scenario(cfg.params, protocol="vest", limits=cfg.limits, gains=cfg.gains)


class Timed:
    def __init__(self, result, seconds):
        self.result = result
        self.seconds = seconds


def timed_run(scenario):
    t0 = time.perf_counter()
    res = run_charge(scenario)
    return Timed(res, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def cccv_run(base):
    return timed_run(replace(base, protocol="cccv"))


@pytest.fixture(scope="session")
def vest_run(base):
    return timed_run(base)


@pytest.fixture
def short(base):
    """A one-minute charge, enough to open the plating gate."""
    return replace(base, t_max=60.0)
