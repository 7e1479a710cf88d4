import numpy as np
import pytest

from rgnhr.cpd import CpdPoint, is_strictly_subgeneric


def random_point(rng, shape, r):
    return CpdPoint.from_factors([rng.standard_normal((n, r)) for n in shape])


def random_instance(rng, max_n=5, max_r=6):
    """Random 3-way shape with each n_k <= max_n and a strictly subgeneric rank."""
    while True:
        shape = tuple(int(n) for n in rng.integers(2, max_n + 1, size=3))
        rmax = min(max_r, int(np.prod(shape)) // (1 + sum(n - 1 for n in shape)))
        r = int(rng.integers(1, rmax + 1)) if rmax >= 1 else 1
        if is_strictly_subgeneric(shape, r):
            return shape, r


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


ACCEPTANCE = "test_acceptance.py"


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if ACCEPTANCE not in getattr(rep, "nodeid", "") or rep.when != "call":
                continue
            props = dict(rep.user_properties)
            rows.append((props.get("order", 99), props.get("criterion", rep.nodeid),
                         "PASS" if rep.passed else "FAIL", props.get("detail", "")))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for _, name, verdict, detail in sorted(rows):
        terminalreporter.write_line(f"{verdict}  {name}" + (f"  [{detail}]" if detail else ""))
