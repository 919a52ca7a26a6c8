from __future__ import annotations

import re
from typing import Optional

import numpy as np
import pytest
from hypothesis import settings

from gpmatch.circuit import Circuit, CircuitBuilder
from gpmatch.net.broker import BrokerThread

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# ---------------------------------------------------------------- corpora


def random_circuit(
    rng: np.random.Generator,
    n_inputs: int,
    depth: int,
    prefix: str = "x",
    const_rate: float = 0.05,
) -> Circuit:
    """Random AND/OR/NOT/CONST tree-ish DAG of exactly ``depth`` over ``prefix`` inputs.

    One child of every gate carries the full remaining depth; the other is
    drawn shallower, so lifting of uneven subtrees gets exercised.  Reuse of
    earlier nodes makes real DAG sharing common.
    """
    b = CircuitBuilder()
    pool: dict[int, list[int]] = {}

    def leaf() -> int:
        if rng.random() < const_rate:
            return b.const(int(rng.integers(2)))
        node = b.input(f"{prefix}{int(rng.integers(n_inputs))}")
        return b.not_(node) if rng.random() < 0.3 else node

    def grow(d: int) -> int:
        if d == 0:
            return leaf()
        if pool.get(d) and rng.random() < 0.1:
            return pool[d][int(rng.integers(len(pool[d])))]
        hi = grow(d - 1)
        lo = grow(int(rng.integers(0, d)))
        left, right = (hi, lo) if rng.random() < 0.5 else (lo, hi)
        node = b.and_(left, right) if rng.random() < 0.5 else b.or_(left, right)
        node = b.not_(node) if rng.random() < 0.25 else node
        pool.setdefault(d, []).append(node)
        return node

    out = grow(depth)
    return b.build(out)


def circuit_corpus(count: int, max_inputs: int = 6, max_depth: int = 6, seed: int = 7) -> list[Circuit]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = int(rng.integers(1, max_inputs + 1))
        d = i % (max_depth + 1)
        out.append(random_circuit(rng, n, d))
    return out


@pytest.fixture(scope="session")
def corpus() -> list[Circuit]:
    return circuit_corpus(210)


@pytest.fixture
def broker():
    with BrokerThread() as b:
        yield b


# -------------------------------------------------------- acceptance report

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_details: dict[int, list[str]] = {}
_outcomes: dict[int, list[bool]] = {}


@pytest.fixture
def report(request):
    """``report(text)`` attaches a measurement line to this criterion's summary."""
    m = _CRITERION.search(request.node.name)
    number: Optional[int] = int(m.group(1)) if m else None

    def add(text: str) -> None:
        if number is not None:
            _details.setdefault(number, []).append(text)
        print(text)

    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = _CRITERION.search(item.name)
    if m and (rep.when == "call" or (rep.when == "setup" and rep.failed)):
        _outcomes.setdefault(int(m.group(1)), []).append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in range(1, 10):
        results = _outcomes.get(number)
        if results is None:
            tr.write_line(f"criterion {number}: NOT RUN")
            continue
        status = "PASS" if all(results) else "FAIL"
        detail = "; ".join(_details.get(number, []))
        tr.write_line(f"criterion {number}: {status}" + (f"  [{detail}]" if detail else ""))
