import numpy as np
import pytest

from haltmix.bd_spectral import BirthDeathChain
from haltmix.chain_core import DiscreteChain

_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")
    config.stash[_ACCEPTANCE] = {}


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None and (report.when == "call" or report.outcome != "passed"):
        number, title = marker.args
        results = item.config.stash[_ACCEPTANCE]
        prev = results.get(number, (title, True, []))
        ok = prev[1] and report.outcome == "passed"
        results[number] = (title, ok, prev[2] + ([item.name] if report.outcome != "passed" else []))
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash[_ACCEPTANCE]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, ok, failed = results[number]
        line = f"{'PASS' if ok else 'FAIL'}  {number:>2}. {title}"
        if failed:
            line += f"  (failed: {', '.join(failed)})"
        terminalreporter.write_line(line)


# ---------------------------------------------------------------------------
# seeded chain generators


def random_bd(rng: np.random.Generator, N: int, lo: float = 0.2, hi: float = 0.45) -> BirthDeathChain:
    """BD chain with up/down rates in [lo, hi]; the rest is holding."""
    p = rng.uniform(lo, hi, N)
    q = rng.uniform(lo, hi, N)
    return BirthDeathChain.from_rates(p, q)


def random_dense(rng: np.random.Generator, n: int, density: float = 0.3) -> DiscreteChain:
    """Irreducible aperiodic kernel: a random sparse matrix plus a cycle and holding."""
    K = rng.random((n, n)) * (rng.random((n, n)) < density)
    K[np.arange(n), (np.arange(n) + 1) % n] += 0.5
    K[np.arange(n), np.arange(n)] += 0.1
    K /= K.sum(axis=1, keepdims=True)
    return DiscreteChain.from_kernel(K)


def random_symmetric_bd(rng: np.random.Generator, N: int, zero_holding: bool = False) -> BirthDeathChain:
    """Chain on {0..N} invariant under x -> N - x, i.e. q_x = p_{N-x}."""
    p = np.zeros(N + 1)
    if zero_holding:
        # p_x + p_{N-x} = 1 with p_0 = 1
        for x in range(N + 1):
            if x < N - x:
                p[x] = 1.0 if x == 0 else rng.uniform(0.2, 0.8)
                p[N - x] = 1.0 - p[x]
            elif x == N - x:
                p[x] = 0.5
    else:
        p[:N] = rng.uniform(0.05, 0.5, N)
    q = p[::-1].copy()
    if zero_holding:
        r = np.zeros(N + 1)
    else:
        r = np.clip(1.0 - p - q, 0.0, None)
        # symmetrize exactly: 1 - a - b and 1 - b - a may differ in the last bit
        r = 0.5 * (r + r[::-1])
    return BirthDeathChain(p, q, r)


def random_monotone_bd(rng: np.random.Generator, N: int) -> BirthDeathChain:
    """BD chain with p_x, q_x < 1/2, hence p_x + q_{x+1} <= 1."""
    return BirthDeathChain.from_rates(rng.uniform(0.02, 0.5, N), rng.uniform(0.02, 0.5, N))
