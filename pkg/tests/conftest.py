import numpy as np
import pytest


def taylor_expm(a, terms=40):
    """Independent oracle: truncated Taylor series with scaling and squaring."""
    a = np.asarray(a, dtype=float)
    norm = np.max(np.sum(np.abs(a), axis=1))
    s = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0.5 else 0
    b = a / 2.0**s
    term = np.eye(a.shape[0])
    out = term.copy()
    for k in range(1, terms):
        term = term @ b / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def taylor_phi(a, terms=60):
    """phi(a) = sum a^k/(k+1)! for small ||a||."""
    a = np.asarray(a, dtype=float)
    term = np.eye(a.shape[0])
    out = term.copy()
    for k in range(1, terms):
        term = term @ a / (k + 1)
        out = out + term
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE: dict = {}


def record(number, title, ok, detail):
    """Store and print one acceptance line; the summary hook repeats them at the end."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
