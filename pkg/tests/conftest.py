import numpy as np
import pytest

from learnt_harmonic.chains import ChainStore

LN_2PI = np.log(2 * np.pi)


def gaussian_store(nchains=20, nsamples=500, ndim=2, ln_z=-3.0, seed=0, mean=0.0):
    """Exact iid draws from N(mean, I) as chains; ln posterior = ln N + ln z."""
    rng = np.random.default_rng(seed)
    X = mean + rng.standard_normal((nchains, nsamples, ndim))
    lnp = -0.5 * np.sum((X - mean) ** 2, axis=2) - 0.5 * ndim * LN_2PI + ln_z
    return ChainStore.from_arrays(X, lnp)


def bimodal_store(nchains=20, nsamples=500, sep=6.0, seed=0):
    """Equal mixture of N(+-sep/2 e_0, I) in 2-d, normalised (ln z = 0)."""
    rng = np.random.default_rng(seed)
    n = nchains * nsamples
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    X = rng.standard_normal((n, 2))
    X[:, 0] += 0.5 * sep * sign
    lnp = _bimodal_lnp(X, sep)
    return ChainStore.from_arrays(X.reshape(nchains, nsamples, 2), lnp.reshape(nchains, nsamples))


def _bimodal_lnp(X, sep):
    a = -0.5 * ((X[:, 0] - sep / 2) ** 2 + X[:, 1] ** 2)
    b = -0.5 * ((X[:, 0] + sep / 2) ** 2 + X[:, 1] ** 2)
    return np.logaddexp(a, b) - np.log(2) - LN_2PI


@pytest.fixture
def gstore():
    return gaussian_store()


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
