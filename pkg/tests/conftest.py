"""Shared test fixtures and helpers."""

import numpy as np
import pytest

from models import QuditRegister
from protocol import ProtocolConfig
from qudit_core import embed, random_state

# Configurations cheap enough to enumerate inside a unit test
SMALL_CONFIGS = [(1, 1, 1), (1, 2, 2), (2, 1, 2), (2, 1, 3), (2, 2, 4), (2, 2, 5), (2, 3, 6), (3, 2, 6)]

# d1*d2 > d
INVALID_CONFIGS = [(2, 2, 3), (3, 3, 8), (2, 4, 7)]


# --- Fixtures ---


@pytest.fixture
def rng():
    """Deterministic numpy Generator seeded at 42."""
    return np.random.default_rng(42)


@pytest.fixture
def config_224():
    return ProtocolConfig(2, 2, 4)


@pytest.fixture
def config_236():
    return ProtocolConfig(2, 3, 6)


@pytest.fixture
def config_213():
    """Needs tailoring: d' = 2 < d = 3."""
    return ProtocolConfig(2, 1, 3)


# --- Helper functions ---


def make_state(*amps):
    """Single-qudit register from unnormalized amplitudes."""
    amps = np.asarray(amps, dtype=complex)
    return QuditRegister(dims=(len(amps),), amps=amps / np.linalg.norm(amps))


def make_register(dims, amps):
    amps = np.asarray(amps, dtype=complex)
    return QuditRegister(dims=tuple(dims), amps=amps / np.linalg.norm(amps))


def make_inputs(config, seed=7):
    """Seeded Haar-random (alpha, beta) for a config."""
    rng = np.random.default_rng(seed)
    return random_state(config.d1, rng), random_state(config.d2, rng)


def expected_output_pair(config, alpha, beta):
    """Amplitudes of |beta>_c1 |alpha>_c2 on the [c1, c2] pair."""
    return np.kron(embed(alpha, config.d).amps, embed(beta, config.d).amps)


def protocol_amps(config, terms):
    """
    Amplitudes over [t1, c1, t2, c2] from {(t1, c1, t2, c2): amplitude}.

    Built index by index, independent of the reshape-based simulator.
    """
    d1, d2, d = config.d1, config.d2, config.d
    amps = np.zeros(d1 * d * d2 * d, dtype=complex)
    for (t1, c1, t2, c2), value in terms.items():
        amps[t1 + c1 * d1 + t2 * d1 * d + c2 * d1 * d * d2] += value
    return amps


def unitary_from_seed(n, seed):
    """Haar-ish random unitary from the QR decomposition of a complex Gaussian matrix."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))
