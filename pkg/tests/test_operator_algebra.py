"""Property checks for the operator algebra behind every protocol stage."""

import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from models import LocalUnitary, is_unitary, projector_family_violations
from protocol import (
    Party,
    ProtocolConfig,
    correction_unitaries,
    decode_fourier,
    decoding_projectors,
    disentangle_teleportee,
    encoding_projectors,
    final_rotation,
    relabel_unitary,
    separate_ancilla,
    tailoring_projectors,
)
from qudit_core import apply_local, factored_unitary, fourier_matrix, pauli_x, pauli_z, random_state, tensor
from tests.conftest import unitary_from_seed

MAX_DIMENSION = 12


@st.composite
def protocol_configs(draw, max_d=MAX_DIMENSION):
    d = draw(st.integers(min_value=1, max_value=max_d))
    d1 = draw(st.integers(min_value=1, max_value=d))
    d2 = draw(st.integers(min_value=1, max_value=d // d1))
    return ProtocolConfig(d1, d2, d)


class TestFourierAndPauli:
    @pytest.mark.parametrize("n", range(1, MAX_DIMENSION + 1))
    def test_fourier_unitary(self, n):
        assert is_unitary(fourier_matrix(n))

    @pytest.mark.parametrize("n", range(1, MAX_DIMENSION + 1))
    def test_clock_shift_commutation(self, n):
        omega = np.exp(2j * np.pi / n)
        z, x = pauli_z(n, 1), pauli_x(n, 1)
        assert np.allclose(z @ x, omega * x @ z)

    @pytest.mark.parametrize("n", range(1, MAX_DIMENSION + 1))
    def test_fourier_maps_shift_to_clock(self, n):
        f = fourier_matrix(n)
        assert np.allclose(f @ pauli_x(n, 1) @ f.conj().T, pauli_z(n, 1))

    @seed(1)
    @given(n=st.integers(min_value=1, max_value=MAX_DIMENSION), shift=st.integers(min_value=-30, max_value=30))
    def test_shift_inverse(self, n, shift):
        assert np.allclose(pauli_x(n, shift) @ pauli_x(n, -shift), np.eye(n))
        assert np.allclose(pauli_z(n, shift) @ pauli_z(n, -shift), np.eye(n))


class TestApplyLocalProperties:
    @seed(2)
    @given(
        a=st.integers(min_value=1, max_value=5),
        b=st.integers(min_value=1, max_value=5),
        unitary_seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    def test_matches_kron_on_full_space(self, a, b, unitary_seed):
        rng = np.random.default_rng(unitary_seed)
        state = tensor(random_state(a, rng), random_state(b, rng))
        u = unitary_from_seed(b, unitary_seed)
        out = apply_local(state, LocalUnitary((1,), u))
        assert np.allclose(out.amps, np.kron(u, np.eye(a)) @ state.amps)

    @seed(3)
    @given(n=st.integers(min_value=1, max_value=MAX_DIMENSION), unitary_seed=st.integers(min_value=0, max_value=2**32 - 1))
    def test_inverse_restores_state(self, n, unitary_seed):
        state = random_state(n, np.random.default_rng(unitary_seed))
        u = unitary_from_seed(n, unitary_seed)
        out = apply_local(apply_local(state, LocalUnitary((0,), u)), LocalUnitary((0,), u.conj().T))
        assert np.allclose(out.amps, state.amps, atol=1e-12)


class TestFactoredUnitaryProperties:
    @seed(7)
    @given(
        d1=st.integers(min_value=1, max_value=4),
        d2=st.integers(min_value=1, max_value=4),
        unitary_seed=st.integers(min_value=0, max_value=2**32 - 4),
    )
    def test_homomorphism(self, d1, d2, unitary_seed):
        a, c = unitary_from_seed(d1, unitary_seed), unitary_from_seed(d1, unitary_seed + 1)
        b, d = unitary_from_seed(d2, unitary_seed + 2), unitary_from_seed(d2, unitary_seed + 3)
        product = factored_unitary(d1, d2, a, b) @ factored_unitary(d1, d2, c, d)
        assert np.max(np.abs(product - factored_unitary(d1, d2, a @ c, b @ d))) < 1e-10

    @seed(8)
    @given(
        d1=st.integers(min_value=1, max_value=4),
        d2=st.integers(min_value=1, max_value=4),
        unitary_seed=st.integers(min_value=0, max_value=2**32 - 2),
    )
    def test_unitary_factors_give_unitary(self, d1, d2, unitary_seed):
        u = factored_unitary(d1, d2, unitary_from_seed(d1, unitary_seed), unitary_from_seed(d2, unitary_seed + 1))
        assert is_unitary(u)


class TestProtocolOperators:
    @seed(4)
    @settings(max_examples=60, deadline=None)
    @given(config=protocol_configs())
    def test_stage_unitaries(self, config):
        for party in Party:
            assert is_unitary(disentangle_teleportee(party, config).matrix)
            assert is_unitary(decode_fourier(party, config).matrix)
        assert is_unitary(final_rotation(config).matrix)
        for k1 in range(config.d1):
            for k2 in range(config.d2):
                assert is_unitary(relabel_unitary(config, k1, k2).matrix)
                u1, u2 = correction_unitaries(config, k1, k2)
                assert is_unitary(u1.matrix)
                assert is_unitary(u2.matrix)

    @seed(5)
    @settings(max_examples=40, deadline=None)
    @given(config=protocol_configs())
    def test_measurement_families_complete(self, config):
        for family in (*encoding_projectors(config), *decoding_projectors(config)):
            assert projector_family_violations(list(family.projectors)) == []

    @seed(6)
    @settings(max_examples=25, deadline=None)
    @given(config=protocol_configs(max_d=8))
    def test_tailoring_family_needs_no_padding(self, config):
        family = tailoring_projectors(config.dp, config.d)
        assert family.labels == tuple(range(config.d))
        assert [int(round(np.trace(p).real)) for p in family.projectors] == [config.dp] * config.d
        for k in range(config.d):
            assert is_unitary(separate_ancilla(config, k).matrix)

    @pytest.mark.parametrize("d1, d2, d", [(1, 1, 1), (2, 2, 4), (2, 3, 6), (3, 2, 7), (2, 2, 6)])
    def test_identity_outcomes_give_identity(self, d1, d2, d):
        config = ProtocolConfig(d1, d2, d)
        assert np.allclose(relabel_unitary(config, 0, 0).matrix, np.eye(d))
        u1, u2 = correction_unitaries(config, 0, 0)
        assert np.allclose(u1.matrix, np.eye(d))
        assert np.allclose(u2.matrix, np.eye(d))
