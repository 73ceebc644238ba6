"""Tests for the data model: registers, local unitaries, projector families, tolerances."""

import numpy as np
import pytest

import models
from models import (
    RESIDUAL,
    InvalidArgumentError,
    LocalUnitary,
    MeasurementOutcome,
    ProjectorFamily,
    QuditRegister,
    ZeroProbabilityBranchError,
    is_unitary,
    projector_family_violations,
)


class TestTolerances:
    def test_defaults_match_config_file(self):
        assert models.NORM_TOL == 1e-10
        assert models.OPERATOR_TOL == 1e-12
        assert models.SCHMIDT_THRESHOLD == 1e-8
        assert models.ZERO_PROBABILITY == 1e-12

    def test_missing_config_file_falls_back_to_defaults(self, monkeypatch):
        monkeypatch.setattr(models, "read_config_file", lambda: {})
        assert models.load_tolerances()["norm_tolerance"] == 1e-10

    def test_config_overlay_only_known_keys(self, monkeypatch):
        monkeypatch.setattr(models, "read_config_file", lambda: {"schmidt_threshold": 1e-6, "unknown": 3})
        tolerances = models.load_tolerances()
        assert tolerances["schmidt_threshold"] == 1e-6
        assert "unknown" not in tolerances


class TestQuditRegister:
    def test_create_register(self):
        state = QuditRegister(dims=(2, 3), amps=[0, 1, 0, 0, 0, 0])
        assert state.dims == (2, 3)
        assert state.dimension == 6
        assert state.num_subsystems == 2

    def test_amplitudes_are_read_only(self):
        state = QuditRegister(dims=(2,), amps=[1, 0])
        with pytest.raises(ValueError):
            state.amps[0] = 0

    def test_input_array_is_copied(self):
        amps = np.array([1, 0], dtype=complex)
        state = QuditRegister(dims=(2,), amps=amps)
        amps[0] = 0
        assert state.amps[0] == 1

    def test_rejects_unnormalized(self):
        with pytest.raises(InvalidArgumentError, match="not normalized"):
            QuditRegister(dims=(2,), amps=[1, 1])

    def test_accepts_norm_within_tolerance(self):
        QuditRegister(dims=(2,), amps=[1 + 1e-12, 0])

    def test_rejects_length_mismatch(self):
        with pytest.raises(InvalidArgumentError, match="Expected 6 amplitudes"):
            QuditRegister(dims=(2, 3), amps=[1, 0, 0, 0])

    def test_rejects_zero_dimension(self):
        with pytest.raises(InvalidArgumentError):
            QuditRegister(dims=(0,), amps=[])

    def test_rejects_empty_dims(self):
        with pytest.raises(InvalidArgumentError):
            QuditRegister(dims=(), amps=[1])

    def test_weight_of_level_range(self):
        state = QuditRegister(dims=(4,), amps=[0.6, 0, 0.8, 0])
        assert state.weight(slice(2, None)) == pytest.approx(0.64)


class TestLocalUnitary:
    def test_create(self):
        u = LocalUnitary(targets=(0,), matrix=[[0, 1], [1, 0]])
        assert u.size == 2
        assert u.targets == (0,)

    def test_rejects_non_unitary(self):
        with pytest.raises(InvalidArgumentError, match="not unitary"):
            LocalUnitary(targets=(0,), matrix=[[1, 1], [0, 1]])

    def test_rejects_non_square(self):
        with pytest.raises(InvalidArgumentError, match="square"):
            LocalUnitary(targets=(0,), matrix=np.ones((2, 3)))

    def test_rejects_repeated_targets(self):
        with pytest.raises(InvalidArgumentError, match="distinct"):
            LocalUnitary(targets=(1, 1), matrix=np.eye(4))

    def test_retarget_keeps_matrix(self):
        u = LocalUnitary(targets=(1,), matrix=np.eye(3))
        moved = u.on(3)
        assert moved.targets == (3,)
        assert np.array_equal(moved.matrix, u.matrix)


class TestIsUnitary:
    def test_identity(self):
        assert is_unitary(np.eye(5))

    def test_scaled_identity(self):
        assert not is_unitary(2 * np.eye(2))

    def test_non_square(self):
        assert not is_unitary(np.ones((2, 3)))


class TestProjectorFamily:
    def basis_family(self, n):
        projectors = []
        for i in range(n):
            p = np.zeros((n, n))
            p[i, i] = 1
            projectors.append(p)
        return projectors

    def test_default_labels(self):
        family = ProjectorFamily(targets=(0,), projectors=self.basis_family(3))
        assert family.labels == (0, 1, 2)
        assert family.size == 3

    def test_incomplete_family_rejected(self):
        with pytest.raises(InvalidArgumentError, match="sum to the identity"):
            ProjectorFamily(targets=(0,), projectors=self.basis_family(3)[:2])

    def test_overlapping_projectors_rejected(self):
        half = np.full((2, 2), 0.5)
        violations = projector_family_violations([np.eye(2), half])
        assert any("orthogonal" in v for v in violations)

    def test_non_idempotent_rejected(self):
        violations = projector_family_violations([2 * np.eye(2)])
        assert any("idempotent" in v for v in violations)

    def test_valid_family_has_no_violations(self):
        assert projector_family_violations(self.basis_family(4)) == []

    def test_empty_family(self):
        assert projector_family_violations([]) == ["family has no projectors"]

    def test_duplicate_labels_rejected(self):
        with pytest.raises(InvalidArgumentError, match="unique"):
            ProjectorFamily(targets=(0,), projectors=self.basis_family(2), labels=(1, 1))

    def test_proper_labels_skip_residual(self):
        family = ProjectorFamily(targets=(0,), projectors=self.basis_family(2), labels=(0, RESIDUAL))
        assert family.proper_labels == (0,)

    def test_projector_lookup_by_label(self):
        family = ProjectorFamily(targets=(0,), projectors=self.basis_family(2), labels=(5, 7))
        assert family.projector(7)[1, 1] == 1
        with pytest.raises(InvalidArgumentError, match="No outcome labelled 3"):
            family.projector(3)


class TestMeasurementOutcome:
    def test_degenerate_when_no_post_state(self):
        assert MeasurementOutcome(label=1, probability=0.0, post_state=None).degenerate

    def test_zero_probability_error_carries_label(self):
        err = ZeroProbabilityBranchError(3, 1e-20)
        assert err.label == 3
        assert err.probability == 1e-20
        assert isinstance(err, ArithmeticError)
