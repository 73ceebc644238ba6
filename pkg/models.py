"""
Data model for dense qudit simulation.

A register is an ordered list of subsystem dimensions plus one complex
amplitude vector. Subsystem 0 is the least significant digit of the composite
index, so a mixed-radix index j = j1 + j2*d1 reads the same way whether it
spans two subsystems or lives inside one qudit.

All values are frozen after construction and their arrays are read-only, so
they can be shared between threads without copying.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

# Label carried by the padding projector that completes a family
RESIDUAL = -1


def read_config_file() -> dict:
    """Read config.json next to this module. Missing or malformed file -> {}."""
    config_path = os.path.join(os.path.dirname(__file__), "config.json")
    try:
        with open(config_path) as f:
            config = json.load(f)
    except (FileNotFoundError, json.JSONDecodeError):
        return {}
    return config if isinstance(config, dict) else {}


def load_tolerances() -> dict:
    """Load numerical tolerances with defaults."""
    defaults = {
        "norm_tolerance": 1e-10,
        "operator_tolerance": 1e-12,
        "schmidt_threshold": 1e-8,
        "zero_probability": 1e-12,
    }
    config = read_config_file()
    for k in defaults:
        if k in config:
            defaults[k] = float(config[k])
    return defaults


TOLERANCES = load_tolerances()
NORM_TOL = TOLERANCES["norm_tolerance"]
OPERATOR_TOL = TOLERANCES["operator_tolerance"]  # scaled by matrix size n
SCHMIDT_THRESHOLD = TOLERANCES["schmidt_threshold"]
ZERO_PROBABILITY = TOLERANCES["zero_probability"]


class InvalidArgumentError(ValueError):
    pass


class NumericDegeneracyError(ArithmeticError):
    pass


class ZeroProbabilityBranchError(NumericDegeneracyError):
    """A forced measurement outcome has (numerically) zero probability."""

    def __init__(self, label: int, probability: float):
        super().__init__(f"Outcome {label} has probability {probability:.3e}, below {ZERO_PROBABILITY:.0e}")
        self.label = label
        self.probability = probability


def frozen_array(values, dtype=complex) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def unitarity_error(matrix: np.ndarray) -> float:
    """Largest entry of |U^dagger U - I|."""
    n = matrix.shape[0]
    return float(np.max(np.abs(matrix.conj().T @ matrix - np.eye(n)))) if n else 0.0


def is_unitary(matrix: np.ndarray) -> bool:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return False
    return unitarity_error(matrix) <= OPERATOR_TOL * matrix.shape[0]


def projector_family_violations(projectors: list[np.ndarray]) -> list[str]:
    """
    Check that projectors form one complete projective measurement.

    Each must be Hermitian and idempotent, every pair must multiply to zero,
    and together they must sum to the identity. Returns a list of violations
    (empty = valid).
    """
    violations = []
    if not projectors:
        return ["family has no projectors"]
    n = projectors[0].shape[0]
    tol = OPERATOR_TOL * n
    for idx, p in enumerate(projectors):
        if p.shape != (n, n):
            violations.append(f"projector {idx} has shape {p.shape}, expected {(n, n)}")
            return violations
        if np.max(np.abs(p - p.conj().T)) > tol:
            violations.append(f"projector {idx} is not Hermitian")
        if np.max(np.abs(p @ p - p)) > tol:
            violations.append(f"projector {idx} is not idempotent")
    for a in range(len(projectors)):
        for b in range(a + 1, len(projectors)):
            if np.max(np.abs(projectors[a] @ projectors[b])) > tol:
                violations.append(f"projectors {a} and {b} are not orthogonal")
    if np.max(np.abs(sum(projectors) - np.eye(n))) > tol:
        violations.append("projectors do not sum to the identity")
    return violations


@dataclass(frozen=True, eq=False)
class QuditRegister:
    """
    Pure state of a register of qudits with heterogeneous dimensions.

    amps[I] is the amplitude of composite index I = sum_s i_s * prod_{t<s} dims[t].
    """

    dims: tuple[int, ...]
    amps: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise InvalidArgumentError("Register needs at least one subsystem")
        if any(d < 1 for d in dims):
            raise InvalidArgumentError(f"Subsystem dimensions must be >= 1, got {list(dims)}")
        amps = frozen_array(np.ravel(self.amps))
        if amps.shape[0] != math.prod(dims):
            raise InvalidArgumentError(f"Expected {math.prod(dims)} amplitudes for dims {list(dims)}, got {amps.shape[0]}")
        norm_sq = float(np.vdot(amps, amps).real)
        if abs(norm_sq - 1.0) > NORM_TOL:
            raise InvalidArgumentError(f"Amplitudes are not normalized: sum |a|^2 = {norm_sq!r}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "amps", amps)

    @property
    def dimension(self) -> int:
        return self.amps.shape[0]

    @property
    def num_subsystems(self) -> int:
        return len(self.dims)

    def weight(self, levels: slice) -> float:
        """Total probability on a range of composite indices."""
        part = self.amps[levels]
        return float(np.vdot(part, part).real)


@dataclass(frozen=True, eq=False)
class LocalUnitary:
    """
    A unitary acting on a subset of subsystems.

    The matrix index follows the register convention restricted to the
    targets: targets[0] is least significant.
    """

    targets: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        targets = tuple(int(t) for t in self.targets)
        if not targets:
            raise InvalidArgumentError("LocalUnitary needs at least one target")
        if len(set(targets)) != len(targets) or min(targets) < 0:
            raise InvalidArgumentError(f"Targets must be distinct non-negative indices, got {list(targets)}")
        matrix = frozen_array(self.matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise InvalidArgumentError(f"Unitary must be square, got shape {matrix.shape}")
        if not is_unitary(matrix):
            raise InvalidArgumentError(f"Matrix is not unitary (error {unitarity_error(matrix):.3e})")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "matrix", matrix)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def on(self, *targets: int) -> LocalUnitary:
        """Same matrix bound to other subsystems."""
        return LocalUnitary(targets=targets, matrix=self.matrix)


@dataclass(frozen=True, eq=False)
class ProjectorFamily:
    """
    One projective measurement: a complete set of orthogonal projectors.

    labels[i] names the outcome of projectors[i]. The padding projector that
    completes a family whose proper outcomes span only part of the space is
    labelled RESIDUAL.
    """

    targets: tuple[int, ...]
    projectors: tuple[np.ndarray, ...]
    labels: tuple[int, ...] = field(default=())

    def __post_init__(self):
        targets = tuple(int(t) for t in self.targets)
        if len(set(targets)) != len(targets) or (targets and min(targets) < 0):
            raise InvalidArgumentError(f"Targets must be distinct non-negative indices, got {list(targets)}")
        projectors = tuple(frozen_array(p) for p in self.projectors)
        labels = tuple(int(label) for label in self.labels) or tuple(range(len(projectors)))
        if len(labels) != len(projectors):
            raise InvalidArgumentError(f"{len(labels)} labels for {len(projectors)} projectors")
        if len(set(labels)) != len(labels):
            raise InvalidArgumentError(f"Outcome labels must be unique, got {list(labels)}")
        violations = projector_family_violations(list(projectors))
        if violations:
            raise InvalidArgumentError(f"Invalid projector family: {'; '.join(violations)}")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "projectors", projectors)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return self.projectors[0].shape[0]

    @property
    def proper_labels(self) -> tuple[int, ...]:
        return tuple(label for label in self.labels if label != RESIDUAL)

    def projector(self, label: int) -> np.ndarray:
        try:
            return self.projectors[self.labels.index(label)]
        except ValueError:
            raise InvalidArgumentError(f"No outcome labelled {label} (labels {list(self.labels)})") from None


@dataclass(frozen=True, eq=False)
class MeasurementOutcome:
    """One branch of a measurement. post_state is None when the branch has zero weight."""

    label: int
    probability: float
    post_state: QuditRegister | None

    @property
    def degenerate(self) -> bool:
        return self.post_state is None
