"""
Dense pure-state simulation of qudit registers.

Every function here is pure: it takes frozen values and returns new ones.
Registers are reshaped in Fortran order so that axis s of the amplitude tensor
is subsystem s and subsystem 0 varies fastest, matching the composite index
convention of QuditRegister.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from functools import lru_cache

import numpy as np

from models import (
    NORM_TOL,
    OPERATOR_TOL,
    RESIDUAL,
    SCHMIDT_THRESHOLD,
    ZERO_PROBABILITY,
    InvalidArgumentError,
    LocalUnitary,
    MeasurementOutcome,
    NumericDegeneracyError,
    ProjectorFamily,
    QuditRegister,
    ZeroProbabilityBranchError,
    frozen_array,
    is_unitary,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Index tools
# ---------------------------------------------------------------------------


def split_index(j: int, d1: int, d2: int) -> tuple[int, int]:
    """Mixed-radix split j = j1 + j2*d1 with 0 <= j1 < d1, 0 <= j2 < d2."""
    if d1 < 1 or d2 < 1:
        raise InvalidArgumentError(f"Radices must be >= 1, got d1={d1}, d2={d2}")
    if not 0 <= j < d1 * d2:
        raise InvalidArgumentError(f"Index {j} out of range [0, {d1 * d2})")
    return j % d1, j // d1


def merge_index(j1: int, j2: int, d1: int, d2: int) -> int:
    """Inverse of split_index."""
    if not (0 <= j1 < d1 and 0 <= j2 < d2):
        raise InvalidArgumentError(f"Digits ({j1}, {j2}) out of range for radices ({d1}, {d2})")
    return j1 + j2 * d1


def _check_targets(targets: Sequence[int], num_subsystems: int) -> None:
    if len(set(targets)) != len(targets):
        raise InvalidArgumentError(f"Targets must be distinct, got {list(targets)}")
    for t in targets:
        if not 0 <= t < num_subsystems:
            raise InvalidArgumentError(f"Target {t} out of range for {num_subsystems} subsystems")


def _apply_matrix(state: QuditRegister, targets: Sequence[int], matrix: np.ndarray) -> np.ndarray:
    """Raw amplitudes of (matrix on targets, identity elsewhere) applied to state."""
    _check_targets(targets, state.num_subsystems)
    n = math.prod(state.dims[t] for t in targets)
    if matrix.shape != (n, n):
        raise InvalidArgumentError(
            f"Operator of shape {matrix.shape} does not match targets {list(targets)} with total dimension {n}"
        )
    tensor = state.amps.reshape(state.dims, order="F")
    front = list(range(len(targets)))
    moved = np.moveaxis(tensor, list(targets), front)
    shape = moved.shape
    out = (matrix @ moved.reshape((n, -1), order="F")).reshape(shape, order="F")
    return np.moveaxis(out, front, list(targets)).reshape(-1, order="F")


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------


def basis_state(n: int, index: int = 0) -> QuditRegister:
    if n < 1 or not 0 <= index < n:
        raise InvalidArgumentError(f"Basis state |{index}> does not exist in dimension {n}")
    amps = np.zeros(n, dtype=complex)
    amps[index] = 1.0
    return QuditRegister(dims=(n,), amps=amps)


def random_state(n: int, rng: np.random.Generator) -> QuditRegister:
    """Haar-random pure state: normalized i.i.d. standard complex Gaussians."""
    if n < 1:
        raise InvalidArgumentError(f"Dimension must be >= 1, got {n}")
    amps = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return QuditRegister(dims=(n,), amps=amps / np.linalg.norm(amps))


def tensor(a: QuditRegister, b: QuditRegister) -> QuditRegister:
    """a (x) b with a's subsystems first (least significant)."""
    return QuditRegister(dims=a.dims + b.dims, amps=np.kron(b.amps, a.amps))


def embed(state: QuditRegister, n: int) -> QuditRegister:
    """Place a single-subsystem state on the lowest levels of an n-level qudit."""
    if state.num_subsystems != 1:
        raise InvalidArgumentError(f"Can only embed a single subsystem, got dims {list(state.dims)}")
    if n < state.dimension:
        raise InvalidArgumentError(f"Cannot embed dimension {state.dimension} into {n}")
    amps = np.zeros(n, dtype=complex)
    amps[: state.dimension] = state.amps
    return QuditRegister(dims=(n,), amps=amps)


def truncate(state: QuditRegister, n: int) -> QuditRegister:
    """Inverse of embed. Weight above level n must be negligible."""
    if state.num_subsystems != 1:
        raise InvalidArgumentError(f"Can only truncate a single subsystem, got dims {list(state.dims)}")
    if not 1 <= n <= state.dimension:
        raise InvalidArgumentError(f"Cannot truncate dimension {state.dimension} to {n}")
    residual = state.weight(slice(n, None))
    if residual > ZERO_PROBABILITY:
        raise InvalidArgumentError(f"Residual weight {residual:.3e} above level {n}")
    kept = np.array(state.amps[:n])
    return QuditRegister(dims=(n,), amps=kept / np.linalg.norm(kept))


def permute_subsystems(state: QuditRegister, order: Sequence[int]) -> QuditRegister:
    """New subsystem i is old subsystem order[i]."""
    if sorted(order) != list(range(state.num_subsystems)):
        raise InvalidArgumentError(f"{list(order)} is not a permutation of {state.num_subsystems} subsystems")
    moved = np.transpose(state.amps.reshape(state.dims, order="F"), list(order))
    return QuditRegister(dims=tuple(state.dims[i] for i in order), amps=moved.reshape(-1, order="F"))


def discard_subsystem(state: QuditRegister, index: int, level: int = 0) -> QuditRegister:
    """Drop a subsystem that is in basis state |level>, unentangled from the rest."""
    if state.num_subsystems < 2:
        raise InvalidArgumentError("Cannot discard the only subsystem of a register")
    _check_targets([index], state.num_subsystems)
    if not 0 <= level < state.dims[index]:
        raise InvalidArgumentError(f"Level {level} out of range for subsystem {index}")
    part = np.take(state.amps.reshape(state.dims, order="F"), level, axis=index)
    weight = float(np.vdot(part, part).real)
    if 1.0 - weight > NORM_TOL:
        raise InvalidArgumentError(f"Subsystem {index} is not in |{level}>: weight {weight!r}")
    dims = state.dims[:index] + state.dims[index + 1 :]
    return QuditRegister(dims=dims, amps=part.reshape(-1, order="F") / math.sqrt(weight))


# ---------------------------------------------------------------------------
# Operator builders
# ---------------------------------------------------------------------------


@lru_cache(maxsize=256)
def fourier_matrix(n: int) -> np.ndarray:
    """F[m][j] = omega_n^(m*j) / sqrt(n)."""
    if n < 1:
        raise InvalidArgumentError(f"Fourier dimension must be >= 1, got {n}")
    idx = np.arange(n)
    exponent = np.outer(idx, idx) % n
    return frozen_array(np.exp(2j * np.pi * exponent / n) / math.sqrt(n))


@lru_cache(maxsize=256)
def pauli_x(n: int, shift: int = 1) -> np.ndarray:
    """|j> -> |j + shift mod n>."""
    if n < 1:
        raise InvalidArgumentError(f"Dimension must be >= 1, got {n}")
    matrix = np.zeros((n, n), dtype=complex)
    idx = np.arange(n)
    matrix[(idx + shift) % n, idx] = 1.0
    return frozen_array(matrix)


@lru_cache(maxsize=256)
def pauli_z(n: int, power: int = 1) -> np.ndarray:
    """|j> -> omega_n^(power*j) |j>."""
    if n < 1:
        raise InvalidArgumentError(f"Dimension must be >= 1, got {n}")
    exponent = (power * np.arange(n)) % n
    return frozen_array(np.diag(np.exp(2j * np.pi * exponent / n)))


def factored_unitary(d1: int, d2: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    a on the j1 digit and b on the j2 digit of j = j1 + j2*d1.

    With a = F_d1, b = I this is the subspace Fourier transform acting on the
    first digit; with a = I, b = F_d2 the one acting on the second.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != (d1, d1) or b.shape != (d2, d2):
        raise InvalidArgumentError(f"Factor shapes {a.shape}, {b.shape} do not match ({d1}, {d2})")
    if not (is_unitary(a) and is_unitary(b)):
        raise InvalidArgumentError("Both factors must be unitary")
    return frozen_array(np.kron(b, a))


def permutation_unitary(n: int, mapping: Sequence[int] | Mapping[int, int], phases: Sequence[complex] | None = None) -> np.ndarray:
    """U|s> = phases[s] |mapping[s]>."""
    if isinstance(mapping, Mapping):
        mapping = [mapping.get(s, -1) for s in range(n)]
    if len(mapping) != n or sorted(mapping) != list(range(n)):
        raise InvalidArgumentError(f"Mapping is not a bijection on {{0..{n - 1}}}")
    if phases is None:
        phases = np.ones(n, dtype=complex)
    phases = np.asarray(phases, dtype=complex)
    if phases.shape != (n,) or np.max(np.abs(np.abs(phases) - 1.0), initial=0.0) > NORM_TOL:
        raise InvalidArgumentError("Phases must be n unit-modulus complex numbers")
    matrix = np.zeros((n, n), dtype=complex)
    matrix[np.asarray(mapping), np.arange(n)] = phases
    return frozen_array(matrix)


def block_embed(matrix: np.ndarray, n: int) -> np.ndarray:
    """matrix on the lowest levels, identity above."""
    k = matrix.shape[0]
    if k > n:
        raise InvalidArgumentError(f"Block of size {k} does not fit in dimension {n}")
    out = np.eye(n, dtype=complex)
    out[:k, :k] = matrix
    return frozen_array(out)


def complete_family(targets: Sequence[int], projectors: Sequence[np.ndarray], labels: Sequence[int]) -> ProjectorFamily:
    """Build a family, adding one RESIDUAL projector onto whatever the others leave out."""
    n = projectors[0].shape[0]
    residual = np.eye(n, dtype=complex) - sum(projectors)
    if np.max(np.abs(residual)) > OPERATOR_TOL * n:
        projectors = [*projectors, residual]
        labels = [*labels, RESIDUAL]
    return ProjectorFamily(targets=tuple(targets), projectors=tuple(projectors), labels=tuple(labels))


# ---------------------------------------------------------------------------
# Dynamics and measurement
# ---------------------------------------------------------------------------


def apply_local(state: QuditRegister, u: LocalUnitary) -> QuditRegister:
    return QuditRegister(dims=state.dims, amps=_apply_matrix(state, u.targets, u.matrix))


def _outcomes(state: QuditRegister, family: ProjectorFamily) -> list[MeasurementOutcome]:
    outcomes = []
    for label, projector in zip(family.labels, family.projectors, strict=True):
        projected = _apply_matrix(state, family.targets, projector)
        probability = float(np.vdot(projected, projected).real)
        post = None
        if probability >= ZERO_PROBABILITY:
            post = QuditRegister(dims=state.dims, amps=projected / math.sqrt(probability))
        outcomes.append(MeasurementOutcome(label=label, probability=probability, post_state=post))
    return outcomes


def branches(state: QuditRegister, family: ProjectorFamily) -> list[MeasurementOutcome]:
    """Every outcome with its exact probability. Zero-weight branches have post_state None."""
    outcomes = _outcomes(state, family)
    total = sum(o.probability for o in outcomes)
    if abs(total - 1.0) > NORM_TOL:
        raise NumericDegeneracyError(f"Branch probabilities sum to {total!r}")
    return outcomes


def measure(
    state: QuditRegister,
    family: ProjectorFamily,
    rng: np.random.Generator | None = None,
    forced: int | None = None,
) -> MeasurementOutcome:
    """
    Born-rule projective measurement.

    With forced set, returns that branch instead of sampling (used for
    exhaustive enumeration); a forced zero-weight branch raises
    ZeroProbabilityBranchError.
    """
    outcomes = _outcomes(state, family)
    if forced is not None:
        for outcome in outcomes:
            if outcome.label == forced:
                if outcome.degenerate:
                    raise ZeroProbabilityBranchError(forced, outcome.probability)
                return outcome
        raise InvalidArgumentError(f"No outcome labelled {forced} (labels {list(family.labels)})")

    live = [o for o in outcomes if not o.degenerate]
    if not live:
        raise NumericDegeneracyError("Every branch has probability below the zero threshold")
    if rng is None:
        raise InvalidArgumentError("Sampling a measurement needs an rng or a forced outcome")
    weights = np.array([o.probability for o in live])
    chosen = live[int(rng.choice(len(live), p=weights / weights.sum()))]
    logger.debug("measured %s on targets %s with p=%.6f", chosen.label, family.targets, chosen.probability)
    return chosen


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def fidelity(a: QuditRegister, b: QuditRegister) -> float:
    """|<a|b>|^2, blind to global phase."""
    if a.dims != b.dims:
        raise InvalidArgumentError(f"Dims differ: {list(a.dims)} vs {list(b.dims)}")
    return float(abs(np.vdot(a.amps, b.amps)) ** 2)


def _cut_matrix(state: QuditRegister, cut: Sequence[int]) -> tuple[np.ndarray, list[int], list[int]]:
    left = list(cut)
    _check_targets(left, state.num_subsystems)
    right = [s for s in range(state.num_subsystems) if s not in left]
    if not left or not right:
        raise InvalidArgumentError(f"Cut {left} must leave both sides nonempty")
    rows = math.prod(state.dims[s] for s in left)
    moved = np.transpose(state.amps.reshape(state.dims, order="F"), left + right)
    return moved.reshape((rows, -1), order="F"), left, right


def schmidt_decomposition(state: QuditRegister, cut: Sequence[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Singular values and factors across cut | rest.

    Returns (values, left, right) with state = sum_i values[i] left[:, i] (x) right[i, :].
    """
    matrix, _, _ = _cut_matrix(state, cut)
    u, values, vh = np.linalg.svd(matrix, full_matrices=False)
    return values, u, vh


def is_product(state: QuditRegister, cut: Sequence[int]) -> tuple[bool, list[float]]:
    """Product iff exactly one Schmidt value exceeds the threshold."""
    matrix, _, _ = _cut_matrix(state, cut)
    values = np.linalg.svd(matrix, compute_uv=False)
    significant = [float(v) for v in values if v > SCHMIDT_THRESHOLD]
    return len(significant) == 1, significant


def split_product(state: QuditRegister, cut: Sequence[int]) -> tuple[QuditRegister, QuditRegister]:
    """
    Factor a product state into (cut part, rest).

    The global phase is pushed into the second factor so the largest-magnitude
    amplitude of the first is real and positive.
    """
    matrix, left, right = _cut_matrix(state, cut)
    u, values, vh = np.linalg.svd(matrix, full_matrices=False)
    significant = int(np.sum(values > SCHMIDT_THRESHOLD))
    if significant != 1:
        raise InvalidArgumentError(f"State is not a product across {left}: {significant} Schmidt values")
    first = u[:, 0]
    second = vh[0, :] * values[0]
    pivot = first[np.argmax(np.abs(first))]
    phase = pivot / abs(pivot)
    first = first / phase
    second = second * phase
    return (
        QuditRegister(dims=tuple(state.dims[s] for s in left), amps=first / np.linalg.norm(first)),
        QuditRegister(dims=tuple(state.dims[s] for s in right), amps=second / np.linalg.norm(second)),
    )
