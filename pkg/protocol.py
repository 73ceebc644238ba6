"""
Two-way qudit teleportation.

Alice holds a d1-level teleportee, Bob a d2-level one, and they share one
maximally entangled pair of d-level channel qudits. Whenever d1*d2 <= d both
states cross in opposite directions with unit fidelity, in three stages:

1. Tailoring -- only when d' = d1*d2 < d. An ancilla measurement plus a shift
   turns the d-level channel into a d'-level maximally entangled pair.
2. Encoding -- each party projects teleportee + channel qudit onto one of
   d_r subspaces, they swap outcomes k1/k2, relabel the channel and clear
   their teleportees to |0>.
3. Decoding -- subspace Fourier transforms, a second pair of measurements
   m1/m2, phase/shift corrections that need the other party's outcome, and
   a final basis rotation on Alice's side.

Channel levels below d' are read as two digits j = j1 + j2*d1. Every partial
map of the construction is completed to a permutation or generalized Pauli
form that agrees with it on the protocol's support and acts as the identity on
levels >= d'.
"""

from __future__ import annotations

import logging
import numbers
from collections.abc import Mapping
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import ClassVar

import numpy as np

from models import (
    NORM_TOL,
    RESIDUAL,
    InvalidArgumentError,
    LocalUnitary,
    MeasurementOutcome,
    NumericDegeneracyError,
    ProjectorFamily,
    QuditRegister,
    ZeroProbabilityBranchError,
)
from qudit_core import (
    apply_local,
    block_embed,
    branches,
    complete_family,
    discard_subsystem,
    embed,
    factored_unitary,
    fidelity,
    fourier_matrix,
    is_product,
    measure,
    merge_index,
    pauli_x,
    pauli_z,
    permutation_unitary,
    permute_subsystems,
    split_index,
    split_product,
    tensor,
)

logger = logging.getLogger(__name__)

# Classical messages in the order the stages produce them
MESSAGE_TAGS = ("k", "k1", "k2", "m1", "m2")


class ConfigError(InvalidArgumentError):
    pass


class ProtocolInvariantError(RuntimeError):
    """An intermediate state or message broke an invariant of the named stage."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.detail = message


class Party(Enum):
    ALICE = "Alice"
    BOB = "Bob"

    @property
    def other(self) -> Party:
        return Party.BOB if self is Party.ALICE else Party.ALICE


# Who announces each outcome
SENDERS = {"k": Party.ALICE, "k1": Party.ALICE, "k2": Party.BOB, "m1": Party.ALICE, "m2": Party.BOB}


@dataclass(frozen=True)
class ProtocolConfig:
    """Teleportee dimensions d1 (Alice) and d2 (Bob), channel dimension d."""

    d1: int
    d2: int
    d: int

    def __post_init__(self):
        for name in ("d1", "d2", "d"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.d1 * self.d2 > self.d:
            raise ConfigError(
                f"Constraint d1*d2 <= d violated: {self.d1}*{self.d2} = {self.d1 * self.d2} > {self.d}"
            )

    @property
    def dp(self) -> int:
        """d' = d1*d2, the channel dimension the encoding stage works with."""
        return self.d1 * self.d2

    @property
    def needs_tailoring(self) -> bool:
        return self.dp < self.d

    def bound(self, tag: str) -> int:
        """Number of values a message tag can take."""
        return {"k": self.d, "k1": self.d1, "k2": self.d2, "m1": self.d1, "m2": self.d2}[tag]

    @property
    def tags(self) -> tuple[str, ...]:
        return MESSAGE_TAGS if self.needs_tailoring else MESSAGE_TAGS[1:]

    def as_dict(self) -> dict:
        return {"d1": self.d1, "d2": self.d2, "d": self.d}


@dataclass(frozen=True)
class RegisterLayout:
    """
    Subsystem order of the protocol register: [teleportee1, c1, teleportee2, c2].

    Tailoring runs before the teleportees join, on its own register
    [ancilla, c1, c2].
    """

    config: ProtocolConfig

    T1: ClassVar[int] = 0
    C1: ClassVar[int] = 1
    T2: ClassVar[int] = 2
    C2: ClassVar[int] = 3

    ANCILLA: ClassVar[int] = 0
    TAILOR_C1: ClassVar[int] = 1
    TAILOR_C2: ClassVar[int] = 2

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.config.d1, self.config.d, self.config.d2, self.config.d)

    @property
    def tailoring_dims(self) -> tuple[int, ...]:
        return (self.config.dp, self.config.d, self.config.d)

    @classmethod
    def teleportee(cls, party: Party) -> int:
        return cls.T1 if party is Party.ALICE else cls.T2

    @classmethod
    def channel(cls, party: Party) -> int:
        return cls.C1 if party is Party.ALICE else cls.C2


@dataclass(frozen=True)
class ClassicalMessage:
    sender: Party
    receiver: Party
    tag: str
    value: int

    def __post_init__(self):
        if self.tag not in MESSAGE_TAGS:
            raise InvalidArgumentError(f"Unknown message tag {self.tag!r}")
        if self.sender is self.receiver:
            raise InvalidArgumentError(f"{self.sender.value} cannot message itself")

    def as_dict(self) -> dict:
        return {"sender": self.sender.value, "receiver": self.receiver.value, "tag": self.tag, "value": self.value}


@dataclass(frozen=True, eq=False)
class StageEntry:
    """One stage transition: outcomes measured in it, their probabilities and the resulting state."""

    stage: str
    outcomes: dict[str, int]
    probabilities: dict[str, float]
    snapshot: QuditRegister


@dataclass(frozen=True, eq=False)
class ProtocolTranscript:
    config: ProtocolConfig
    entries: tuple[StageEntry, ...] = ()
    messages: tuple[ClassicalMessage, ...] = ()

    def with_entry(self, entry: StageEntry) -> ProtocolTranscript:
        return ProtocolTranscript(self.config, (*self.entries, entry), self.messages)

    def with_message(self, message: ClassicalMessage) -> ProtocolTranscript:
        """Append a message. Values must be in range and tags must follow stage order."""
        bound = self.config.bound(message.tag)
        if not 0 <= message.value < bound:
            raise ProtocolInvariantError("messaging", f"{message.tag}={message.value} outside [0, {bound})")
        if any(m.tag == message.tag for m in self.messages):
            raise ProtocolInvariantError("messaging", f"{message.tag} sent twice")
        if self.messages and MESSAGE_TAGS.index(message.tag) < MESSAGE_TAGS.index(self.messages[-1].tag):
            raise ProtocolInvariantError("messaging", f"{message.tag} sent after {self.messages[-1].tag}")
        return ProtocolTranscript(self.config, self.entries, (*self.messages, message))

    def received(self, tag: str, receiver: Party, stage: str) -> int:
        """Value of a message the receiver already holds."""
        for message in self.messages:
            if message.tag == tag and message.receiver is receiver:
                return message.value
        raise ProtocolInvariantError(stage, f"{receiver.value} needs {tag} before it was sent")

    @property
    def outcomes(self) -> dict[str, int]:
        return {m.tag: m.value for m in self.messages}

    @property
    def leaf_probability(self) -> float:
        p = 1.0
        for entry in self.entries:
            for value in entry.probabilities.values():
                p *= value
        return p

    def snapshot(self, stage: str) -> QuditRegister:
        for entry in self.entries:
            if entry.stage == stage:
                return entry.snapshot
        raise KeyError(stage)

    @property
    def stages(self) -> list[str]:
        return [entry.stage for entry in self.entries]


@dataclass(frozen=True, eq=False)
class ProtocolResult:
    """
    Outputs of one run.

    alice_out holds |beta> on its lowest d2 levels, bob_out holds |alpha> on
    its lowest d1 levels; final_state is the [c1, c2] pair they factor from.
    """

    alice_out: QuditRegister
    bob_out: QuditRegister
    fidelity_alpha: float
    fidelity_beta: float
    transcript: ProtocolTranscript
    final_state: QuditRegister = field(repr=False)
    probability: float = 1.0


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------


def _paired_channel(d: int, rank: int) -> QuditRegister:
    """sum_{i<rank} |i>|i> / sqrt(rank) on two d-level qudits."""
    amps = np.zeros(d * d, dtype=complex)
    for i in range(rank):
        amps[i + i * d] = 1.0
    return QuditRegister(dims=(d, d), amps=amps / np.sqrt(rank))


def prepare_channel(d: int) -> QuditRegister:
    """The shared maximally entangled pair (1/sqrt d) sum_i |i>_c1 |i>_c2."""
    if d < 1:
        raise InvalidArgumentError(f"Channel dimension must be >= 1, got {d}")
    return _paired_channel(d, d)


def prepare_ancilla(dp: int) -> QuditRegister:
    """Uniform superposition over dp levels, i.e. F_dp |0>."""
    if dp < 1:
        raise InvalidArgumentError(f"Ancilla dimension must be >= 1, got {dp}")
    return QuditRegister(dims=(dp,), amps=fourier_matrix(dp)[:, 0])


# ---------------------------------------------------------------------------
# Tailoring
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def tailoring_projectors(dp: int, d: int) -> ProjectorFamily:
    """R_k = sum_{n<dp} |n>_0 |n+k mod d>_c1 <..|, k = 0..d-1, on [ancilla, c1]."""
    if not 1 <= dp <= d:
        raise InvalidArgumentError(f"Need 1 <= dp <= d, got dp={dp}, d={d}")
    size = dp * d
    projectors = []
    for k in range(d):
        p = np.zeros((size, size), dtype=complex)
        for n in range(dp):
            idx = n + ((n + k) % d) * dp
            p[idx, idx] = 1.0
        projectors.append(p)
    return complete_family((RegisterLayout.ANCILLA, RegisterLayout.TAILOR_C1), projectors, list(range(d)))


@lru_cache(maxsize=256)
def separate_ancilla(config: ProtocolConfig, k: int) -> LocalUnitary:
    """
    |n>_0 |n+k>_c1 -> |0>_0 |n+k>_c1.

    Completed as controlled subtraction on the ancilla keyed by v = (c - k) mod d,
    identity where v >= d'.
    """
    dp, d = config.dp, config.d
    if not 0 <= k < d:
        raise InvalidArgumentError(f"k={k} out of range [0, {d})")
    mapping = list(range(dp * d))
    for c in range(d):
        v = (c - k) % d
        if v >= dp:
            continue
        for a in range(dp):
            mapping[a + c * dp] = (a - v) % dp + c * dp
    return LocalUnitary(
        targets=(RegisterLayout.ANCILLA, RegisterLayout.TAILOR_C1), matrix=permutation_unitary(dp * d, mapping)
    )


def tailor_channel(
    channel: QuditRegister,
    config: ProtocolConfig,
    rng: np.random.Generator | None = None,
    forced: int | None = None,
) -> tuple[QuditRegister, ClassicalMessage | None, tuple[StageEntry, ...]]:
    """
    Turn the d-level channel into a d'-level maximally entangled pair.

    Returns the [c1, c2] channel, Alice's k message (None when d' = d, where
    the stage is recorded as a no-op) and the stage entries.
    """
    if channel.dims != (config.d, config.d) or fidelity(channel, prepare_channel(config.d)) < 1.0 - NORM_TOL:
        raise InvalidArgumentError("tailor_channel expects the maximally entangled channel on two d-level qudits")
    if not config.needs_tailoring:
        return channel, None, (StageEntry("tailoring", {}, {}, channel),)
    if forced is None and rng is None:
        raise InvalidArgumentError("Tailoring needs an rng or a forced k")
    if forced is not None and not 0 <= forced < config.d:
        raise InvalidArgumentError(f"Forced k={forced} outside [0, {config.d})")

    stage = "tailoring"
    layout = RegisterLayout
    with _stage(stage):
        joint = tensor(prepare_ancilla(config.dp), channel)
        outcome = measure(joint, tailoring_projectors(config.dp, config.d), rng=rng, forced=forced)
        if outcome.label == RESIDUAL:
            raise ProtocolInvariantError(stage, "residual outcome in a complete tailoring measurement")
        k = outcome.label
        entries = [StageEntry("tailoring.measure", {"k": k}, {"k": outcome.probability}, outcome.post_state)]

        state = apply_local(outcome.post_state, separate_ancilla(config, k))
        message = ClassicalMessage(Party.ALICE, Party.BOB, "k", k)
        sent = ProtocolTranscript(config).with_message(message)
        state = apply_local(state, LocalUnitary((layout.TAILOR_C1,), pauli_x(config.d, -k)))
        bob_k = sent.received("k", Party.BOB, stage)
        state = apply_local(state, LocalUnitary((layout.TAILOR_C2,), pauli_x(config.d, -bob_k)))
        state = discard_subsystem(state, layout.ANCILLA)

    if fidelity(state, _paired_channel(config.d, config.dp)) < 1.0 - NORM_TOL:
        raise ProtocolInvariantError(stage, f"channel after tailoring (k={k}) is not the d'-level pair")
    entries.append(StageEntry(stage, {}, {}, state))
    logger.debug("tailoring: k=%d p=%.6f", k, outcome.probability)
    return state, message, tuple(entries)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def encoding_projectors(config: ProtocolConfig) -> tuple[ProjectorFamily, ProjectorFamily]:
    """
    Alice's P_k1 on [teleportee1, c1] and Bob's P_k2 on [teleportee2, c2].

    P_k1 projects onto |j1>|(j1 + k1 mod d1) + j2*d1>, P_k2 onto
    |j2>|j1 + (j2 + k2 mod d2)*d1>.
    """
    d1, d2, d = config.d1, config.d2, config.d
    alice, bob = [], []
    for k1 in range(d1):
        p = np.zeros((d1 * d, d1 * d), dtype=complex)
        for j1 in range(d1):
            for j2 in range(d2):
                idx = j1 + merge_index((j1 + k1) % d1, j2, d1, d2) * d1
                p[idx, idx] = 1.0
        alice.append(p)
    for k2 in range(d2):
        p = np.zeros((d2 * d, d2 * d), dtype=complex)
        for j1 in range(d1):
            for j2 in range(d2):
                idx = j2 + merge_index(j1, (j2 + k2) % d2, d1, d2) * d2
                p[idx, idx] = 1.0
        bob.append(p)
    layout = RegisterLayout
    return (
        complete_family((layout.T1, layout.C1), alice, list(range(d1))),
        complete_family((layout.T2, layout.C2), bob, list(range(d2))),
    )


@lru_cache(maxsize=256)
def relabel_unitary(config: ProtocolConfig, k1: int, k2: int) -> LocalUnitary:
    """(a + k1) + (b + k2)*d1 -> a + b*d1 on the d' block, bound to c1 (retarget for c2)."""
    d1, d2 = config.d1, config.d2
    if not (0 <= k1 < d1 and 0 <= k2 < d2):
        raise InvalidArgumentError(f"Outcomes k1={k1}, k2={k2} out of range for d1={d1}, d2={d2}")
    mapping = list(range(config.d))
    for s in range(config.dp):
        a, b = split_index(s, d1, d2)
        mapping[s] = merge_index((a - k1) % d1, (b - k2) % d2, d1, d2)
    return LocalUnitary((RegisterLayout.C1,), permutation_unitary(config.d, mapping))


@lru_cache(maxsize=64)
def disentangle_teleportee(party: Party, config: ProtocolConfig) -> LocalUnitary:
    """
    |j_r>|c> -> |j_r - f_r(c)>|c> on [teleportee_r, c_r].

    f_1(c) = c mod d1 and f_2(c) = c div d1 (0 where c div d1 >= d2). On the
    support c = j1 + j2*d1 this sends the teleportee to |0>.
    """
    d1, d2, d = config.d1, config.d2, config.d
    local = d1 if party is Party.ALICE else d2
    mapping = []
    for c in range(d):
        if party is Party.ALICE:
            shift = c % d1
        else:
            shift = c // d1 if c // d1 < d2 else 0
        for j in range(local):
            mapping.append((j - shift) % local + c * local)
    # mapping was built in source order j + c*local
    targets = (RegisterLayout.teleportee(party), RegisterLayout.channel(party))
    return LocalUnitary(targets, permutation_unitary(local * d, mapping))


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def decode_fourier(party: Party, config: ProtocolConfig) -> LocalUnitary:
    """Fourier transform on Alice's j1 digit or Bob's j2 digit, identity above d'."""
    d1, d2 = config.d1, config.d2
    if party is Party.ALICE:
        block = factored_unitary(d1, d2, fourier_matrix(d1), np.eye(d2))
    else:
        block = factored_unitary(d1, d2, np.eye(d1), fourier_matrix(d2))
    return LocalUnitary((RegisterLayout.channel(party),), block_embed(block, config.d))


@lru_cache(maxsize=64)
def decoding_projectors(config: ProtocolConfig) -> tuple[ProjectorFamily, ProjectorFamily]:
    """Q_m1 fixes the j1 digit of c1, Q_m2 the j2 digit of c2; padded above d'."""
    d1, d2, d = config.d1, config.d2, config.d
    alice, bob = [], []
    for m1 in range(d1):
        p = np.zeros((d, d), dtype=complex)
        for j2 in range(d2):
            idx = merge_index(m1, j2, d1, d2)
            p[idx, idx] = 1.0
        alice.append(p)
    for m2 in range(d2):
        p = np.zeros((d, d), dtype=complex)
        for j1 in range(d1):
            idx = merge_index(j1, m2, d1, d2)
            p[idx, idx] = 1.0
        bob.append(p)
    return (
        complete_family((RegisterLayout.C1,), alice, list(range(d1))),
        complete_family((RegisterLayout.C2,), bob, list(range(d2))),
    )


@lru_cache(maxsize=256)
def correction_unitaries(config: ProtocolConfig, m1: int, m2: int) -> tuple[LocalUnitary, LocalUnitary]:
    """
    U1 = X^-m1 (x) Z^-m2 on c1 and U2 = Z^-m1 (x) X^-m2 on c2, over the digits.

    U1 |m1 + j2*d1> = w_d2^(-m2*j2) |j2*d1>,  U2 |j1 + m2*d1> = w_d1^(-m1*j1) |j1>.
    """
    d1, d2, d = config.d1, config.d2, config.d
    if not (0 <= m1 < d1 and 0 <= m2 < d2):
        raise InvalidArgumentError(f"Outcomes m1={m1}, m2={m2} out of range for d1={d1}, d2={d2}")
    u1 = factored_unitary(d1, d2, pauli_x(d1, -m1), pauli_z(d2, -m2))
    u2 = factored_unitary(d1, d2, pauli_z(d1, -m1), pauli_x(d2, -m2))
    return (
        LocalUnitary((RegisterLayout.C1,), block_embed(u1, d)),
        LocalUnitary((RegisterLayout.C2,), block_embed(u2, d)),
    )


@lru_cache(maxsize=64)
def final_rotation(config: ProtocolConfig) -> LocalUnitary:
    """V1: digit swap j1 + j2*d1 -> j2 + j1*d2 on c1, so |j2*d1> -> |j2>."""
    d1, d2 = config.d1, config.d2
    mapping = list(range(config.d))
    for s in range(config.dp):
        j1, j2 = split_index(s, d1, d2)
        mapping[s] = merge_index(j2, j1, d2, d1)
    return LocalUnitary((RegisterLayout.C1,), permutation_unitary(config.d, mapping))


# ---------------------------------------------------------------------------
# Full run
# ---------------------------------------------------------------------------


@contextmanager
def _stage(name: str):
    """Re-raise numerical and argument failures inside a stage as invariant breaches."""
    try:
        yield
    except (ProtocolInvariantError, ZeroProbabilityBranchError):
        raise
    except (InvalidArgumentError, NumericDegeneracyError) as err:
        raise ProtocolInvariantError(name, str(err)) from err



# Stage that measures each post-tailoring outcome
MEASUREMENT_STAGES = {
    "k1": "encoding.measure_alice",
    "k2": "encoding.measure_bob",
    "m1": "decoding.measure_alice",
    "m2": "decoding.measure_bob",
}


def measurement_family(config: ProtocolConfig, tag: str) -> ProjectorFamily:
    """Projector family whose outcome is announced as tag."""
    if tag not in MEASUREMENT_STAGES:
        raise InvalidArgumentError(f"No measurement announces {tag!r}")
    alice, bob = encoding_projectors(config) if tag in ("k1", "k2") else decoding_projectors(config)
    return alice if SENDERS[tag] is Party.ALICE else bob


def check_teleportees(config: ProtocolConfig, alpha: QuditRegister, beta: QuditRegister) -> None:
    if alpha.dims != (config.d1,) or beta.dims != (config.d2,):
        raise InvalidArgumentError(
            f"Teleportees must have dims ({config.d1},) and ({config.d2},), got {alpha.dims} and {beta.dims}"
        )


def _validate_outcome_source(config: ProtocolConfig, rng, forced: Mapping[str, int]) -> None:
    for tag, value in forced.items():
        if tag not in config.tags:
            raise InvalidArgumentError(f"Cannot force {tag!r} for config {config.as_dict()}")
        if not 0 <= value < config.bound(tag):
            raise InvalidArgumentError(f"Forced {tag}={value} outside [0, {config.bound(tag)})")
    if rng is None and set(forced) != set(config.tags):
        missing = [tag for tag in config.tags if tag not in forced]
        raise InvalidArgumentError(f"No rng given and outcomes {missing} are not forced")


def record_outcome(transcript: ProtocolTranscript, tag: str, outcome: MeasurementOutcome) -> ProtocolTranscript:
    """Add a measurement's stage entry. An outcome on the padding projector breaks the stage."""
    stage = MEASUREMENT_STAGES[tag]
    if outcome.label == RESIDUAL:
        raise ProtocolInvariantError(stage, "outcome on the padding projector: state has weight above level d'")
    logger.debug("%s: %s=%d p=%.6f", stage, tag, outcome.label, outcome.probability)
    entry = StageEntry(stage, {tag: outcome.label}, {tag: outcome.probability}, outcome.post_state)
    return transcript.with_entry(entry)


def _measure_stage(
    state: QuditRegister,
    config: ProtocolConfig,
    tag: str,
    rng: np.random.Generator | None,
    forced: Mapping[str, int],
    transcript: ProtocolTranscript,
) -> tuple[int, QuditRegister, ProtocolTranscript]:
    with _stage(MEASUREMENT_STAGES[tag]):
        outcome = measure(state, measurement_family(config, tag), rng=rng, forced=forced.get(tag))
    return outcome.label, outcome.post_state, record_outcome(transcript, tag, outcome)


def measurement_branches(state: QuditRegister, config: ProtocolConfig, tag: str) -> list[MeasurementOutcome]:
    """
    Every proper outcome of the measurement announced as tag, in label order.

    Zero-weight outcomes are kept with post_state None. The padding projector
    must carry no weight.
    """
    stage = MEASUREMENT_STAGES[tag]
    with _stage(stage):
        outcomes = branches(state, measurement_family(config, tag))
    proper = []
    for outcome in outcomes:
        if outcome.label != RESIDUAL:
            proper.append(outcome)
        elif not outcome.degenerate:
            raise ProtocolInvariantError(stage, f"padding projector carries weight {outcome.probability:.3e}")
    return proper


def _send(transcript: ProtocolTranscript, tag: str, value: int) -> ProtocolTranscript:
    sender = SENDERS[tag]
    return transcript.with_message(ClassicalMessage(sender, sender.other, tag, value))


def begin_run(
    config: ProtocolConfig, rng: np.random.Generator | None = None, forced_k: int | None = None
) -> tuple[QuditRegister, ProtocolTranscript]:
    """Tailor a fresh channel. Returns the [c1, c2] channel and the transcript so far."""
    channel, message, entries = tailor_channel(prepare_channel(config.d), config, rng=rng, forced=forced_k)
    transcript = ProtocolTranscript(config)
    for entry in entries:
        transcript = transcript.with_entry(entry)
    if message is not None:
        transcript = transcript.with_message(message)
    return channel, transcript


def encoding_register(
    config: ProtocolConfig, alpha: QuditRegister, beta: QuditRegister, channel: QuditRegister
) -> QuditRegister:
    """|alpha>_t1 |channel>_c1c2 |beta>_t2 in layout order [t1, c1, t2, c2]."""
    with _stage("encoding"):
        state = permute_subsystems(tensor(tensor(alpha, channel), beta), (0, 1, 3, 2))
    dims = RegisterLayout(config).dims
    if state.dims != dims:
        raise ProtocolInvariantError("encoding", f"register dims {state.dims} do not match layout {dims}")
    return state


def finish_encoding(
    config: ProtocolConfig, state: QuditRegister, transcript: ProtocolTranscript, k1: int, k2: int
) -> tuple[QuditRegister, ProtocolTranscript]:
    """Swap k1/k2, relabel both channel qudits and clear the teleportees."""
    layout = RegisterLayout
    alice, bob = Party.ALICE, Party.BOB
    transcript = _send(transcript, "k1", k1)
    transcript = _send(transcript, "k2", k2)

    stage = "encoding.relabel"
    with _stage(stage):
        state = apply_local(state, relabel_unitary(config, k1, transcript.received("k2", alice, stage)))
        state = apply_local(state, relabel_unitary(config, transcript.received("k1", bob, stage), k2).on(layout.C2))
    transcript = transcript.with_entry(StageEntry(stage, {}, {}, state))

    stage = "encoding.disentangle"
    with _stage(stage):
        state = apply_local(state, disentangle_teleportee(alice, config))
        state = apply_local(state, disentangle_teleportee(bob, config))
        # both teleportees must now sit in |0>, unentangled from the channel
        discard_subsystem(discard_subsystem(state, layout.T2), layout.T1)
    return state, transcript.with_entry(StageEntry(stage, {}, {}, state))


def fourier_stage(
    config: ProtocolConfig, state: QuditRegister, transcript: ProtocolTranscript
) -> tuple[QuditRegister, ProtocolTranscript]:
    stage = "decoding.fourier"
    with _stage(stage):
        state = apply_local(state, decode_fourier(Party.ALICE, config))
        state = apply_local(state, decode_fourier(Party.BOB, config))
    return state, transcript.with_entry(StageEntry(stage, {}, {}, state))


def finish_decoding(
    config: ProtocolConfig,
    alpha: QuditRegister,
    beta: QuditRegister,
    state: QuditRegister,
    transcript: ProtocolTranscript,
    m1: int,
    m2: int,
) -> ProtocolResult:
    """Swap m1/m2, correct, rotate Alice's qudit and factor out both outputs."""
    layout = RegisterLayout
    product, values = is_product(state, (layout.T1, layout.C1))
    if not product:
        raise ProtocolInvariantError("decoding.measure_bob", f"Alice|Bob cut still entangled: Schmidt values {values}")
    transcript = _send(transcript, "m1", m1)
    transcript = _send(transcript, "m2", m2)

    stage = "decoding.correct"
    with _stage(stage):
        u1, _ = correction_unitaries(config, m1, transcript.received("m2", Party.ALICE, stage))
        _, u2 = correction_unitaries(config, transcript.received("m1", Party.BOB, stage), m2)
        state = apply_local(state, u1)
        state = apply_local(state, u2)
    transcript = transcript.with_entry(StageEntry(stage, {}, {}, state))

    stage = "decoding.rotate"
    with _stage(stage):
        state = apply_local(state, final_rotation(config))
        pair = discard_subsystem(discard_subsystem(state, layout.T2), layout.T1)
        alice_out, bob_out = split_product(pair, (0,))
    transcript = transcript.with_entry(StageEntry(stage, {}, {}, state))

    result = ProtocolResult(
        alice_out=alice_out,
        bob_out=bob_out,
        fidelity_alpha=fidelity(bob_out, embed(alpha, config.d)),
        fidelity_beta=fidelity(alice_out, embed(beta, config.d)),
        transcript=transcript,
        final_state=pair,
        probability=transcript.leaf_probability,
    )
    logger.debug(
        "run %s outcomes=%s fidelities=(%.12f, %.12f)",
        config.as_dict(),
        transcript.outcomes,
        result.fidelity_alpha,
        result.fidelity_beta,
    )
    return result


def run_protocol(
    config: ProtocolConfig,
    alpha: QuditRegister,
    beta: QuditRegister,
    rng: np.random.Generator | None = None,
    forced: Mapping[str, int] | None = None,
) -> ProtocolResult:
    """
    Teleport alpha from Alice to Bob and beta from Bob to Alice.

    Outcomes listed in forced (tags k, k1, k2, m1, m2) are replayed instead of
    sampled; the rest are drawn from rng.
    """
    check_teleportees(config, alpha, beta)
    forced = dict(forced or {})
    _validate_outcome_source(config, rng, forced)

    channel, transcript = begin_run(config, rng=rng, forced_k=forced.get("k"))
    state = encoding_register(config, alpha, beta, channel)
    k1, state, transcript = _measure_stage(state, config, "k1", rng, forced, transcript)
    k2, state, transcript = _measure_stage(state, config, "k2", rng, forced, transcript)
    state, transcript = finish_encoding(config, state, transcript, k1, k2)

    state, transcript = fourier_stage(config, state, transcript)
    m1, state, transcript = _measure_stage(state, config, "m1", rng, forced, transcript)
    m2, state, transcript = _measure_stage(state, config, "m2", rng, forced, transcript)
    return finish_decoding(config, alpha, beta, state, transcript, m1, m2)
