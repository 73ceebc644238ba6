"""
Brute-force verification of the two-way protocol.

The measurement tree is walked depth first, every measurement listing all of
its outcomes. Each leaf's fidelities are recomputed from the states the run
returns, never from its transcript. A certificate collects the checks over
all basis input pairs plus a batch of seeded Haar-random pairs.
"""

from __future__ import annotations

import itertools
import logging
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from models import InvalidArgumentError, QuditRegister, ZeroProbabilityBranchError, read_config_file
from protocol import (
    MESSAGE_TAGS,
    ConfigError,
    ProtocolConfig,
    ProtocolInvariantError,
    ProtocolTranscript,
    begin_run,
    check_teleportees,
    encoding_register,
    finish_decoding,
    finish_encoding,
    fourier_stage,
    measurement_branches,
    record_outcome,
)
from qudit_core import basis_state, embed, fidelity, random_state

logger = logging.getLogger(__name__)

# Joint marginals reported next to the per-tag ones
JOINT_TAGS = (("k1", "k2"), ("m1", "m2"))


def load_oracle_config() -> dict:
    """Load oracle thresholds and the acceptance sweep, with defaults."""
    defaults = {
        "fidelity_tolerance": 1e-9,
        "uniformity_tolerance": 1e-9,
        "identity_residual_tolerance": 1e-8,
        "random_pairs": 8,
        "max_sweep_dimension": 12,
        "acceptance_sweep": [
            [1, 1, 1], [1, 2, 2], [2, 1, 2], [2, 2, 4], [2, 3, 6], [3, 2, 6],
            [2, 2, 5], [2, 3, 7], [3, 3, 9], [2, 2, 6], [4, 2, 8],
        ],
    }  # fmt: skip
    config = read_config_file()
    for k in defaults:
        if k in config:
            defaults[k] = config[k]
    return defaults


ORACLE_CONFIG = load_oracle_config()


def acceptance_sweep() -> list[tuple[int, int, int]]:
    """Configured (d1, d2, d) triples, minus any whose channel exceeds the sweep bound."""
    limit = int(ORACLE_CONFIG["max_sweep_dimension"])
    sweep = []
    for entry in ORACLE_CONFIG["acceptance_sweep"]:
        d1, d2, d = (int(v) for v in entry)
        if d > limit:
            logger.warning("Skipping sweep entry %s: d=%d exceeds max_sweep_dimension=%d", entry, d, limit)
            continue
        sweep.append((d1, d2, d))
    return sweep


class BranchError(ProtocolInvariantError):
    """A branch of the enumeration broke a protocol invariant."""

    def __init__(self, stage: str, message: str, outcomes: tuple):
        super().__init__(stage, f"{message} (outcomes {outcomes})")
        self.outcomes = outcomes


@dataclass(frozen=True, eq=False)
class BranchLeaf:
    """
    One outcome tuple (k, k1, k2, m1, m2) of a run; k is None without tailoring.

    Degenerate leaves (a zero-weight outcome on the path) carry no fidelities.
    """

    outcomes: tuple[int | None, ...]
    probability: float
    fidelity_alpha: float | None
    fidelity_beta: float | None
    degenerate: bool = False
    final_state: QuditRegister | None = field(default=None, repr=False)

    def outcome(self, tag: str) -> int | None:
        return self.outcomes[MESSAGE_TAGS.index(tag)]


def branch_count(config: ProtocolConfig) -> int:
    count = config.d1**2 * config.d2**2
    return count * config.d if config.needs_tailoring else count


def _padded(outcomes: tuple) -> tuple:
    return (*outcomes, *(None,) * (len(MESSAGE_TAGS) - len(outcomes)))


@contextmanager
def _on_branch(outcomes: tuple):
    """Tag invariant breaches with the outcomes fixed so far (None for the rest)."""
    try:
        yield
    except BranchError:
        raise
    except ProtocolInvariantError as err:
        raise BranchError(err.stage, err.detail, _padded(outcomes)) from err


@dataclass(frozen=True, eq=False)
class _Node:
    """
    A branch cut after a pair of measurements.

    state is None when a zero-weight outcome ended the branch early; probability
    is then the product of the outcome probabilities along it.
    """

    outcomes: tuple
    state: QuditRegister | None
    transcript: ProtocolTranscript | None
    probability: float = 0.0


def _degenerate_leaves(config: ProtocolConfig, node: _Node) -> list[BranchLeaf]:
    remaining = [range(config.bound(tag)) for tag in MESSAGE_TAGS[len(node.outcomes) :]]
    return [
        BranchLeaf((*node.outcomes, *rest), node.probability, None, None, degenerate=True)
        for rest in itertools.product(*remaining)
    ]


def _walk_pair(
    config: ProtocolConfig, state: QuditRegister, transcript: ProtocolTranscript, outcomes: tuple, tags: tuple[str, str]
) -> list[_Node]:
    """Both measurements of a stage, depth first, each parent measured once."""
    first_tag, second_tag = tags
    nodes = []
    with _on_branch(outcomes):
        firsts = measurement_branches(state, config, first_tag)
    for first in firsts:
        path = (*outcomes, first.label)
        if first.degenerate:
            nodes.append(_Node(path, None, None, transcript.leaf_probability * first.probability))
            continue
        with _on_branch(path):
            after_first = record_outcome(transcript, first_tag, first)
            seconds = measurement_branches(first.post_state, config, second_tag)
        for second in seconds:
            leaf_path = (*path, second.label)
            if second.degenerate:
                nodes.append(_Node(leaf_path, None, None, after_first.leaf_probability * second.probability))
                continue
            with _on_branch(leaf_path):
                after_second = record_outcome(after_first, second_tag, second)
            nodes.append(_Node(leaf_path, second.post_state, after_second, after_second.leaf_probability))
    return nodes


def _encoded_nodes(config: ProtocolConfig, alpha: QuditRegister, beta: QuditRegister) -> list[_Node]:
    """Every (k, k1, k2) branch right after the encoding measurements."""
    k_values: Iterable[int | None] = range(config.d) if config.needs_tailoring else (None,)
    nodes = []
    for k in k_values:
        with _on_branch((k,)):
            try:
                channel, transcript = begin_run(config, forced_k=k)
            except ZeroProbabilityBranchError as err:
                nodes.append(_Node((k,), None, None, err.probability))
                continue
            state = encoding_register(config, alpha, beta, channel)
        nodes.extend(_walk_pair(config, state, transcript, (k,), ("k1", "k2")))
    return nodes


def _decoded_leaves(config: ProtocolConfig, alpha: QuditRegister, beta: QuditRegister, node: _Node) -> list[BranchLeaf]:
    """Leaves below one encoded branch, in (m1, m2) order."""
    if node.state is None:
        return _degenerate_leaves(config, node)
    _, k1, k2 = node.outcomes
    with _on_branch(node.outcomes):
        state, transcript = finish_encoding(config, node.state, node.transcript, k1, k2)
        state, transcript = fourier_stage(config, state, transcript)

    leaves = []
    for leaf_node in _walk_pair(config, state, transcript, node.outcomes, ("m1", "m2")):
        if leaf_node.state is None:
            leaves.extend(_degenerate_leaves(config, leaf_node))
            continue
        *_, m1, m2 = leaf_node.outcomes
        with _on_branch(leaf_node.outcomes):
            result = finish_decoding(config, alpha, beta, leaf_node.state, leaf_node.transcript, m1, m2)
        leaves.append(
            BranchLeaf(
                outcomes=leaf_node.outcomes,
                probability=result.probability,
                fidelity_alpha=fidelity(result.bob_out, embed(alpha, config.d)),
                fidelity_beta=fidelity(result.alice_out, embed(beta, config.d)),
                final_state=result.final_state,
            )
        )
    return leaves


def enumerate_branches(
    config: ProtocolConfig, alpha: QuditRegister, beta: QuditRegister, workers: int = 1
) -> list[BranchLeaf]:
    """
    One leaf per outcome tuple, in lexicographic outcome order.

    The tree is walked depth first: each prefix is simulated once and every
    measurement lists all of its outcomes. With workers > 1 the subtrees below
    the encoding measurements run in a thread pool.
    """
    if workers < 1:
        raise InvalidArgumentError(f"workers must be >= 1, got {workers}")
    check_teleportees(config, alpha, beta)
    nodes = _encoded_nodes(config, alpha, beta)

    def run(node):
        return _decoded_leaves(config, alpha, beta, node)

    if workers == 1:
        subtrees = [run(node) for node in nodes]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            subtrees = list(pool.map(run, nodes))
    leaves = [leaf for subtree in subtrees for leaf in subtree]
    logger.debug("enumerated %d leaves for %s", len(leaves), config.as_dict())
    return leaves


def _deviation(totals: Mapping, n: int) -> float:
    if n <= 1:
        return 0.0
    return max(abs(p - 1.0 / n) for p in totals.values())


def uniformity_report(leaves: Sequence[BranchLeaf]) -> dict[str, float]:
    """
    Max |p - 1/n| of each outcome tag's marginal, plus the joint (k1, k2) and (m1, m2) marginals.

    n is the number of values the enumeration covered. Tags a run never
    produced (k without tailoring) are left out.
    """
    if not leaves:
        raise InvalidArgumentError("uniformity_report needs at least one leaf")
    report = {}
    for tag in MESSAGE_TAGS:
        totals: dict = defaultdict(float)
        for leaf in leaves:
            value = leaf.outcome(tag)
            if value is not None:
                totals[value] += leaf.probability
        if totals:
            report[tag] = _deviation(totals, len(totals))
    for first, second in JOINT_TAGS:
        totals = defaultdict(float)
        for leaf in leaves:
            totals[(leaf.outcome(first), leaf.outcome(second))] += leaf.probability
        report[f"{first},{second}"] = _deviation(totals, len(totals))
    return report


def identity_channel_residual(config: ProtocolConfig, leaves_by_pair: Mapping[tuple[int, int], Sequence[BranchLeaf]]) -> float:
    """
    Largest deviation from identity of the map each branch applies to |i>|j>.

    Per outcome tuple, the output for basis input (i, j) is read off the
    [c1, c2] final state as the d1*d2 vector over (alpha level, beta level)
    and placed in column i + j*d1. The branch's global phase is divided out
    before comparing with the identity.
    """
    d1, d2, d = config.d1, config.d2, config.d
    dp = config.dp
    columns: dict[tuple, np.ndarray] = defaultdict(lambda: np.zeros((dp, dp), dtype=complex))
    for i in range(d1):
        for j in range(d2):
            if (i, j) not in leaves_by_pair:
                raise InvalidArgumentError(f"Missing basis pair ({i}, {j})")
            for leaf in leaves_by_pair[(i, j)]:
                matrix = columns[leaf.outcomes]
                if leaf.final_state is None:
                    continue
                pair = leaf.final_state.amps.reshape((d, d), order="F")
                # pair[c1, c2]: c1 carries beta (j), c2 carries alpha (i)
                block = pair[:d2, :d1]
                matrix[:, i + j * d1] = block.T.reshape(-1, order="F")

    worst = 0.0
    for matrix in columns.values():
        trace = np.trace(matrix)
        if abs(trace) > 0:
            matrix = matrix * (abs(trace) / trace)
        worst = max(worst, float(np.max(np.abs(matrix - np.eye(dp)))))
    return worst


@dataclass(frozen=True, eq=False)
class VerificationCertificate:
    config: tuple[int, int, int]
    config_valid: bool
    input_pairs: int = 0
    leaf_count: int = 0
    min_fidelity: float | None = None
    mean_fidelity: float | None = None
    max_uniformity_deviation: float | None = None
    uniformity: dict[str, float] = field(default_factory=dict)
    probability_deviation: float | None = None
    identity_residual: float | None = None
    checks: dict[str, bool] = field(default_factory=dict)
    error: str | None = None
    # "basis:i,j" / "haar:n" -> leaves of that input pair
    leaves: dict[str, list[BranchLeaf]] = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return self.config_valid and self.error is None and bool(self.checks) and all(self.checks.values())

    def to_dict(self) -> dict:
        d1, d2, d = self.config
        return {
            "config": {"d1": d1, "d2": d2, "d": d},
            "config_valid": self.config_valid,
            "input_pairs": self.input_pairs,
            "leaf_count": self.leaf_count,
            "min_fidelity": self.min_fidelity,
            "mean_fidelity": self.mean_fidelity,
            "max_uniformity_deviation": self.max_uniformity_deviation,
            "uniformity": dict(self.uniformity),
            "probability_deviation": self.probability_deviation,
            "identity_residual": self.identity_residual,
            "checks": dict(self.checks),
            "error": self.error,
            "passed": self.passed,
        }


def haar_pairs(config: ProtocolConfig, seed: int, count: int) -> list[tuple[QuditRegister, QuditRegister]]:
    """Seeded random input pairs, keyed by (seed, d1, d2, d) so sweep order does not matter."""
    sequence = np.random.SeedSequence(seed, spawn_key=(config.d1, config.d2, config.d))
    rng = np.random.default_rng(sequence)
    return [(random_state(config.d1, rng), random_state(config.d2, rng)) for _ in range(count)]


def verify_identity_channel(
    config: ProtocolConfig | Sequence[int],
    seed: int = 0,
    random_pairs: int | None = None,
    workers: int = 1,
) -> VerificationCertificate:
    """
    Certify unit fidelity, uniform outcomes, complete probabilities and an
    identity branch map. Failures are recorded in the certificate, not raised.
    """
    if isinstance(config, ProtocolConfig):
        dims = (config.d1, config.d2, config.d)
    else:
        dims = tuple(int(v) for v in config)
        try:
            config = ProtocolConfig(*dims)
        except ConfigError as err:
            logger.info("config %s rejected: %s", dims, err)
            return VerificationCertificate(config=dims, config_valid=False, error=str(err))

    count = int(ORACLE_CONFIG["random_pairs"] if random_pairs is None else random_pairs)
    basis = {
        (i, j): (basis_state(config.d1, i), basis_state(config.d2, j))
        for j in range(config.d2)
        for i in range(config.d1)
    }
    try:
        basis_leaves = {pair: enumerate_branches(config, *states, workers=workers) for pair, states in basis.items()}
        random_leaves = [enumerate_branches(config, a, b, workers=workers) for a, b in haar_pairs(config, seed, count)]
    except BranchError as err:
        logger.warning("config %s failed: %s", dims, err)
        return VerificationCertificate(config=dims, config_valid=True, error=str(err))

    runs = list(basis_leaves.values()) + random_leaves
    fidelities = [
        value
        for leaves in runs
        for leaf in leaves
        if not leaf.degenerate
        for value in (leaf.fidelity_alpha, leaf.fidelity_beta)
    ]
    uniformity: dict[str, float] = {}
    for leaves in runs:
        for tag, deviation in uniformity_report(leaves).items():
            uniformity[tag] = max(uniformity.get(tag, 0.0), deviation)
    probability_deviation = max(abs(sum(leaf.probability for leaf in leaves) - 1.0) for leaves in runs)
    residual = identity_channel_residual(config, basis_leaves)

    min_fidelity = min(fidelities)
    max_uniformity = max(uniformity.values())
    checks = {
        "fidelity": min_fidelity >= 1.0 - float(ORACLE_CONFIG["fidelity_tolerance"]),
        "uniformity": max_uniformity <= float(ORACLE_CONFIG["uniformity_tolerance"]),
        "probability": probability_deviation <= float(ORACLE_CONFIG["fidelity_tolerance"]),
        "identity_channel": residual <= float(ORACLE_CONFIG["identity_residual_tolerance"]),
    }
    certificate = VerificationCertificate(
        config=dims,
        config_valid=True,
        input_pairs=len(runs),
        leaf_count=branch_count(config),
        min_fidelity=min_fidelity,
        mean_fidelity=sum(fidelities) / len(fidelities),
        max_uniformity_deviation=max_uniformity,
        uniformity=uniformity,
        probability_deviation=probability_deviation,
        identity_residual=residual,
        checks=checks,
        leaves={
            **{f"basis:{i},{j}": leaves for (i, j), leaves in basis_leaves.items()},
            **{f"haar:{n}": leaves for n, leaves in enumerate(random_leaves)},
        },
    )
    if certificate.passed:
        logger.info("config %s passed: min fidelity %.12f over %d pairs", dims, min_fidelity, len(runs))
    else:
        failing = [name for name, ok in checks.items() if not ok]
        logger.warning("config %s failed checks %s", dims, failing)
    return certificate
