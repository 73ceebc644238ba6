"""
Command-line driver for two-way qudit teleportation.

Modes:
    sample     seeded Haar-random inputs, sampled measurement outcomes
    enumerate  oracle certificate for one (d1, d2, d)
    sweep      certificates for the configured acceptance list

Exit codes: 0 every check passed, 1 a verification or I/O failure,
2 usage or configuration error.

Usage:
    python cli.py --d1 2 --d2 2 --d 4
    python cli.py --d1 2 --d2 3 --d 7 --mode sample --trials 10 --seed 7 --format csv
    python cli.py --mode sweep --out results/sweep.json
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from oracle import ORACLE_CONFIG, acceptance_sweep, verify_identity_channel
from protocol import MESSAGE_TAGS, ConfigError, ProtocolConfig, ProtocolInvariantError, run_protocol
from qudit_core import random_state
from telemetry import TrialRecord, TrialReport, summarize_trials

logger = logging.getLogger(__name__)

MODES = ("sample", "enumerate", "sweep")
FORMATS = ("json", "csv")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class RunConfig:
    d1: int | None
    d2: int | None
    d: int | None
    mode: str = "enumerate"
    trials: int = 100
    seed: int = 0
    output_format: str = "json"
    out: str | None = None
    workers: int = 1
    log_level: str = "WARNING"

    def protocol_config(self) -> ProtocolConfig:
        return ProtocolConfig(self.d1, self.d2, self.d)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cli.py",
        description="Simulate and verify two-way teleportation of a d1-level and a d2-level qudit over one d-level channel.",
    )
    parser.add_argument("--d1", type=int, help="Alice's teleportee dimension")
    parser.add_argument("--d2", type=int, help="Bob's teleportee dimension")
    parser.add_argument("--d", type=int, help="channel dimension, needs d1*d2 <= d")
    parser.add_argument("--mode", choices=MODES, default="enumerate")
    parser.add_argument("--trials", type=int, default=100, help="number of sampled runs (sample mode)")
    parser.add_argument("--seed", type=int, default=0, help="unsigned 64-bit seed")
    parser.add_argument("--format", dest="output_format", choices=FORMATS, default="json")
    parser.add_argument("--out", default=None, help="output path (default: stdout)")
    parser.add_argument("--workers", type=int, default=1, help="parallel workers for trials and branches")
    parser.add_argument("--log-level", choices=LOG_LEVELS, default="WARNING", help="diagnostics on stderr")
    return parser


def parse_args(argv: list[str] | None = None) -> RunConfig:
    """Parse and validate flags. Any problem exits with status 2 and a usage message."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not 0 <= args.seed <= MAX_SEED:
        parser.error(f"--seed must be in [0, 2**64 - 1], got {args.seed}")
    if args.trials < 1:
        parser.error(f"--trials must be >= 1, got {args.trials}")
    if args.workers < 1:
        parser.error(f"--workers must be >= 1, got {args.workers}")

    config = RunConfig(
        d1=args.d1,
        d2=args.d2,
        d=args.d,
        mode=args.mode,
        trials=args.trials,
        seed=args.seed,
        output_format=args.output_format,
        out=args.out,
        workers=args.workers,
        log_level=args.log_level,
    )
    if config.mode != "sweep":
        missing = [f"--{name}" for name in ("d1", "d2", "d") if getattr(config, name) is None]
        if missing:
            parser.error(f"{', '.join(missing)} required in {config.mode} mode")
        try:
            config.protocol_config()
        except ConfigError as err:
            parser.error(str(err))
    return config


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per trial, so results do not depend on scheduling."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _run_trial(protocol_config: ProtocolConfig, seed: int, index: int) -> TrialRecord:
    rng = trial_rng(seed, index)
    alpha = random_state(protocol_config.d1, rng)
    beta = random_state(protocol_config.d2, rng)
    result = run_protocol(protocol_config, alpha, beta, rng=rng)
    return TrialRecord(
        trial_id=f"{seed}:{index}",
        outcomes=result.transcript.outcomes,
        probability=result.probability,
        fidelity_alpha=result.fidelity_alpha,
        fidelity_beta=result.fidelity_beta,
        sampled=True,
        input_label="haar",
    )


def empirical_uniformity(protocol_config: ProtocolConfig, trials: list[TrialRecord]) -> dict[str, float]:
    """Max |frequency - 1/n| per tag. Informational only; sampled runs are not tested statistically."""
    report = {}
    for tag in protocol_config.tags:
        counts = Counter(t.outcomes.get(tag) for t in trials)
        n = protocol_config.bound(tag)
        report[tag] = max(abs(counts.get(value, 0) / len(trials) - 1.0 / n) for value in range(n))
    return report


def _sample_report(config: RunConfig) -> tuple[TrialReport, bool]:
    protocol_config = config.protocol_config()
    report = TrialReport(config=protocol_config.as_dict(), mode="sample", seed=config.seed)
    indices = range(config.trials)
    if config.workers == 1:
        records = [_run_trial(protocol_config, config.seed, i) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(lambda i: _run_trial(protocol_config, config.seed, i), indices))
    for record in records:
        report.add_trial(record)
    summary = summarize_trials(report.trials, float(ORACLE_CONFIG["fidelity_tolerance"]))
    summary["empirical_uniformity"] = empirical_uniformity(protocol_config, report.trials)
    report.summary = summary
    return report, summary["passed"]


def _enumerate_report(config: RunConfig) -> tuple[TrialReport, bool]:
    protocol_config = config.protocol_config()
    certificate = verify_identity_channel(protocol_config, seed=config.seed, workers=config.workers)
    report = TrialReport(config=protocol_config.as_dict(), mode="enumerate", seed=config.seed)
    prefix = f"{config.seed}:{protocol_config.d1}x{protocol_config.d2}x{protocol_config.d}"
    for label, leaves in certificate.leaves.items():
        for index, leaf in enumerate(leaves):
            report.add_trial(
                TrialRecord(
                    trial_id=f"{prefix}:{label}:{index}",
                    outcomes=dict(zip(MESSAGE_TAGS, leaf.outcomes, strict=True)),
                    probability=leaf.probability,
                    fidelity_alpha=leaf.fidelity_alpha,
                    fidelity_beta=leaf.fidelity_beta,
                    input_label=label,
                )
            )
    report.summary = {"certificate": certificate.to_dict(), "passed": certificate.passed}
    return report, certificate.passed


def _sweep_report(config: RunConfig) -> tuple[TrialReport, bool]:
    certificates = [
        verify_identity_channel(dims, seed=config.seed, workers=config.workers) for dims in acceptance_sweep()
    ]
    passed = all(c.passed for c in certificates)
    report = TrialReport(config=None, mode="sweep", seed=config.seed)
    report.summary = {"certificates": [c.to_dict() for c in certificates], "passed": passed}
    return report, passed


def run(config: RunConfig) -> int:
    """Execute one CLI run and write its report. Returns the exit code."""
    builders = {"sample": _sample_report, "enumerate": _enumerate_report, "sweep": _sweep_report}
    if config.mode not in builders:
        print(f"error: unknown mode {config.mode!r}", file=sys.stderr)
        return 2
    try:
        report, passed = builders[config.mode](config)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ProtocolInvariantError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1

    try:
        report.write(config.output_format, config.out)
    except OSError as err:
        print(f"error: cannot write report: {err}", file=sys.stderr)
        return 1
    if not passed:
        logger.warning("verification failed in %s mode", config.mode)
    return 0 if passed else 1


def main(argv: list[str] | None = None) -> int:
    config = parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, config.log_level),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
