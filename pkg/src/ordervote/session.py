"""Election orchestration: the tallier program and backend runners.

``tallier_program`` is the SPMD pipeline every tallier executes over its own
context: validate the shared ballots, aggregate the accepted ones, compute
scores, and open winner identities.  ``run_local_election`` runs all D
talliers as threads of one process over the in-memory hub (the desk-scale
mode); ``run_socket_tallier`` runs a single party that meets its peers over
TCP.  With fixed seeds both backends produce identical results.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import validation
from .ballots import (SharedBallot, TallierBundle, decode_bundle,
                      ranking_to_matrix, share_ballot)
from .config import ElectionConfig
from .engine import PartyContext
from .tally import (TallyResult, aggregate, copeland_scores, kemeny_winners,
                    maximin_scores, top_k)
from .transport import (InMemoryHub, SessionChannel, SocketTransport)

LOCAL_ROUND_TIMEOUT = 120.0  # generous; a deadlock should fail, not hang


@dataclass
class ElectionOutcome:
    result: TallyResult
    verdicts: list[validation.ValidationVerdict]
    per_party_results: list[TallyResult] = dataclass_field(default_factory=list)
    captures: dict[int, dict] = dataclass_field(default_factory=dict)
    rejected_proofs: dict[int, np.ndarray] = dataclass_field(default_factory=dict)


def make_shared_ballots(config: ElectionConfig, rankings) -> list[SharedBallot]:
    """Voter-side: build and share one ballot per ranking, seeded per voter."""
    ballots = []
    for voter_id, ranking in enumerate(rankings, start=1):
        matrix = ranking_to_matrix(config.rule, ranking, config.m)
        ballots.append(share_ballot(matrix, config.field, config.threshold,
                                    config.talliers, config.voter_rng(voter_id),
                                    voter_id))
    return ballots


def build_context(config: ElectionConfig, party_id: int, channel: SessionChannel,
                  capture: bool = False) -> PartyContext:
    ctx = PartyContext(party_id, config.talliers, config.threshold,
                       config.field, channel, config.party_rng(party_id))
    if capture:
        ctx.capture_store = {}
    return ctx


def tallier_program(ctx: PartyContext, config: ElectionConfig,
                    bundles: list[TallierBundle],
                    batch_size: int | None = None) -> tuple[TallyResult, list, dict]:
    """The full pipeline one tallier runs; returns (result, verdicts, proofs)."""
    rule, m = config.rule, config.m
    step = batch_size or len(bundles) or 1
    verdicts = []
    for start in range(0, len(bundles), step):
        verdicts.extend(validation.batch_validate(ctx, bundles[start:start + step], rule))
    accepted_ids = {v.voter_id for v in verdicts if v.accepted}
    accepted = [b for b in bundles if b.voter_id in accepted_ids]

    proofs: dict[int, np.ndarray] = {}
    if config.reconstruct_rejected:
        for b in bundles:
            if b.voter_id not in accepted_ids:
                proofs[b.voter_id] = validation.reconstruct_rejected(ctx, b)

    agg = aggregate(ctx, accepted, rule, m)
    ctx.capture("aggregate", agg.entries)

    kemeny_ranking = None
    opened_scores = None
    if rule == "kemeny":
        winners, kemeny_ranking = kemeny_winners(ctx, agg, config.num_winners)
    else:
        scores = copeland_scores(ctx, agg, config.alpha) if rule == "copeland" \
            else maximin_scores(ctx, agg)
        ctx.capture("scores", scores)
        winners = top_k(ctx, scores, config.num_winners)
        if config.open_scores:
            opened_scores = [int(v) for v in ctx.open(scores, "final_output")]

    result = TallyResult(
        rule=rule,
        winners=winners,
        winner_names=[config.candidates[w - 1] for w in winners],
        kemeny_ranking=kemeny_ranking,
        opened_scores=opened_scores,
        counters=ctx.summary(),
    )
    return result, verdicts, proofs


def run_local_election(config: ElectionConfig, ballots: list[SharedBallot],
                       batch_size: int | None = None, capture: bool = False,
                       session_id: int = 1,
                       pregenerate: tuple[int, int] | None = None) -> ElectionOutcome:
    """Run all D talliers as threads over the in-memory transport."""
    hub = InMemoryHub(config.talliers, timeout=LOCAL_ROUND_TIMEOUT)
    results: dict[int, tuple] = {}
    contexts: dict[int, PartyContext] = {}
    errors: dict[int, BaseException] = {}

    def runner(party_id: int) -> None:
        try:
            channel = SessionChannel(hub.transport(party_id), session_id)
            ctx = build_context(config, party_id, channel, capture)
            contexts[party_id] = ctx
            if pregenerate:
                ctx.pregenerate(*pregenerate)
            bundles = [b.bundle_for(party_id) for b in ballots]
            results[party_id] = tallier_program(ctx, config, bundles, batch_size)
        except BaseException as err:  # surfaced after join
            errors[party_id] = err

    threads = [threading.Thread(target=runner, args=(d,), name=f"tallier-{d}")
               for d in range(1, config.talliers + 1)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        party, err = sorted(errors.items())[0]
        raise RuntimeError(f"tallier {party} failed: {err!r}") from err

    per_party = [results[d][0] for d in range(1, config.talliers + 1)]
    first = per_party[0]
    for other in per_party[1:]:
        if other.winners != first.winners:
            raise RuntimeError("talliers disagree on the winners; protocol bug")
    captures = {d: contexts[d].capture_store for d in contexts} if capture else {}
    return ElectionOutcome(result=first, verdicts=results[1][1],
                           per_party_results=per_party, captures=captures,
                           rejected_proofs=results[1][2])


def run_socket_tallier(config: ElectionConfig, party_id: int,
                       bundles: list[TallierBundle] | None = None,
                       expect_votes: int | None = None,
                       session_id: int = 1,
                       batch_size: int | None = None) -> tuple[TallyResult, list]:
    """Run one tallier over TCP.  Ballots come either from the caller (spooled
    submissions) or live off the wire when ``expect_votes`` is given."""
    endpoints = {d + 1: tuple(e) for d, e in enumerate(config.resolved_endpoints())}
    transport = SocketTransport(party_id, endpoints)
    try:
        channel = SessionChannel(transport, session_id)
        ctx = build_context(config, party_id, channel)
        if bundles is None:
            if expect_votes is None:
                raise ValueError("need either spooled bundles or expect_votes")
            messages = transport.collect_ballots(session_id, expect_votes)
            bundles = sorted((decode_bundle(m.payload) for m in messages),
                             key=lambda b: b.voter_id)
        result, verdicts, _ = tallier_program(ctx, config, bundles, batch_size)
        return result, verdicts
    finally:
        transport.close()


def run_local_validation(config: ElectionConfig, ballots: list[SharedBallot],
                         batch_size: int | None = None,
                         session_id: int = 1) -> list[validation.ValidationVerdict]:
    """Validation phase only (threads over the in-memory hub); returns verdicts."""
    hub = InMemoryHub(config.talliers, timeout=LOCAL_ROUND_TIMEOUT)
    results: dict[int, list] = {}
    errors: dict[int, BaseException] = {}

    def runner(party_id: int) -> None:
        try:
            channel = SessionChannel(hub.transport(party_id), session_id)
            ctx = build_context(config, party_id, channel)
            bundles = [b.bundle_for(party_id) for b in ballots]
            step = batch_size or len(bundles) or 1
            verdicts = []
            for start in range(0, len(bundles), step):
                verdicts.extend(validation.batch_validate(
                    ctx, bundles[start:start + step], config.rule))
            results[party_id] = verdicts
        except BaseException as err:
            errors[party_id] = err

    threads = [threading.Thread(target=runner, args=(d,))
               for d in range(1, config.talliers + 1)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        party, err = sorted(errors.items())[0]
        raise RuntimeError(f"tallier {party} failed: {err!r}") from err
    return results[1]


def run_socket_validation(config: ElectionConfig, party_id: int,
                          bundles: list[TallierBundle],
                          batch_size: int | None = None,
                          session_id: int = 1) -> list[validation.ValidationVerdict]:
    """Validation phase only, one party over TCP."""
    endpoints = {d + 1: tuple(e) for d, e in enumerate(config.resolved_endpoints())}
    transport = SocketTransport(party_id, endpoints)
    try:
        channel = SessionChannel(transport, session_id)
        ctx = build_context(config, party_id, channel)
        step = batch_size or len(bundles) or 1
        verdicts = []
        for start in range(0, len(bundles), step):
            verdicts.extend(validation.batch_validate(
                ctx, bundles[start:start + step], config.rule))
        return verdicts
    finally:
        transport.close()


# -- benchmarking -----------------------------------------------------------------

def bench_validation(config: ElectionConfig, batch: int, repetitions: int,
                     rng: np.random.Generator) -> dict:
    """Time batch validation of ``batch`` random legal ballots."""
    if config.rule == "kemeny":
        rankings = [tuple(int(r) for r in rng.integers(1, config.m + 1, config.m))
                    for _ in range(batch)]
    else:
        rankings = [tuple(int(c) for c in rng.permutation(config.m) + 1)
                    for _ in range(batch)]
    ballots = make_shared_ballots(config, rankings)
    samples = []
    counters = {}
    for rep in range(repetitions):
        hub = InMemoryHub(config.talliers, timeout=LOCAL_ROUND_TIMEOUT)
        outcome: dict = {}
        errors: list = []

        def runner(party_id: int) -> None:
            try:
                channel = SessionChannel(hub.transport(party_id), 1)
                ctx = build_context(config, party_id, channel)
                bundles = [b.bundle_for(party_id) for b in ballots]
                t0 = time.perf_counter()
                verdicts = validation.batch_validate(ctx, bundles, config.rule)
                elapsed = time.perf_counter() - t0
                if party_id == 1:
                    outcome["elapsed"] = elapsed
                    outcome["counters"] = ctx.summary()
                    outcome["accepted"] = sum(v.accepted for v in verdicts)
            except BaseException as err:
                errors.append(err)

        threads = [threading.Thread(target=runner, args=(d,))
                   for d in range(1, config.talliers + 1)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]
        samples.append(outcome["elapsed"])
        counters = outcome["counters"]
    samples.sort()
    return {
        "phase": "validate",
        "rule": config.rule,
        "candidates": config.m,
        "talliers": config.talliers,
        "batch": batch,
        "seconds_min": samples[0],
        "seconds_median": samples[len(samples) // 2],
        "mul_gates": counters.get("mul_gates", 0),
        "mul_rounds": counters.get("mul_rounds", 0),
        "comm_rounds": counters.get("comm_rounds", 0),
    }


def bench_tally(config: ElectionConfig, voters: int,
                rng: np.random.Generator) -> dict:
    """Time one full pipeline (validate + aggregate + winners) for N voters."""
    if config.rule == "kemeny":
        rankings = [tuple(int(r) for r in rng.integers(1, config.m + 1, config.m))
                    for _ in range(voters)]
    else:
        rankings = [tuple(int(c) for c in rng.permutation(config.m) + 1)
                    for _ in range(voters)]
    ballots = make_shared_ballots(config, rankings)
    t0 = time.perf_counter()
    outcome = run_local_election(config, ballots)
    elapsed = time.perf_counter() - t0
    row = {
        "phase": "tally",
        "rule": config.rule,
        "candidates": config.m,
        "talliers": config.talliers,
        "voters": voters,
        "seconds": elapsed,
        "winners": outcome.result.winners,
    }
    row.update({k: v for k, v in outcome.result.counters.items()
                if k in ("mul_gates", "mul_rounds", "comm_rounds", "comparisons",
                         "lsb_extractions")})
    return row


def bench_comparison(config: ElectionConfig, repetitions: int) -> dict:
    """Microbenchmark one secure comparison (median over repetitions)."""
    samples = []
    for rep in range(repetitions):
        hub = InMemoryHub(config.talliers, timeout=LOCAL_ROUND_TIMEOUT)
        times: list = []
        errors: list = []

        def runner(party_id: int) -> None:
            try:
                channel = SessionChannel(hub.transport(party_id), 1)
                ctx = build_context(config, party_id, channel)
                a = ctx.constant(3)
                b = ctx.constant(5)
                ctx.pregenerate(doubles=2048, rand=2048)
                t0 = time.perf_counter()
                bit = ctx.compare(a, b)
                ctx.open(bit, "final_output")
                if party_id == 1:
                    times.append(time.perf_counter() - t0)
            except BaseException as err:
                errors.append(err)

        threads = [threading.Thread(target=runner, args=(d,))
                   for d in range(1, config.talliers + 1)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]
        samples.extend(times)
    samples.sort()
    return {
        "phase": "compare",
        "talliers": config.talliers,
        "seconds_median": samples[len(samples) // 2],
        "repetitions": repetitions,
    }
