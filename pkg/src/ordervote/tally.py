"""Aggregation of validated ballots and MPC winner determination.

Aggregation is pure local share addition.  Scoring touches the network only
through the comparison/positivity/zero primitives:

* copeland: for every upper-triangle entry of the aggregated matrix, shares
  of the positivity bits of P(m,m') and -P(m,m') and of the zero bit; the
  rescaled score t*w(m) is then a local linear combination of those bits.
* maximin: below-diagonal entries follow from the public accepted-ballot
  count (P(m',m) = N_acc - P(m,m')); each candidate's minimum is an oblivious
  fold of M-2 comparisons, M(M-2) comparisons overall.
* kemeny: all M! ranking scores are local linear combinations of the
  aggregated entries; the argmax ranking is found with M!-1 comparisons and
  only its identity is opened.

Winner selection opens candidate identities one at a time; scores stay
secret unless the operator explicitly asks for them.  Ties everywhere follow
the policy in ``config``: an equal challenger never displaces the incumbent,
so the lowest index (or first-enumerated ranking) wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .ballots import TallierBundle, entry_pairs, upper_pairs
from .config import FieldTooSmall, rank_vectors, ranking_winners
from .engine import PartyContext, Shares

KEMENY_MAX_CANDIDATES = 6


class RuleMismatch(Exception):
    pass


class TooManyCandidates(Exception):
    pass


@dataclass
class AggregatedShares:
    """This party's shares of the aggregated ballot matrix entries."""

    rule: str
    m: int
    ballots: int  # accepted-ballot count N_acc (public)
    entries: Shares  # aligned with entry_pairs(rule, m)


@dataclass
class TallyResult:
    rule: str
    winners: list[int]  # 1-based candidate indices in elected order
    winner_names: list[str] = dataclass_field(default_factory=list)
    kemeny_ranking: tuple[int, ...] | None = None
    opened_scores: list[int] | None = None
    counters: dict = dataclass_field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "rule": self.rule,
            "winners": list(self.winners),
            "winner_names": list(self.winner_names),
            "counters": dict(self.counters),
        }
        if self.kemeny_ranking is not None:
            out["kemeny_ranking"] = list(self.kemeny_ranking)
        if self.opened_scores is not None:
            out["opened_scores"] = list(self.opened_scores)
        return out


def aggregate(ctx: PartyContext, bundles: list[TallierBundle], rule: str,
              m: int) -> AggregatedShares:
    """Sum this party's shares over all accepted ballots; no communication."""
    k = len(entry_pairs(rule, m))
    for b in bundles:
        if b.rule != rule or b.m != m:
            raise RuleMismatch(f"ballot of voter {b.voter_id} belongs to a different session")
    if bundles:
        stacked = np.stack([np.asarray(b.values, dtype=np.uint64) for b in bundles])
        total = ctx.field.sum_vec(stacked, axis=0)
    else:
        total = np.zeros(k, dtype=np.uint64)
    return AggregatedShares(rule, m, len(bundles),
                            Shares(ctx.field, ctx.threshold, total))


def _check_field_bounds(ctx: PartyContext, agg: AggregatedShares,
                        alpha: tuple[int, int] | None) -> None:
    p = ctx.field.p
    if p <= 2 * agg.ballots:
        raise FieldTooSmall(f"p = {p} must exceed 2N = {2 * agg.ballots}")
    if alpha is not None:
        s, t = alpha
        if p <= max(s, t) * (agg.m - 1):
            raise FieldTooSmall(f"p = {p} must exceed max(s,t)(M-1)")


def copeland_scores(ctx: PartyContext, agg: AggregatedShares,
                    alpha: tuple[int, int] = (1, 2)) -> Shares:
    """Shares of the rescaled scores t*w(m), m = 1..M.

    One batched LSB extraction covers all positivity bits (both signs of every
    upper entry); the zero bits cost one Fermat ladder over the same batch.
    """
    _check_field_bounds(ctx, agg, alpha)
    s, t = alpha
    m = agg.m
    pairs = upper_pairs(m)
    c = len(pairs)
    entries = agg.entries
    if c == 0:
        return ctx.constant(np.zeros(m, dtype=np.uint64))
    both_signs = Shares.concat([entries, -entries])
    pos = ctx.is_positive(both_signs)
    sigma_pos, sigma_neg = pos[:c], pos[c:]
    sigma_zero = ctx.is_zero(entries)

    wins = [ctx.constant(0) for _ in range(m)]
    ties = [ctx.constant(0) for _ in range(m)]
    for i, (a, b) in enumerate(pairs):
        wins[a - 1] = wins[a - 1] + sigma_pos[i]  # P(a,b) > 0: a beats b
        wins[b - 1] = wins[b - 1] + sigma_neg[i]  # -P(a,b) > 0: b beats a
        ties[a - 1] = ties[a - 1] + sigma_zero[i]
        ties[b - 1] = ties[b - 1] + sigma_zero[i]
    per_candidate = [t * wins[i] + s * ties[i] for i in range(m)]
    return Shares.concat(per_candidate)


def maximin_scores(ctx: PartyContext, agg: AggregatedShares) -> Shares:
    """Shares of w(m) = min over opponents of the supporting-voter counts.

    All M candidate folds advance in lockstep, so each of the M-2 steps is one
    batch of M simultaneous comparisons.
    """
    _check_field_bounds(ctx, agg, None)
    m = agg.m
    if m == 1:
        return ctx.constant(np.zeros(1, dtype=np.uint64))
    pos = {pair: i for i, pair in enumerate(upper_pairs(m))}
    n_acc = agg.ballots
    columns = []  # M-1 columns; column j holds each candidate's j-th opponent entry
    for j in range(m - 1):
        parts = []
        for a in range(1, m + 1):
            opponents = [b for b in range(1, m + 1) if b != a]
            b = opponents[j]
            if a < b:
                parts.append(agg.entries[pos[(a, b)]])
            else:
                parts.append(n_acc - agg.entries[pos[(b, a)]])
        columns.append(Shares.concat(parts))
    current = columns[0]
    for nxt in columns[1:]:
        smaller = ctx.compare(nxt, current)  # 1 iff the challenger is smaller
        current = ctx.select(smaller, current, nxt)
    return current


def top_k(ctx: PartyContext, scores: Shares, k: int,
          candidates: list[int] | None = None) -> list[int]:
    """Elect K candidates by repeated secure-maximum tournaments.

    Stage k runs M-k comparisons; the winner's index (never its score) is
    opened and the candidate leaves the pool.  An equal challenger does not
    displace the incumbent, so ties go to the lowest index.
    """
    m = scores.size
    pool = list(candidates) if candidates is not None else list(range(1, m + 1))
    winners: list[int] = []
    for _ in range(k):
        best_score = scores[pool[0] - 1]
        best_index = ctx.constant(pool[0])
        for cand in pool[1:]:
            challenger = scores[cand - 1]
            better = ctx.compare(best_score, challenger)  # strict: ties keep incumbent
            best_score = ctx.select(better, best_score, challenger)
            best_index = ctx.select(better, best_index, ctx.constant(cand))
        winner = int(ctx.open(best_index, "winner_index")[0])
        winners.append(winner)
        pool.remove(winner)
    return winners


def kemeny_winners(ctx: PartyContext, agg: AggregatedShares,
                   k: int) -> tuple[list[int], tuple[int, ...]]:
    """Best ranking by pairwise agreement; returns its top-K candidates.

    Scores for all M! rankings are local linear combinations of the aggregated
    entries; the argmax tournament costs M!-1 comparisons and opens only the
    winning ranking's identity.
    """
    m = agg.m
    if m > KEMENY_MAX_CANDIDATES:
        raise TooManyCandidates(
            f"kemeny enumerates M! rankings; M = {m} exceeds the guard "
            f"({KEMENY_MAX_CANDIDATES})")
    _check_field_bounds(ctx, agg, None)
    pairs = entry_pairs("kemeny", m)
    rankings = list(rank_vectors(m))
    coef = np.zeros((len(rankings), len(pairs)), dtype=np.uint64)
    for r, ranks in enumerate(rankings):
        for i, (a, b) in enumerate(pairs):
            if ranks[a - 1] < ranks[b - 1]:
                coef[r, i] = 1
    score_vals = ctx.field.reduce_vec(coef @ agg.entries.values)
    scores = Shares(ctx.field, ctx.threshold, score_vals)

    best_score = scores[0]
    best_index = ctx.constant(0)
    for j in range(1, len(rankings)):
        better = ctx.compare(best_score, scores[j])
        best_score = ctx.select(better, best_score, scores[j])
        best_index = ctx.select(better, best_index, ctx.constant(j))
    winner_row = int(ctx.open(best_index, "winner_index")[0])
    ranking = rankings[winner_row]
    return ranking_winners(ranking, k), ranking
