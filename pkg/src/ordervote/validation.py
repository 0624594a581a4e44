"""Tallier-side oblivious validation of shared ballots.

Three checks run against every submission, in this order:

1. share-degree legality: each entry's D shares must lie on a polynomial of
   degree at most D'-1.  Every tallier adds its share of a fresh joint random
   mask and broadcasts the sum; the interpolant through the D masked points
   has the same degree as the dealer's polynomial, while its free coefficient
   is uniformly random, so nothing about the entry leaks.
2. entry domain (condition 1): a shared x is in {-1,1} iff (x+1)(x-1) = 0 and
   in {0,1} iff x(x-1) = 0; one multiplication gate per entry, all entries in
   the same round, products opened and compared with zero.  Kemeny ballots
   additionally check every opposing pair sum against {0,1} the same way.
3. distinct column sums (condition 4, copeland/maximin): shares of the column
   sums come from local linear algebra; the product of all pairwise
   differences F(Q) is folded one factor per round and finally squared, so the
   opened value F(Q)^2 is rule-and-M constant for every legal ballot and zero
   exactly when two sums collide.

``batch_validate`` interleaves checks 2 and 3 across B ballots so each of the
M(M-1)/2 rounds carries 2B simultaneous multiplication gates (the last round
carries the B squarings).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ballots import TallierBundle, entry_pairs, upper_pairs
from .engine import PartyContext, Shares
from .shamir import degree_at_most, reconstruct_batch

REASON_DEGREE = "ShareDegree"
REASON_DOMAIN = "EntryDomain"
REASON_SUMS = "ColumnSums"


@dataclass(frozen=True)
class ValidationVerdict:
    voter_id: int
    accepted: bool
    reason: str | None = None

    def record(self) -> dict:
        out = {"voter_id": self.voter_id, "accepted": self.accepted}
        if self.reason is not None:
            out["reason"] = self.reason
        return out


def masked_degree_check(ctx: PartyContext, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Degree-legality of k independent sharings held as this party's values.

    Returns (legal flags, opened masked constants); the constants are uniform
    field elements and are exposed only so tests can verify that uniformity.
    """
    values = np.asarray(values, dtype=np.uint64)
    k = values.size
    if k == 0:
        return np.ones(0, dtype=bool), np.zeros(0, dtype=np.uint64)
    masks = ctx.rand_shares(k)
    masked = ctx.field.add_vec(values, masks.values)
    matrix = ctx.open_share_matrix(masked, "degree_check")
    legal = degree_at_most(ctx.field, matrix, ctx.threshold)
    constants = reconstruct_batch(ctx.field, range(1, ctx.parties + 1), matrix)
    return legal, constants


def verify_share_degree(ctx: PartyContext, entry_shares: np.ndarray) -> bool:
    """One ballot's entries: True iff every sharing is a legal D'-out-of-D one."""
    legal, _ = masked_degree_check(ctx, entry_shares)
    return bool(np.all(legal))


def _domain_factors(rule: str, entries: Shares) -> tuple[Shares, Shares]:
    if rule == "copeland":
        return entries + 1, entries - 1  # zero iff entry in {-1, 1}
    return entries, entries - 1  # zero iff entry in {0, 1}


def verify_entry_domain(ctx: PartyContext, entry_shares: np.ndarray, rule: str,
                        m: int) -> bool:
    """One ballot's condition-1 check; all products in one simultaneous round."""
    x = Shares(ctx.field, ctx.threshold, np.asarray(entry_shares, dtype=np.uint64))
    u, v = _domain_factors(rule, x)
    if rule == "kemeny":
        sums = _kemeny_pair_sums(x, m)
        u, v = Shares.concat([u, sums]), Shares.concat([v, sums - 1])
    products = ctx.open(ctx.mul(u, v), "validation_product")
    return bool(np.all(products == 0))


def _kemeny_pair_sums(entries: Shares, m: int) -> Shares:
    """Shares of P(a,b) + P(b,a) for every unordered pair; must be 0 or 1."""
    pos = {pair: i for i, pair in enumerate(entry_pairs("kemeny", m))}
    idx_ab = [pos[(a, b)] for a, b in upper_pairs(m)]
    idx_ba = [pos[(b, a)] for a, b in upper_pairs(m)]
    return entries[idx_ab] + entries[idx_ba]


def column_sum_shares(ctx: PartyContext, entry_shares: np.ndarray, rule: str,
                      m: int) -> Shares:
    """Shares of the column sums Q_m from upper-triangle shares; local only.

    Copeland uses antisymmetry (lower entries are negated upper ones); maximin
    additionally credits the public M-m complement of the lower entries.
    """
    values = np.atleast_2d(np.asarray(entry_shares, dtype=np.uint64))  # (B, C)
    batch = values.shape[0]
    pos = {pair: i for i, pair in enumerate(upper_pairs(m))}
    sums = np.zeros((batch, m), dtype=np.uint64)
    for col in range(1, m + 1):
        acc = np.zeros(batch, dtype=np.uint64)
        for row in range(1, col):
            acc = ctx.field.add_vec(acc, values[:, pos[(row, col)]])
        for row in range(col + 1, m + 1):
            acc = ctx.field.sub_vec(acc, values[:, pos[(col, row)]])
        if rule == "maximin":
            acc = ctx.field.add_vec(acc, np.uint64(m - col))
        sums[:, col - 1] = acc
    if np.asarray(entry_shares).ndim == 1:
        sums = sums[0]
    return Shares(ctx.field, ctx.threshold, sums)


def verify_distinct_sums(ctx: PartyContext, sums: Shares, rule: str) -> bool:
    """One ballot's condition-4 check: F(Q)^2 opened, nonzero means distinct."""
    m = sums.size
    pairs = upper_pairs(m)
    if not pairs:
        return True
    diffs = [sums[b - 1] - sums[a - 1] for a, b in pairs]
    f = diffs[0]
    for d in diffs[1:]:
        f = ctx.mul(f, d)
    squared = ctx.mul(f, f)  # erases the permutation-signature leak
    return bool(ctx.open(squared, "validation_product")[0] != 0)


def batch_validate(ctx: PartyContext, bundles: list[TallierBundle],
                   rule: str) -> list[ValidationVerdict]:
    """Validate B ballots in one session: degree first, then conditions 1 and 4
    interleaved so every round carries 2B simultaneous multiplications."""
    if not bundles:
        return []
    m = bundles[0].m
    expected = len(entry_pairs(rule, m))
    for b in bundles:
        if b.rule != rule or b.m != m or b.values.size != expected:
            raise ValueError(f"bundle of voter {b.voter_id} does not match the session")
    voters = [b.voter_id for b in bundles]
    stacked = np.stack([np.asarray(b.values, dtype=np.uint64) for b in bundles])

    legal, _ = masked_degree_check(ctx, stacked.ravel())
    degree_ok = legal.reshape(stacked.shape).all(axis=1)

    verdicts: dict[int, ValidationVerdict] = {}
    for voter, ok in zip(voters, degree_ok):
        if not ok:
            verdicts[voter] = ValidationVerdict(voter, False, REASON_DEGREE)

    live = np.flatnonzero(degree_ok)
    if live.size:
        values = stacked[live]
        if rule == "kemeny":
            domain_ok = _validate_kemeny_conditions(ctx, values, m)
            sums_ok = np.ones(live.size, dtype=bool)
        else:
            domain_ok, sums_ok = _validate_interleaved(ctx, values, rule, m)
        for row, idx in enumerate(live):
            voter = voters[idx]
            if not domain_ok[row]:
                verdicts[voter] = ValidationVerdict(voter, False, REASON_DOMAIN)
            elif not sums_ok[row]:
                verdicts[voter] = ValidationVerdict(voter, False, REASON_SUMS)
            else:
                verdicts[voter] = ValidationVerdict(voter, True)
    return [verdicts[v] for v in voters]


def _validate_interleaved(ctx: PartyContext, values: np.ndarray, rule: str,
                          m: int) -> tuple[np.ndarray, np.ndarray]:
    """Copeland/maximin conditions over a (B, C) value matrix: C rounds of 2B
    gates; round r pairs entry r's domain product with fold step r of F(Q),
    the final fold step being the squaring."""
    batch, c = values.shape
    if c == 0:
        return np.ones(batch, dtype=bool), np.ones(batch, dtype=bool)
    entries = Shares(ctx.field, ctx.threshold, values)
    u_all, v_all = _domain_factors(rule, entries)
    sums = column_sum_shares(ctx, values, rule, m)
    pairs = upper_pairs(m)
    diffs = [sums[:, b - 1] - sums[:, a - 1] for a, b in pairs]

    products = np.empty((batch, c), dtype=np.uint64)
    fold = diffs[0]
    for r in range(1, c + 1):
        factor = diffs[r] if r < c else fold  # last step squares F
        left = Shares.concat([u_all[:, r - 1], fold])
        right = Shares.concat([v_all[:, r - 1], factor])
        out = ctx.mul(left, right)
        products[:, r - 1] = out.values[:batch]
        fold = out[batch:]
    opened = ctx.open(
        Shares.concat([Shares(ctx.field, ctx.threshold, products.ravel()), fold]),
        "validation_product").reshape(-1)
    domain_ok = (opened[:batch * c].reshape(batch, c) == 0).all(axis=1)
    sums_ok = opened[batch * c:] != 0
    return domain_ok, sums_ok


def _validate_kemeny_conditions(ctx: PartyContext, values: np.ndarray,
                                m: int) -> np.ndarray:
    """Kemeny legality: every entry in {0,1} and every opposing pair sum in
    {0,1}; all products run as one simultaneous round."""
    batch = values.shape[0]
    entries = Shares(ctx.field, ctx.threshold, values)
    u, v = _domain_factors("kemeny", entries)
    pos = {pair: i for i, pair in enumerate(entry_pairs("kemeny", m))}
    idx_ab = [pos[(a, b)] for a, b in upper_pairs(m)]
    idx_ba = [pos[(b, a)] for a, b in upper_pairs(m)]
    sums = entries[:, idx_ab] + entries[:, idx_ba]
    left = Shares.concat([u, sums])
    right = Shares.concat([v, sums - 1])
    opened = ctx.open(ctx.mul(left, right), "validation_product")
    per_ballot = opened.reshape(batch, -1) if opened.size else opened.reshape(batch, 0)
    return (per_ballot == 0).all(axis=1)


def reconstruct_rejected(ctx: PartyContext, bundle: TallierBundle) -> np.ndarray:
    """Recover a rejected ballot as dishonesty proof (explicit cooperation of
    >= D' talliers; here all parties broadcast their raw shares).  Returns the
    signed M x M matrix implied by the shared entries."""
    matrix = ctx.open_share_matrix(bundle.values, "rejected_ballot_proof")
    opened = reconstruct_batch(ctx.field, range(1, ctx.threshold + 1),
                               matrix[:ctx.threshold])
    half = ctx.field.p // 2
    signed = np.where(opened > half, opened.astype(np.int64) - ctx.field.p,
                      opened.astype(np.int64))
    out = np.zeros((bundle.m, bundle.m), dtype=np.int64)
    for (a, b), val in zip(entry_pairs(bundle.rule, bundle.m), signed):
        out[a - 1, b - 1] = val
        if bundle.rule == "copeland":
            out[b - 1, a - 1] = -val
        elif bundle.rule == "maximin":
            out[b - 1, a - 1] = 1 - val
    return out
