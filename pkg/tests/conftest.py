"""Shared helpers: run SPMD party programs over the in-memory transport."""

import threading

import numpy as np
import pytest

from ordervote.engine import PartyContext, Shares
from ordervote.field import PrimeField
from ordervote.shamir import share_batch
from ordervote.transport import InMemoryHub, SessionChannel

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def run_parties(parties, threshold, field, program, seed=7, timeout=30.0,
                session=1, record_for=()):
    """Run ``program(ctx)`` on every party in its own thread; returns a dict
    party_id -> return value.  Exceptions propagate to the caller."""
    hub = InMemoryHub(parties, timeout=timeout)
    out, errors, records = {}, {}, {}

    def runner(d):
        try:
            transport = hub.transport(d)
            if d in record_for:
                transport.recorder = records.setdefault(d, [])
            channel = SessionChannel(transport, session)
            rng = np.random.default_rng(np.random.SeedSequence([seed, d]))
            ctx = PartyContext(d, parties, threshold, field, channel, rng)
            out[d] = program(ctx)
        except BaseException as err:
            errors[d] = err

    threads = [threading.Thread(target=runner, args=(d,))
               for d in range(1, parties + 1)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise sorted(errors.items())[0][1]
    out_records = {d: records.get(d, []) for d in record_for}
    return (out, out_records) if record_for else out


def deal(field, values, threshold, parties, seed=99):
    """Share a vector of secrets; returns the (D, k) share matrix."""
    rng = np.random.default_rng(seed)
    return share_batch(field, np.asarray(values, dtype=np.uint64),
                       threshold, parties, rng)


def dealt_shares(field, matrix, threshold, party_id):
    return Shares(field, threshold, matrix[party_id - 1].copy())


@pytest.fixture(scope="session")
def f31():
    return PrimeField(31)


@pytest.fixture(scope="session")
def f7():
    return PrimeField(7)


@pytest.fixture(scope="session")
def f_mersenne31():
    return PrimeField((1 << 31) - 1)
