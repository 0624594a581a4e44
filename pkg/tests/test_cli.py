import json
import subprocess
import sys

from ordervote.cli import main

M31 = (1 << 31) - 1


def write_config(path, **overrides):
    data = {
        "rule": "copeland",
        "candidates": ["C1", "C2", "C3"],
        "num_winners": 1,
        "talliers": 3,
        "prime": M31,
        "alpha": {"s": 1, "t": 2},
        "expected_voters": 10,
        "seed": 42,
    }
    data.update(overrides)
    path.write_text(json.dumps(data))
    return path


def demo_votes(session, keep_plain=True):
    extra = ["--keep-plain"] if keep_plain else []
    for order in ("C1,C2,C3", "C1,C3,C2", "C2,C1,C3"):
        assert main(["vote", "--session", str(session), "--order", order] + extra) == 0


def test_setup_vote_tally_demo_election(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json")
    session = tmp_path / "sess"
    assert main(["setup", "--config", str(cfg), "--session", str(session)]) == 0
    demo_votes(session)
    assert main(["validate", "--session", str(session)]) == 0
    assert main(["tally", "--session", str(session), "--open-scores"]) == 0
    out = capsys.readouterr().out
    assert "winner 1: C1" in out
    assert "opened scores: [4, 2, 0]" in out
    assert "comparisons=2" in out  # K(M-(K+1)/2) = 1*(3-1)
    result = json.loads((session / "result.json").read_text())
    assert result["winners"] == [1]
    audit = [json.loads(line) for line in
             (session / "audit.jsonl").read_text().splitlines()]
    assert len(audit) == 3 and all(rec["accepted"] for rec in audit)


def test_maximin_demo_and_full_ranking(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json", rule="maximin", num_winners=3)
    session = tmp_path / "sess"
    main(["setup", "--config", str(cfg), "--session", str(session)])
    demo_votes(session)
    assert main(["tally", "--session", str(session)]) == 0
    out = capsys.readouterr().out
    assert "winner 1: C1" in out and "winner 2: C2" in out and "winner 3: C3" in out
    result = json.loads((session / "result.json").read_text())
    assert result["winners"] == [1, 2, 3]  # K = M: full ranking
    assert result["counters"]["comparisons"] == 3 * 1 + 3  # M(M-2) + M(M-1)/2


def test_setup_rejects_small_field(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json", prime=31, expected_voters=20)
    assert main(["setup", "--config", str(cfg), "--session", str(tmp_path / "s")]) == 2
    assert "2N" in capsys.readouterr().err


def test_vote_rejects_malformed_order(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json")
    session = tmp_path / "sess"
    main(["setup", "--config", str(cfg), "--session", str(session)])
    assert main(["vote", "--session", str(session), "--order", "C1,C1,C3"]) == 2
    assert "rejected" in capsys.readouterr().err


def test_kemeny_ranks_paper_example(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json", rule="kemeny",
                       candidates=["Alice", "Bob", "Carol", "David"],
                       num_winners=2)
    session = tmp_path / "sess"
    main(["setup", "--config", str(cfg), "--session", str(session)])
    assert main(["vote", "--session", str(session),
                 "--ranks", "Alice=3,Bob=2,Carol=1,David=3", "--keep-plain"]) == 0
    assert main(["tally", "--session", str(session)]) == 0
    out = capsys.readouterr().out
    assert "winner 1: Carol" in out and "winner 2: Bob" in out
    result = json.loads((session / "result.json").read_text())
    assert result["winners"] == [3, 2]
    assert result["kemeny_ranking"] == [3, 2, 1, 3] or \
        result["kemeny_ranking"][2] == 1  # Carol leads the winning ranking


def test_result_file_reproducible_byte_for_byte(tmp_path):
    blobs = []
    for run in range(2):
        cfg = write_config(tmp_path / f"cfg{run}.json")
        session = tmp_path / f"sess{run}"
        main(["setup", "--config", str(cfg), "--session", str(session)])
        demo_votes(session, keep_plain=False)
        main(["tally", "--session", str(session)])
        blobs.append((session / "result.json").read_bytes())
    assert blobs[0] == blobs[1]


def test_oracle_side_by_side(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json")
    session = tmp_path / "sess"
    main(["setup", "--config", str(cfg), "--session", str(session)])
    demo_votes(session)
    main(["tally", "--session", str(session)])
    capsys.readouterr()
    assert main(["oracle", "--session", str(session)]) == 0
    out = capsys.readouterr().out
    assert "oracle winners: [1]" in out
    assert "scores (t*w): [4, 2, 0]" in out


def test_oracle_from_ballot_file(tmp_path, capsys):
    ballots = tmp_path / "ballots.json"
    ballots.write_text(json.dumps({
        "rule": "maximin", "num_candidates": 3, "num_winners": 1,
        "rankings": [[1, 2, 3], [1, 3, 2], [2, 1, 3]]}))
    assert main(["oracle", "--ballots", str(ballots)]) == 0
    out = capsys.readouterr().out
    assert "scores: [2, 1, 0]" in out and "oracle winners: [1]" in out


def test_bench_smoke(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json", candidates=["A", "B", "C"])
    out_file = tmp_path / "bench.json"
    assert main(["bench", "--config", str(cfg), "--batch", "20", "--reps", "2",
                 "--voters", "10", "--out", str(out_file)]) == 0
    rows = json.loads(out_file.read_text())
    phases = [r["phase"] for r in rows]
    assert phases == ["validate", "tally", "compare"]
    validate_row = rows[0]
    assert validate_row["mul_rounds"] == 3  # M(M-1)/2 for M = 3
    assert validate_row["mul_gates"] == 2 * 20 * 3
    out = capsys.readouterr().out
    assert "validate" in out and "compare" in out


def test_setup_seed_override(tmp_path):
    cfg = write_config(tmp_path / "cfg.json", seed=1)
    session = tmp_path / "sess"
    assert main(["setup", "--config", str(cfg), "--session", str(session),
                 "--seed", "777"]) == 0
    stored = json.loads((session / "session.json").read_text())
    assert stored["seed"] == 777


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "ordervote.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "setup" in proc.stdout and "tally" in proc.stdout


def test_tally_local_flag_mismatch(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json")
    session = tmp_path / "sess"
    main(["setup", "--config", str(cfg), "--session", str(session)])
    demo_votes(session, keep_plain=False)
    assert main(["tally", "--session", str(session), "--local", "5"]) == 2


def test_reconstruct_rejected_flag_prints_proof(tmp_path, capsys):
    cfg = write_config(tmp_path / "cfg.json")
    session = tmp_path / "sess"
    main(["setup", "--config", str(cfg), "--session", str(session)])
    demo_votes(session, keep_plain=False)
    # corrupt voter 2's spool entries on every tallier: an inflated 2Q ballot
    for d in (1, 2, 3):
        spool = session / "ballots" / f"tallier_{d}.jsonl"
        lines = []
        for line in spool.read_text().splitlines():
            rec = json.loads(line)
            if rec["voter_id"] == 2:
                rec["values"] = [2 * v % M31 for v in rec["values"]]
            lines.append(json.dumps(rec))
        spool.write_text("\n".join(lines) + "\n")
    assert main(["tally", "--session", str(session), "--reconstruct-rejected"]) == 0
    out = capsys.readouterr().out
    assert "reconstructed rejected ballot of voter 2" in out
    audit = [json.loads(line) for line in
             (session / "audit.jsonl").read_text().splitlines()]
    assert [rec["accepted"] for rec in audit] == [True, False, True]
    assert audit[1]["reason"] == "EntryDomain"


def _free_endpoints(n):
    import socket
    socks, endpoints = [], []
    for _ in range(n):
        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        socks.append(s)
        endpoints.append(["127.0.0.1", s.getsockname()[1]])
    for s in socks:
        s.close()
    return endpoints


def test_distributed_socket_tally_via_cli(tmp_path):
    import threading
    cfg = write_config(tmp_path / "cfg.json", backend="socket",
                       endpoints=_free_endpoints(3))
    session = tmp_path / "sess"
    assert main(["setup", "--config", str(cfg), "--session", str(session)]) == 0
    demo_votes(session, keep_plain=False)
    codes = {}

    def party(d):
        codes[d] = main(["tally", "--session", str(session), "--party", str(d)])

    threads = [threading.Thread(target=party, args=(d,)) for d in (1, 2, 3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert codes == {1: 0, 2: 0, 3: 0}
    result = json.loads((session / "result.json").read_text())
    assert result["winners"] == [1]


def test_live_socket_votes_via_cli(tmp_path):
    import threading
    cfg = write_config(tmp_path / "cfg.json", backend="socket",
                       endpoints=_free_endpoints(3))
    session = tmp_path / "sess"
    assert main(["setup", "--config", str(cfg), "--session", str(session)]) == 0
    codes = {}

    def party(d):
        codes[d] = main(["tally", "--session", str(session), "--party", str(d),
                         "--expect-votes", "3"])

    threads = [threading.Thread(target=party, args=(d,)) for d in (1, 2, 3)]
    for t in threads:
        t.start()
    for i, order in enumerate(("C1,C2,C3", "C1,C3,C2", "C2,C1,C3"), 1):
        assert main(["vote", "--session", str(session), "--order", order,
                     "--voter-id", str(i), "--transport", "socket"]) == 0
    for t in threads:
        t.join()
    assert codes == {1: 0, 2: 0, 3: 0}
    result = json.loads((session / "result.json").read_text())
    assert result["winners"] == [1]
