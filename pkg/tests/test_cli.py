import json
import os
import subprocess
import sys

import pytest

from oblivsd.cli import main, parse_rules, read_claims
from oblivsd.errors import QuotaExceeded

CLAIMS = [(f"c{i}", f"value number {i}") for i in range(8)]


def run(ws, *argv):
    return main(["--directory", str(ws / "dir.bin"), *argv])


@pytest.fixture
def ws(tmp_path):
    """Issuer, holder and verifier keys plus an issued 8-claim credential."""
    for party in ("issuer", "holder", "verifier"):
        assert run(tmp_path, "keygen", party, "--out", str(tmp_path / f"{party}.key")) == 0
    claims = tmp_path / "claims.txt"
    claims.write_text("# test claims\n" + "".join(f"{n}={v}\n" for n, v in CLAIMS))
    assert run(tmp_path, "issue", "--key", str(tmp_path / "issuer.key"), "--subject", "holder",
               "--claims", str(claims), "--out", str(tmp_path / "cred")) == 0
    assert run(tmp_path, "present", "--key", str(tmp_path / "holder.key"),
               "--credential", str(tmp_path / "cred"), "--audience", "verifier",
               "--out", str(tmp_path / "pres")) == 0
    return tmp_path


class Server:
    def __init__(self, ws, quota, sessions=1):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "oblivsd.cli", "--directory", str(ws / "dir.bin"), "serve",
             "--key", str(ws / "holder.key"), "--presentation", str(ws / "pres"),
             "--quota", str(quota), "--endpoint", "tcp:127.0.0.1:0",
             "--sessions", str(sessions), "--accept-timeout", "20"],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
        line = self.proc.stdout.readline()
        assert line.startswith("listening on tcp:127.0.0.1:"), line
        self.endpoint = line.split()[-1]

    def finish(self):
        out, err = self.proc.communicate(timeout=30)
        return self.proc.returncode, out, err


def disclose(ws, endpoint, *extra):
    return run(ws, "disclose", "--key", str(ws / "verifier.key"), "--endpoint", endpoint,
               "--holder", "holder", *extra)


def test_keygen_files(ws):
    assert os.stat(ws / "holder.key").st_mode & 0o777 == 0o600
    assert os.stat(ws / "cred.vcd").st_mode & 0o777 == 0o600
    assert os.stat(ws / "pres.secret").st_mode & 0o777 == 0o600
    assert (ws / "dir.bin.root").exists()


def test_keygen_duplicate_is_validation_error(ws, capsys):
    assert run(ws, "keygen", "holder", "--out", str(ws / "again.key")) == 2
    assert "DuplicatePartyId" in capsys.readouterr().err


def test_tampered_directory(ws, capsys):
    data = bytearray((ws / "dir.bin").read_bytes())
    data[len(data) // 2] ^= 1
    (ws / "dir.bin").write_bytes(bytes(data))
    code = run(ws, "issue", "--key", str(ws / "issuer.key"), "--subject", "holder",
               "--claims", str(ws / "claims.txt"), "--out", str(ws / "x"))
    assert code == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("oblivsd issue: DirectoryError")


def test_missing_file_is_io_error(ws):
    assert run(ws, "present", "--key", str(ws / "holder.key"), "--credential",
               str(ws / "nothing"), "--audience", "verifier", "--out", str(ws / "p2")) == 4


def test_batch_disclosure_end_to_end(ws, capsysbinary):
    server = Server(ws, quota=2)
    assert disclose(ws, server.endpoint, "--pick", "c2", "--pick", "0:c6") == 0
    code, out, _ = server.finish()
    assert code == 0
    assert "served 1 sessions, 2 of 2 evaluations used" in out
    assert capsysbinary.readouterr().out == b"c2=value number 2\nc6=value number 6\n"
    assert not (ws / "pres.secret").exists()


def test_adaptive_mode_with_picks(ws, capsysbinary):
    server = Server(ws, quota=3)
    assert disclose(ws, server.endpoint, "--mode", "adaptive",
                    "--pick", "c0", "--pick", "c1", "--pick", "c7") == 0
    server.finish()
    assert capsysbinary.readouterr().out.splitlines() == [
        b"c0=value number 0", b"c1=value number 1", b"c7=value number 7"]


def test_over_quota_refused_before_any_request(ws, capsys):
    server = Server(ws, quota=2)
    code = disclose(ws, server.endpoint, "--pick", "c0", "--pick", "c1", "--pick", "c2")
    assert code == 3
    assert "QuotaExceeded" in capsys.readouterr().err
    _, out, _ = server.finish()
    assert "0 of 2 evaluations used" in out


def test_unknown_claim(ws):
    server = Server(ws, quota=2)
    assert disclose(ws, server.endpoint, "--pick", "nope") == 2
    server.finish()


def test_quota_shared_across_sessions(ws, capsysbinary):
    server = Server(ws, quota=3, sessions=2)
    assert disclose(ws, server.endpoint, "--pick", "c0", "--pick", "c1") == 0
    # one evaluation left: asking for two is refused by the holder
    assert disclose(ws, server.endpoint, "--pick", "c2", "--pick", "c3") == 3
    _, out, _ = server.finish()
    assert "served 2 sessions, 2 of 3 evaluations used" in out
    assert capsysbinary.readouterr().out == b"c0=value number 0\nc1=value number 1\n"


def test_rules_file(ws, capsysbinary):
    rules = ws / "rules.txt"
    # c3's value starts with "value", so c5 follows; c5 then matches nothing
    rules.write_text("start c3\nif c3 prefix %s then next c5\nif c5 prefix ff then next c6\n"
                     % b"value".hex())
    server = Server(ws, quota=4)
    assert disclose(ws, server.endpoint, "--rules", str(rules)) == 0
    _, out, _ = server.finish()
    assert "2 of 4 evaluations used" in out
    assert capsysbinary.readouterr().out == b"c3=value number 3\nc5=value number 5\n"


def test_wrong_verifier_key(ws, capsys):
    assert run(ws, "keygen", "eve", "--out", str(ws / "eve.key")) == 0
    server = Server(ws, quota=2)
    code = run(ws, "disclose", "--key", str(ws / "eve.key"), "--endpoint", server.endpoint,
               "--pick", "c0")
    assert code == 3
    assert "OfferRejected" in capsys.readouterr().err
    _, out, _ = server.finish()
    assert "0 of 2 evaluations used" in out


def test_parse_rules():
    start, rules = parse_rules("# comment\nstart a\nif a prefix 00ff then next b\n")
    assert start == "a" and rules == [("a", b"\x00\xff", "b")]
    for bad in ("if a prefix 00 then next b", "start a\nif a prefix zz then next b",
                "start a\ngo b"):
        with pytest.raises(Exception):
            parse_rules(bad)


def test_read_claims_raw_values(tmp_path):
    path = tmp_path / "c.txt"
    path.write_bytes(b"a=1=2\n\n# x\nb= spaced \r\nc=\xff\n")
    assert read_claims(path) == [("a", b"1=2"), ("b", b" spaced "), ("c", b"\xff")]
    path.write_bytes(b"novalue\n")
    with pytest.raises(Exception):
        read_claims(path)


def test_bench_command(tmp_path, capsys):
    config = tmp_path / "bench.json"
    config.write_text(json.dumps({"claim_counts": [2, 8, 32], "repetitions": 10,
                                  "scaling_n": 32, "scaling_quotas": [1, 4, 16]}))
    out = tmp_path / "bench.csv"
    summary = tmp_path / "summary.txt"
    code = main(["bench", "--config", str(config), "--out", str(out), "--summary", str(summary)])
    text = capsys.readouterr().out
    assert out.exists() and summary.exists()
    assert "PASS" in text or "FAIL" in text
    # exit status follows the checks
    assert code == (0 if "FAIL" not in text else 2)


def test_quota_exceeded_is_protocol_exit():
    from oblivsd.cli import _classify
    assert _classify(QuotaExceeded())[0] == 3
