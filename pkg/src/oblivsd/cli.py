"""Command-line entry points.

    oblivsd keygen   PARTY --out KEY
    oblivsd issue    --key KEY --subject ID --claims FILE --out BASE
    oblivsd present  --key KEY --credential BASE [...] --audience ID --out BASE
    oblivsd serve    --key KEY --presentation BASE --quota N --endpoint E
    oblivsd disclose --key KEY --endpoint E (--pick NAME ... | --rules FILE)
    oblivsd bench    [--config FILE] [--preset desk|full] [--out CSV]

The key directory lives at ``--directory`` or ``$OBLIVSD_DIRECTORY``
(default ``directory.bin``). Exit codes: 0 ok, 2 validation failure,
3 protocol failure, 4 I/O failure; failures print one line on stderr.
"""

import argparse
import os
import sys

from . import harness
from .credential import CredentialData, VerifiableCredential, issue
from .disclosure import scripted_picker, verifier_disclose_adaptive, verifier_disclose_batch
from .errors import (
    DecodeError,
    DirectoryError,
    DuplicateClaimName,
    DuplicatePartyId,
    EmptyClaimSet,
    ProtocolError,
    QuotaExceeded,
)
from .identity import KeyDirectory, PartyKey
from .presentation import (
    PresentationData,
    PresentationSecret,
    VerifiablePresentation,
    create_presentation,
)
from .wire import HolderServer, open_verifier_session, transport_connect, transport_serve

DIRECTORY_ENV = "OBLIVSD_DIRECTORY"
EXIT_OK, EXIT_VALIDATION, EXIT_PROTOCOL, EXIT_IO = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, code, reason):
        super().__init__(reason)
        self.code = code
        self.reason = reason


# -- file helpers -------------------------------------------------------

def _read(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _write(path, data: bytes, mode=0o644) -> None:
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, mode)
    with os.fdopen(fd, "wb") as fh:
        fh.write(data)


def read_claims(path):
    """``name=value`` per line; blank lines and ``#`` comments skipped.
    Values are taken as raw bytes up to the end of the line."""
    claims = []
    for number, line in enumerate(_read(path).split(b"\n"), 1):
        line = line.rstrip(b"\r")
        if not line.strip() or line.lstrip().startswith(b"#"):
            continue
        name, sep, value = line.partition(b"=")
        if not sep or not name.strip():
            raise CliError(EXIT_VALIDATION, f"claims file line {number}: expected name=value")
        claims.append((name.strip().decode("utf-8"), value))
    return claims


def parse_rules(text: str):
    """Adaptive rule file.

    ``start <claim>`` names the first pick. ``if <claim> prefix <hex> then
    next <claim>`` picks the next claim when the named claim was just
    disclosed and its value starts with the given bytes. The first matching
    rule wins; no match ends the run.
    """
    start, rules = None, []
    for number, line in enumerate(text.splitlines(), 1):
        words = line.split()
        if not words or words[0].startswith("#"):
            continue
        if words[0] == "start" and len(words) == 2 and start is None:
            start = words[1]
        elif (len(words) == 7 and words[0] == "if" and words[2] == "prefix"
              and words[4] == "then" and words[5] == "next"):
            try:
                prefix = bytes.fromhex(words[3])
            except ValueError:
                raise CliError(EXIT_VALIDATION, f"rules line {number}: bad hex prefix") from None
            rules.append((words[1], prefix, words[6]))
        else:
            raise CliError(EXIT_VALIDATION, f"rules line {number}: not understood")
    if start is None:
        raise CliError(EXIT_VALIDATION, "rules file has no start line")
    return start, rules


def rules_picker(start, rules, credential_index=0):
    def pick(disclosed):
        if not disclosed:
            return credential_index, start
        last = disclosed[-1]
        for name, prefix, nxt in rules:
            if name == last.name and last.value.startswith(prefix):
                return credential_index, nxt
        return None

    return pick


def _parse_pick(text):
    idx, sep, name = text.partition(":")
    if sep and idx.isdigit():
        return int(idx), name
    return 0, text


def _directory_path(args):
    return args.directory or os.environ.get(DIRECTORY_ENV) or "directory.bin"


def _load_directory(args) -> KeyDirectory:
    return KeyDirectory.load(_directory_path(args))


# -- commands -----------------------------------------------------------

def cmd_keygen(args):
    path = _directory_path(args)
    root_path = args.root or path + ".root"
    if os.path.exists(path):
        directory = KeyDirectory.load(path)
        root = PartyKey.load(root_path)
    else:
        root = PartyKey.generate("root")
        root.save(root_path)
        directory = KeyDirectory.create(root)
    key = PartyKey.generate(args.party_id)
    directory.register(key.party_id, key.public_bytes, root)
    key.save(args.out)
    directory.save(path)
    print(f"registered {key.party_id} in {path}")


def cmd_issue(args):
    directory = _load_directory(args)
    issuer = PartyKey.load(args.key)
    kwargs = {"credential_type": args.type}
    if args.lifetime is not None:
        kwargs["lifetime"] = args.lifetime
    vc, data = issue(issuer, args.subject, read_claims(args.claims), directory=directory, **kwargs)
    _write(args.out + ".vc", vc.to_bytes())
    _write(args.out + ".vcd", data.to_bytes(), 0o600)
    print(f"issued {len(vc.commitments)} claims to {args.subject}: {args.out}.vc")


def cmd_present(args):
    holder = PartyKey.load(args.key)
    inputs = [(VerifiableCredential.from_bytes(_read(base + ".vc")),
               CredentialData.from_bytes(_read(base + ".vcd"))) for base in args.credential]
    vp, d_vp, secret = create_presentation(holder, inputs, args.audience)
    _write(args.out + ".vp", vp.to_bytes())
    _write(args.out + ".dvp", d_vp.to_bytes())
    _write(args.out + ".secret", secret.to_bytes(), 0o600)
    secret.close()
    print(f"presentation for {args.audience}: {args.out}.vp {args.out}.dvp")


def cmd_serve(args):
    directory = _load_directory(args)
    holder = PartyKey.load(args.key)
    base = args.presentation
    vp = VerifiablePresentation.from_bytes(_read(base + ".vp"))
    d_vp = PresentationData.from_bytes(_read(base + ".dvp"))
    secret_path = base + ".secret"
    secret = PresentationSecret.from_bytes(_read(secret_path))
    listener = transport_serve(args.endpoint)
    try:
        address = getattr(listener, "address", None)
        where = f"tcp:{address[0]}:{address[1]}" if address else args.endpoint
        print(f"listening on {where}", flush=True)
        server = HolderServer(listener, holder, directory, vp, d_vp, secret, args.quota)
        sessions = server.serve(max_sessions=args.sessions, accept_timeout=args.accept_timeout)
    finally:
        listener.close()
        secret.close()
        os.remove(secret_path)
    used = secret._pool.used if secret._pool is not None else 0
    print(f"served {len(sessions)} sessions, {used} of {args.quota} evaluations used")


def cmd_disclose(args):
    directory = _load_directory(args)
    verifier = PartyKey.load(args.key)
    if args.rules:
        with open(args.rules) as fh:
            start, rules = parse_rules(fh.read())
    elif not args.pick:
        raise CliError(EXIT_VALIDATION, "give --pick or --rules")
    conn = transport_connect(args.endpoint)
    try:
        session = open_verifier_session(conn, verifier, directory, expected_holder=args.holder)
        try:
            if args.rules:
                disclosed = verifier_disclose_adaptive(
                    session.vp, session.d_vp, rules_picker(start, rules), session.quota,
                    session.channel)
            elif args.mode == "adaptive":
                disclosed = verifier_disclose_adaptive(
                    session.vp, session.d_vp, scripted_picker(map(_parse_pick, args.pick)),
                    session.quota, session.channel)
            else:
                disclosed = verifier_disclose_batch(
                    session.vp, session.d_vp, [_parse_pick(p) for p in args.pick],
                    session.channel, quota=session.quota)
        except QuotaExceeded:
            # refused locally or by the holder; either way end cleanly
            session.close()
            raise
        except KeyError as exc:
            session.close()
            raise CliError(EXIT_VALIDATION, f"no such claim {exc.args[0]!r}") from None
        session.close()
    finally:
        conn.close()
    out = sys.stdout.buffer
    for claim in disclosed:
        out.write(claim.name.encode() + b"=" + claim.value + b"\n")
    out.flush()


def cmd_bench(args):
    if args.config:
        config = harness.BenchConfig.load(args.config)
    elif args.preset == "full":
        config = harness.BenchConfig.full()
    else:
        config = harness.BenchConfig.desk()
    if args.seed is not None:
        config.seed = args.seed
    records = harness.bench_all(config, args.out)
    checks = harness.check_records(records, config.min_ordering_n)
    summary = harness.format_summary(records, checks)
    if args.summary:
        with open(args.summary, "w") as fh:
            fh.write(summary + "\n")
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    print(f"wrote {args.out}")
    if not all(c.passed for c in checks):
        raise CliError(EXIT_VALIDATION, "asserted benchmark property failed")


# -- entry point --------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="oblivsd", description=__doc__.split("\n")[0])
    parser.add_argument("--directory", help=f"key directory file (env {DIRECTORY_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="create a signing key and register it")
    p.add_argument("party_id")
    p.add_argument("--out", required=True, help="key file to write")
    p.add_argument("--root", help="directory root key (default: <directory>.root)")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("issue", help="issue a credential from a claims file")
    p.add_argument("--key", required=True, help="issuer key file")
    p.add_argument("--subject", required=True, help="holder party id")
    p.add_argument("--claims", required=True, help="name=value lines")
    p.add_argument("--out", required=True, help="writes BASE.vc and BASE.vcd")
    p.add_argument("--type", default="VerifiableCredential")
    p.add_argument("--lifetime", type=int, help="validity in seconds")
    p.set_defaults(func=cmd_issue)

    p = sub.add_parser("present", help="build a presentation for one verifier")
    p.add_argument("--key", required=True, help="holder key file")
    p.add_argument("--credential", required=True, action="append", help="BASE of .vc/.vcd")
    p.add_argument("--audience", required=True, help="verifier party id")
    p.add_argument("--out", required=True, help="writes BASE.vp, BASE.dvp, BASE.secret")
    p.set_defaults(func=cmd_present)

    p = sub.add_parser("serve", help="answer disclosure requests for a presentation")
    p.add_argument("--key", required=True, help="holder key file")
    p.add_argument("--presentation", required=True, help="BASE of .vp/.dvp/.secret")
    p.add_argument("--quota", required=True, type=int)
    p.add_argument("--endpoint", required=True, help="tcp:HOST:PORT")
    p.add_argument("--sessions", type=int, default=1, help="conversations to serve")
    p.add_argument("--accept-timeout", type=float, default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("disclose", help="request claims from a serving holder")
    p.add_argument("--key", required=True, help="verifier key file")
    p.add_argument("--endpoint", required=True)
    p.add_argument("--pick", action="append", help="claim name, or INDEX:NAME")
    p.add_argument("--rules", help="adaptive rule file")
    p.add_argument("--mode", choices=("batch", "adaptive"), default="batch")
    p.add_argument("--holder", help="expected holder party id")
    p.set_defaults(func=cmd_disclose)

    p = sub.add_parser("bench", help="run the benchmark harness")
    p.add_argument("--config", help="JSON bench config")
    p.add_argument("--preset", choices=("desk", "full"), default="desk")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="bench.csv")
    p.add_argument("--summary", help="write a plain-text summary here")
    p.set_defaults(func=cmd_bench)
    return parser


def _classify(exc):
    if isinstance(exc, CliError):
        return exc.code, exc.reason
    if isinstance(exc, (DirectoryError, DecodeError)):
        return EXIT_VALIDATION, f"{type(exc).__name__}: {exc}"
    if isinstance(exc, ProtocolError):
        return EXIT_PROTOCOL, f"{type(exc).__name__}: {exc}"
    if isinstance(exc, (DuplicatePartyId, DuplicateClaimName, EmptyClaimSet)):
        return EXIT_VALIDATION, f"{type(exc).__name__}: {exc}"
    if isinstance(exc, OSError):
        return EXIT_IO, f"{type(exc).__name__}: {exc.strerror or exc}"
    if isinstance(exc, (ValueError, KeyError, UnicodeDecodeError)):
        return EXIT_VALIDATION, f"{type(exc).__name__}: {exc}"
    raise exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:
        code, reason = _classify(exc)
        print(f"oblivsd {args.command}: {reason}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
