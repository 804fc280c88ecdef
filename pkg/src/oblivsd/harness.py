"""Benchmarks and adversarial scenarios.

The benchmark half times every protocol phase at the claim, credential and
presentation levels, trims tail outliers, and writes one CSV row per
(phase, n, metric). Only relative properties are asserted: scaling slopes,
size and time orderings, and the OPRF vs plain selective-disclosure gap.

The adversarial half runs the full wire conversation with a deviating holder
(selective failure), with a network adversary flipping bytes or replaying
frames, and with tampered presentation files.

Everything is driven by a seeded :class:`random.Random`, including signing
keys, salts, nonces and blinding scalars. That makes runs reproducible and is
only acceptable because this module never produces credentials for real use.
"""

import csv
import gc
import itertools
import json
import math
import random
import threading
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .credential import issue, verify_credential, verify_opening
from .crypto_core import (
    aead_open,
    aead_seal,
    blind,
    commit,
    derive_key_direct,
    evaluate,
    finalize,
    random_iv,
)
from .disclosure import (
    LocalChannel,
    holder_evaluate,
    holder_open_session,
    scripted_picker,
    verifier_disclose_adaptive,
    verifier_disclose_batch,
)
from .encoding import Reader, Writer
from .errors import AuthFailure, ClaimVerificationFailure, DecodeError, ProtocolError
from .group import SECP256K1
from .identity import KeyDirectory, PartyKey
from .presentation import (
    EncryptedClaim,
    EncryptedClaimSet,
    PresentationData,
    PresentationSecret,
    claim_plaintext,
    create_presentation,
    encrypt_claims,
    split_plaintext,
    validate_presentation,
)
from .wire import (
    HEADER_SIZE,
    Frame,
    HolderServer,
    InterceptingConnection,
    Kind,
    decode_frame,
    encode_elements,
    encode_frame,
    open_verifier_session,
    transport_connect,
    transport_serve,
)

FIXED_NOW = 1_700_000_000
SLOPE_RANGE = (0.9, 1.1)
CSV_FIELDS = ("phase", "n", "metric", "mean", "max", "p25", "p50", "p75", "outliers")
MS = "wall_ms"
BYTES = "bytes"


# -- configuration and statistics ---------------------------------------

def _powers_of_two(hi):
    return [2 ** k for k in range(1, int(math.log2(hi)) + 1)]


@dataclass
class BenchConfig:
    claim_counts: list = field(default_factory=lambda: _powers_of_two(1024))
    repetitions: int = 1000
    trim_fraction: float = 0.01
    claim_value_bytes: int = 30
    seed: int = 0
    # disclosure scaling: fixed claim count, varying selection size
    scaling_n: int = 1024
    scaling_quotas: list = field(default_factory=lambda: [1, 16, 256])
    # orderings are asserted from this claim count upwards
    min_ordering_n: int = 8

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0 <= self.trim_fraction < 0.5:
            raise ValueError("trim_fraction must be in [0, 0.5)")
        if self.repetitions < 10:
            raise ValueError("repetitions must be at least 10")
        if not self.claim_counts or min(self.claim_counts) < 1:
            raise ValueError("claim_counts must be positive")
        if self.claim_value_bytes < 1:
            raise ValueError("claim_value_bytes must be positive")
        if not self.scaling_quotas or max(self.scaling_quotas) > self.scaling_n:
            raise ValueError("scaling quotas must not exceed scaling_n")

    @classmethod
    def full(cls, **overrides):
        return cls(**overrides)

    @classmethod
    def desk(cls, **overrides):
        base = dict(claim_counts=_powers_of_two(128), repetitions=100, scaling_n=128,
                    scaling_quotas=[1, 4, 16, 64, 128])
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchConfig":
        doc = dict(doc)
        preset = doc.pop("preset", "desk")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown bench config keys: {sorted(unknown)}")
        if preset == "desk":
            return cls.desk(**doc)
        if preset == "full":
            return cls.full(**doc)
        raise ValueError(f"unknown preset {preset!r}")

    @classmethod
    def load(cls, path) -> "BenchConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class StatRecord:
    phase: str
    n: int
    metric: str
    mean: float
    max: float
    p25: float
    p50: float
    p75: float
    outliers: int


def trim(samples, fraction):
    """Drop ``floor(len * fraction)`` samples from each tail.

    Returns ``(kept, dropped_count)``.
    """
    ordered = sorted(samples)
    k = int(len(ordered) * fraction)
    return ordered[k:len(ordered) - k], 2 * k


def summarize(phase, n, metric, samples, fraction=0.0) -> StatRecord:
    kept, dropped = trim(samples, fraction)
    arr = np.asarray(kept, dtype=float)
    p25, p50, p75 = np.percentile(arr, [25, 50, 75])
    return StatRecord(phase, n, metric, float(arr.mean()), float(arr.max()),
                      float(p25), float(p50), float(p75), dropped)


def write_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for rec in records:
            writer.writerow([getattr(rec, name) for name in CSV_FIELDS])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [StatRecord(r["phase"], int(r["n"]), r["metric"], float(r["mean"]),
                       float(r["max"]), float(r["p25"]), float(r["p50"]),
                       float(r["p75"]), int(r["outliers"])) for r in rows]


def _timer(phase, n, fn, setup=None):
    """A timing task: each call returns ``{(phase, n): ms}``. ``setup`` runs
    untimed and its result is passed to ``fn``."""
    def sample():
        arg = setup() if setup is not None else None
        t0 = time.perf_counter_ns()
        fn(arg)
        return {(phase, n): (time.perf_counter_ns() - t0) / 1e6}
    return sample


def _run_tasks(tasks, reps, rng):
    """Run every task ``reps`` times, round-robin in a freshly shuffled order
    each round, so slow drift on the host lands on every point alike."""
    samples = {}
    order = list(tasks)
    enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(reps):
            rng.shuffle(order)
            for sample in order:
                for key, ms in sample().items():
                    samples.setdefault(key, []).append(ms)
            gc.collect()
    finally:
        if enabled:
            gc.enable()
    return samples


def _summaries(samples, fraction):
    return [summarize(phase, n, MS, samples[phase, n], fraction)
            for phase, n in sorted(samples, key=lambda k: (k[1], k[0]))]


def _size(phase, n, size):
    return StatRecord(phase, n, BYTES, size, size, size, size, size, 0)


# -- fixtures -----------------------------------------------------------

@dataclass
class Fixture:
    """One issuer, holder and verifier, a credential of ``n`` claims and an
    honest presentation of it addressed to the verifier."""

    directory: KeyDirectory
    issuer: PartyKey
    holder: PartyKey
    verifier: PartyKey
    claims: list
    vc: object
    data: object
    vp: object
    d_vp: object
    secret: PresentationSecret
    now: int = FIXED_NOW

    @property
    def names(self):
        return sorted(self.vc.commitments)

    def fresh_secret(self) -> PresentationSecret:
        """Same key, fresh quota pool."""
        return PresentationSecret(self.secret.msk, self.secret.nonce)

    def claim_value(self, name) -> bytes:
        return self.data.openings[name][0]


def claim_value(rng, size) -> bytes:
    """Random hex string of ``size`` ASCII characters."""
    return rng.randbytes((size + 1) // 2).hex()[:size].encode()


def make_fixture(n, rng, *, value_bytes=30, now=FIXED_NOW) -> Fixture:
    root = PartyKey.from_seed("root", rng.randbytes(32))
    issuer = PartyKey.from_seed("issuer", rng.randbytes(32))
    holder = PartyKey.from_seed("holder", rng.randbytes(32))
    verifier = PartyKey.from_seed("verifier", rng.randbytes(32))
    directory = KeyDirectory.create(root)
    for key in (issuer, holder, verifier):
        directory.register(key.party_id, key.public_bytes, root)
    claims = [(f"claim_{i:04d}", claim_value(rng, value_bytes)) for i in range(n)]
    vc, data = issue(issuer, holder.party_id, claims, issued_at=now - 60, rng=rng,
                     directory=directory)
    vp, d_vp, secret = create_presentation(holder, [(vc, data)], verifier.party_id, rng,
                                           created_at=now)
    return Fixture(directory, issuer, holder, verifier, claims, vc, data, vp, d_vp, secret, now)


def _rng(config, *tags):
    return random.Random(":".join(str(t) for t in (config.seed, *tags)))


# -- benchmark phases ---------------------------------------------------

def _claim_level_tasks(config):
    rng = _rng(config, "claim")
    fx = make_fixture(1, rng, value_bytes=config.claim_value_bytes)
    name = fx.names[0]
    value, salt = fx.data.openings[name]
    x = fx.vc.commitments[name]
    msk = fx.secret.msk
    plaintext = claim_plaintext(value, salt)
    box = fx.d_vp.sets[0].entries[name].box
    r, a = blind(x, rng)
    b = evaluate(msk, a)

    def decrypt(_):
        key = finalize(x, b, r)
        v, s = split_plaintext(aead_open(key, box, x))
        verify_opening(x, v, s)

    def open_session():
        return holder_open_session(fx.fresh_secret(), 1, fx.verifier.party_id,
                                   fx.vp.metadata.nonce, b"\x00" * 32)

    request = [SECP256K1.encode(a)]
    return [
        _timer("claim.hash", 1, lambda _: commit(value, salt)),
        _timer("claim.verify", 1, lambda _: verify_opening(x, value, salt)),
        _timer("claim.encrypt", 1,
               lambda _: aead_seal(derive_key_direct(msk, x), random_iv(rng), plaintext, x)),
        _timer("claim.decrypt", 1, decrypt),
        _timer("claim.oprf_request", 1, lambda _: SECP256K1.encode(blind(x, rng)[1])),
        _timer("claim.oprf_response", 1, lambda s: holder_evaluate(s, request), open_session),
    ]


def _credential_tasks(n, fx, rng):
    tasks = [
        _timer("vc.create", n, lambda _: issue(fx.issuer, fx.holder.party_id, fx.claims,
                                               issued_at=fx.now - 60, rng=rng)),
        _timer("vc.verify", n, lambda _: verify_credential(fx.vc, fx.directory, fx.now)),
    ]
    sizes = [
        _size("vc.size", n, len(fx.vc.to_bytes())),
        _size("vc_data.size", n, len(fx.data.to_bytes())),
    ]
    return tasks, sizes


def _presentation_tasks(n, fx, rng):
    inputs = [(fx.vc, fx.data)]

    entries = fx.d_vp.sets[0].entries
    blinded = []
    for name in fx.names:
        x = fx.vc.commitments[name]
        r, a = blind(x, rng)
        blinded.append((x, r, evaluate(fx.secret.msk, a), entries[name].box))

    def decrypt(_):
        for x, r, b, box in blinded:
            v, s = split_plaintext(aead_open(finalize(x, b, r), box, x))
            verify_opening(x, v, s)

    tasks = [
        _timer("vp.create", n, lambda _: create_presentation(
            fx.holder, inputs, fx.verifier.party_id, rng, created_at=fx.now)),
        _timer("vp.verify", n, lambda _: validate_presentation(
            fx.vp, fx.d_vp, fx.directory, audience=fx.verifier.party_id, now=fx.now)),
        _timer("d_vp.encrypt", n, lambda _: encrypt_claims(fx.secret.msk, fx.vc, fx.data, rng)),
        _timer("d_vp.decrypt", n, decrypt),
    ]
    sizes = [
        _size("vp.size", n, len(fx.vp.to_bytes())),
        _size("d_vp.size", n, len(fx.d_vp.to_bytes())),
    ]
    return tasks, sizes


def _oprf_tasks(n, fx, rng):
    """Full-disclosure worst case: every claim goes through the OPRF."""
    group = SECP256K1
    xs = [fx.vc.commitments[name] for name in fx.names]

    def sample():
        session = holder_open_session(fx.fresh_secret(), n, fx.verifier.party_id,
                                      fx.vp.metadata.nonce, b"\x00" * 32)
        t0 = time.perf_counter_ns()
        prepared = [blind(x, rng) for x in xs]
        request = [group.encode(a) for _, a in prepared]
        t1 = time.perf_counter_ns()
        response = holder_evaluate(session, request)
        t2 = time.perf_counter_ns()
        for x, (r, _), b in zip(xs, prepared, response):
            finalize(x, group.decode(b), r)
        t3 = time.perf_counter_ns()
        return {
            ("oprf.request", n): (t1 - t0) / 1e6,
            ("oprf.holder", n): (t2 - t1) / 1e6,
            ("oprf.finalize", n): (t3 - t2) / 1e6,
            ("oprf.verifier", n): (t1 - t0 + t3 - t2) / 1e6,
        }

    request = [group.encode(blind(x, rng)[1]) for x in xs]
    response = holder_evaluate(holder_open_session(
        fx.fresh_secret(), n, fx.verifier.party_id, fx.vp.metadata.nonce, b"\x00" * 32), request)
    sid = bytes(32)
    frame = encode_frame(Frame(Kind.OPRF_REQUEST, sid, encode_elements(request)))
    reply = encode_frame(Frame(Kind.OPRF_RESPONSE, sid, encode_elements(response)))
    return [sample], [_size("oprf.query.size", n, len(frame)),
                      _size("oprf.response.size", n, len(reply))]


# plain selective disclosure: the verifier names the claims, the holder
# answers with the openings, the verifier checks them against the commitments

def sd_request_body(picks) -> bytes:
    w = Writer().u32(len(picks))
    for idx, name in picks:
        w.u32(idx).text(name)
    return w.getvalue()


def sd_parse_request(body: bytes):
    r = Reader(body)
    picks = [(r.u32(), r.text()) for _ in range(r.u32())]
    r.done()
    return picks


def sd_response_body(picks, data_sets) -> bytes:
    w = Writer().u32(len(picks))
    for idx, name in picks:
        value, salt = data_sets[idx].openings[name]
        w.u32(idx).text(name).blob(value).short(salt)
    return w.getvalue()


def sd_check_response(body: bytes, vcs) -> bool:
    r = Reader(body)
    ok = True
    for _ in range(r.u32()):
        idx, name, value, salt = r.u32(), r.text(), r.blob(), r.short()
        ok &= verify_opening(vcs[idx].commitments[name], value, salt)
    r.done()
    return ok


def _sd_frame(body: bytes) -> bytes:
    # same header and session id as an OPRF frame so that only bodies differ
    return encode_frame(Frame(Kind.OPRF_REQUEST, bytes(32), body))


def _baseline_tasks(n, fx):
    picks = [(0, name) for name in fx.names]
    data_sets, vcs = [fx.data], [fx.vc]

    def request(_):
        sd_parse_request(_sd_frame(sd_request_body(picks))[HEADER_SIZE + 32:])

    def response(_):
        wanted = sd_parse_request(sd_request_body(picks))
        sd_check_response(_sd_frame(sd_response_body(wanted, data_sets))[HEADER_SIZE + 32:], vcs)

    tasks = [_timer("sd.request", n, request), _timer("sd.response", n, response)]
    sizes = [
        _size("sd.query.size", n, len(_sd_frame(sd_request_body(picks)))),
        _size("sd.response.size", n, len(_sd_frame(sd_response_body(picks, data_sets)))),
    ]
    return tasks, sizes


def _fixture(config, n):
    return make_fixture(n, _rng(config, "fixture", n), value_bytes=config.claim_value_bytes)


def bench_baseline_sd(config):
    tasks, sizes = [], []
    for n in config.claim_counts:
        t, s = _baseline_tasks(n, _fixture(config, n))
        tasks += t
        sizes += s
    samples = _run_tasks(tasks, config.repetitions, _rng(config, "order", "sd"))
    return _summaries(samples, config.trim_fraction) + sizes


def plan_selections(config):
    """Selections used by the disclosure scaling run, one per quota."""
    rng = _rng(config, "selection")
    names = [f"claim_{i:04d}" for i in range(config.scaling_n)]
    return {q: [(0, name) for name in rng.sample(names, q)] for q in config.scaling_quotas}


def bench_disclosure_scaling(config):
    """Disclosure time against selection size at a fixed claim count, with
    presentation validation timed alongside as the flat reference."""
    fx = make_fixture(config.scaling_n, _rng(config, "fixture", "scaling"),
                      value_bytes=config.claim_value_bytes)
    rng = _rng(config, "scaling")
    tasks = []
    for quota, selection in plan_selections(config).items():
        def open_channel(quota=quota):
            return LocalChannel(holder_open_session(
                fx.fresh_secret(), quota, fx.verifier.party_id, fx.vp.metadata.nonce,
                b"\x00" * 32))

        tasks.append(_timer("scaling.disclose", quota,
                            lambda ch, sel=selection, q=quota: verifier_disclose_batch(
                                fx.vp, fx.d_vp, sel, ch, rng, quota=q), open_channel))
        tasks.append(_timer("scaling.validate", quota, lambda _: validate_presentation(
            fx.vp, fx.d_vp, fx.directory, audience=fx.verifier.party_id, now=fx.now)))
    samples = _run_tasks(tasks, config.repetitions, _rng(config, "order", "scaling"))
    return _summaries(samples, config.trim_fraction)


def bench_all(config, csv_path=None, *, scaling=True):
    """Every phase at every claim count; optionally writes the CSV.

    All (phase, n) points are sampled round-robin rather than one after the
    other, so the fitted slopes compare points measured under the same load.
    """
    config.validate()
    tasks, sizes = _claim_level_tasks(config), []
    for n in config.claim_counts:
        fx = _fixture(config, n)
        rng = _rng(config, "bench", n)
        for t, s in (_credential_tasks(n, fx, rng), _presentation_tasks(n, fx, rng),
                     _oprf_tasks(n, fx, rng), _baseline_tasks(n, fx)):
            tasks += t
            sizes += s
    samples = _run_tasks(tasks, config.repetitions, _rng(config, "order"))
    records = _summaries(samples, config.trim_fraction) + sizes
    if scaling:
        records += bench_disclosure_scaling(config)
    if csv_path is not None:
        write_csv(records, csv_path)
    return records


# -- asserted properties ------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def loglog_slope(ns, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(ys, float)), 1)[0])


def _series(records, phase, stat="p50"):
    rows = sorted((r for r in records if r.phase == phase), key=lambda r: r.n)
    return [r.n for r in rows], [getattr(r, stat) for r in rows]


def _by(records):
    return {(r.phase, r.n): r for r in records}


def check_records(records, min_n=8):
    """Scaling slopes and orderings. Times use trimmed medians."""
    table = _by(records)
    checks = []

    def slope_check(phase, label):
        ns, ys = _series(records, phase)
        if len(ns) < 2:
            return
        s = loglog_slope(ns, ys)
        lo, hi = SLOPE_RANGE
        checks.append(Check(f"slope {label}", lo <= s <= hi, f"log-log slope {s:.3f}"))

    slope_check("vp.create", "vp.create vs N")
    slope_check("d_vp.encrypt", "d_vp.encrypt vs N")
    slope_check("scaling.disclose", "disclosure vs N_o")

    _, flat = _series(records, "scaling.validate")
    if flat:
        spread = max(flat) / min(flat)
        checks.append(Check("flat validate vs N_o", spread <= 2.0, f"max/min {spread:.2f}"))

    ns = sorted({r.n for r in records if r.phase == "oprf.verifier" and r.n >= min_n})

    def ordering(label, bigger, smaller, stat="p50"):
        bad = [n for n in ns
               if (bigger, n) in table and (smaller, n) in table
               and not getattr(table[bigger, n], stat) > getattr(table[smaller, n], stat)]
        checks.append(Check(label, bool(ns) and not bad,
                            "holds at n=" + ",".join(map(str, ns)) if not bad
                            else "fails at n=" + ",".join(map(str, bad))))

    ordering("verifier OPRF compute > holder OPRF compute", "oprf.verifier", "oprf.holder")
    ordering("d_vp size > vp size", "d_vp.size", "vp.size")
    ordering("OPRF query bytes > baseline query bytes", "oprf.query.size", "sd.query.size")
    ordering("baseline response bytes > OPRF response bytes", "sd.response.size",
             "oprf.response.size")

    ratios = []
    for n in ns:
        try:
            oprf = table["oprf.verifier", n].p50 + table["oprf.holder", n].p50
            sd = table["sd.request", n].p50 + table["sd.response", n].p50
        except KeyError:
            continue
        ratios.append((n, oprf / sd))
    if ratios:
        worst = min(r for _, r in ratios)
        checks.append(Check("OPRF time / baseline time > 10", worst > 10,
                            f"smallest ratio {worst:.1f}"))
    return checks


def format_summary(records, checks) -> str:
    lines = [f"{'phase':<22}{'n':>6}  {'metric':<8}{'mean':>12}{'p50':>12}{'max':>12}{'out':>5}"]
    for r in records:
        lines.append(f"{r.phase:<22}{r.n:>6}  {r.metric:<8}{r.mean:>12.4f}{r.p50:>12.4f}"
                     f"{r.max:>12.4f}{r.outliers:>5}")
    lines.append("")
    for c in checks:
        lines.append(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    return "\n".join(lines)


# -- running a wire conversation ----------------------------------------

_endpoint_counter = itertools.count()


@dataclass
class Conversation:
    """What each side saw in one holder/verifier conversation."""

    disclosed: list = None
    error: Exception = None
    holder_failures: int = 0
    holder_session: object = None
    verifier_dropped: int = 0
    evaluations: int = 0

    @property
    def completed(self) -> bool:
        return self.error is None

    @property
    def holder_detected(self) -> bool:
        s = self.holder_session
        return self.holder_failures > 0 or (s is not None and (s.rejected or s.dropped))


def run_conversation(fx, d_vp, selection, *, mode="batch", quota=None, on_send=None,
                     on_recv=None, prepare=None, timeout=5.0, secret=None):
    """One full conversation over an in-process transport.

    ``on_send``/``on_recv`` intercept the verifier's outgoing and incoming
    raw frames. ``prepare(conn)`` runs before the handshake (to queue
    injected frames). On a claim failure the verifier aborts: it drops the
    connection without sending CLOSE.
    """
    quota = len(selection) if quota is None else quota
    secret = fx.fresh_secret() if secret is None else secret
    endpoint = f"loop:harness-{next(_endpoint_counter)}"
    listener = transport_serve(endpoint)
    server = HolderServer(listener, fx.holder, fx.directory, fx.vp, d_vp, secret, quota)
    thread = threading.Thread(target=server.serve, kwargs={"max_sessions": 1}, daemon=True)
    thread.start()
    out = Conversation()
    conn = InterceptingConnection(transport_connect(endpoint), on_send, on_recv)
    conn.timeout = timeout
    try:
        if prepare is not None:
            prepare(conn)
        session = open_verifier_session(conn, fx.verifier, fx.directory, now=fx.now,
                                        expected_holder=fx.holder.party_id)
        if mode == "batch":
            out.disclosed = verifier_disclose_batch(session.vp, session.d_vp, selection,
                                                    session.channel, quota=session.quota)
        else:
            out.disclosed = verifier_disclose_adaptive(session.vp, session.d_vp,
                                                       scripted_picker(selection),
                                                       session.quota, session.channel)
        out.verifier_dropped = session.channel.dropped
        session.close()
    except ProtocolError as exc:
        out.error = exc
    finally:
        conn.close()
        thread.join(timeout + 5)
        listener.close()
    out.holder_failures = server.failures
    if server.sessions:
        out.holder_session = server.sessions[0]
        out.evaluations = server.sessions[0].used
    return out


# -- selective failure --------------------------------------------------

MODIFIED_VALUE = "modified-value"
MANIPULATED_INPUT = "manipulated-input"
DEVIATIONS = (MODIFIED_VALUE, MANIPULATED_INPUT)

# (deviation, target selected) -> verifier outcome
PREDICTED_OUTCOME = {
    (MODIFIED_VALUE, True): "abort",
    (MODIFIED_VALUE, False): "complete",
    (MANIPULATED_INPUT, True): "abort",
    (MANIPULATED_INPUT, False): "complete",
}


@dataclass(frozen=True)
class SelectiveFailureScenario:
    n_claims: int
    target: str
    selection: tuple  # claim names, in request order
    deviation: str
    mode: str = "batch"
    seed: int = 0

    @property
    def target_selected(self) -> bool:
        return self.target in self.selection


@dataclass(frozen=True)
class SelectiveFailureReport:
    scenario: SelectiveFailureScenario
    verifier_outcome: str  # "complete" or "abort"
    verifier_error: str
    holder_view: str  # how the conversation ended for the holder
    holder_inference: str  # "selected" or "not-selected"
    evaluations: int
    predicted_outcome: str
    agrees: bool


def deviate(fx, target, deviation):
    """A D_VP where the entry for ``target`` was built dishonestly."""
    x = fx.vc.commitments[target]
    value, salt = fx.data.openings[target]
    if deviation == MODIFIED_VALUE:
        # honest key, different value; the commitment stays the issuer's
        key = derive_key_direct(fx.secret.msk, x)
        plaintext = claim_plaintext(bytes(b ^ 0x01 for b in value) or b"\x01", salt)
    elif deviation == MANIPULATED_INPUT:
        # honest value under a key derived from a different OPRF input
        key = derive_key_direct(fx.secret.msk, x[:-1] + bytes([x[-1] ^ 0x01]))
        plaintext = claim_plaintext(value, salt)
    else:
        raise ValueError(f"unknown deviation {deviation!r}")
    d_vp = PresentationData([EncryptedClaimSet(dict(s.entries)) for s in fx.d_vp.sets])
    d_vp.sets[0].entries[target] = EncryptedClaim(x, aead_seal(key, random_iv(), plaintext, x))
    return d_vp


def attack_selective_failure(scenario: SelectiveFailureScenario) -> SelectiveFailureReport:
    rng = random.Random(scenario.seed)
    fx = make_fixture(scenario.n_claims, rng)
    d_vp = deviate(fx, scenario.target, scenario.deviation)
    selection = [(0, name) for name in scenario.selection]
    conv = run_conversation(fx, d_vp, selection, mode=scenario.mode)

    outcome = "complete" if conv.completed else "abort"
    ending = conv.holder_session.ending if conv.holder_session else "failed"
    # the holder's whole view is how the session ended and how many
    # evaluations were asked for; an abort after a dishonest entry means the
    # verifier must have asked for it
    inference = "selected" if ending != "close" else "not-selected"
    predicted = PREDICTED_OUTCOME[scenario.deviation, scenario.target_selected]
    agrees = (
        outcome == predicted
        and (inference == "selected") == scenario.target_selected
        and (conv.completed or isinstance(conv.error, ClaimVerificationFailure))
    )
    if conv.completed:
        agrees = agrees and all(c.value == fx.claim_value(c.name) for c in conv.disclosed)
    if scenario.mode == "adaptive" and not conv.completed:
        # abort-on-failure: nothing is requested after the failing pick
        agrees = agrees and conv.evaluations == scenario.selection.index(scenario.target) + 1
    return SelectiveFailureReport(scenario, outcome,
                                  type(conv.error).__name__ if conv.error else "",
                                  ending, inference, conv.evaluations, predicted, agrees)


def random_scenarios(count=20, seed=0):
    """Randomized scenarios covering every (deviation, selected) cell."""
    rng = random.Random(f"scenarios:{seed}")
    out = []
    for i in range(count):
        deviation = DEVIATIONS[i % 2]
        selected = (i // 2) % 2 == 0
        n = rng.randint(3, 12)
        names = [f"claim_{k:04d}" for k in range(n)]
        target = rng.choice(names)
        others = [name for name in names if name != target]
        size = rng.randint(1, min(4, n - 1))
        picks = rng.sample(others, size - 1 if selected else size)
        if selected:
            picks.insert(rng.randint(0, len(picks)), target)
        out.append(SelectiveFailureScenario(n, target, tuple(picks), deviation,
                                            rng.choice(("batch", "adaptive")),
                                            rng.randrange(2 ** 32)))
    return out


# -- tamper and replay --------------------------------------------------

@dataclass
class TamperReport:
    dvp_flips: int = 0
    dvp_detected: int = 0
    frame_flips: int = 0
    frame_detected: int = 0
    frame_undetected: list = field(default_factory=list)
    vp_flips: int = 0
    vp_rejected: int = 0
    replays: int = 0
    replays_rejected: int = 0

    @property
    def all_detected(self) -> bool:
        return (self.dvp_detected == self.dvp_flips and self.frame_detected == self.frame_flips
                and self.vp_rejected == self.vp_flips
                and self.replays_rejected == self.replays)

    def as_dict(self) -> dict:
        return asdict(self)


def _flip(data: bytes, pos: int, delta: int) -> bytes:
    return data[:pos] + bytes([data[pos] ^ delta]) + data[pos + 1:]


def _opens(key, box, aad, commitment) -> bool:
    try:
        value, salt = split_plaintext(aead_open(key, box, aad))
    except (AuthFailure, DecodeError):
        return False
    return verify_opening(commitment, value, salt)


def sweep_dvp(fx, deltas=range(1, 256)):
    """Flip every byte of every iv, ciphertext, tag and associated-data
    digest in the D_VP, with every XOR delta. Returns ``(flips, detected)``."""
    flips = detected = 0
    for name, entry in fx.d_vp.sets[0].entries.items():
        x = fx.vc.commitments[name]
        key = derive_key_direct(fx.secret.msk, x)
        box = entry.box
        assert _opens(key, box, entry.digest, x)
        for region in ("iv", "ciphertext", "tag", "aad"):
            original = entry.digest if region == "aad" else getattr(box, region)
            for pos in range(len(original)):
                for delta in deltas:
                    changed = _flip(original, pos, delta)
                    if region == "aad":
                        ok = _opens(key, box, changed, x)
                    else:
                        fields_ = {"iv": box.iv, "ciphertext": box.ciphertext, "tag": box.tag}
                        fields_[region] = changed
                        ok = _opens(key, box.__class__(**fields_), entry.digest, x)
                    flips += 1
                    detected += not ok
    return flips, detected


def _frame_flipper(target_index, pos, delta):
    state = {"seen": 0}

    def hook(data):
        i = state["seen"]
        state["seen"] += 1
        if i == target_index:
            return _flip(data, pos, delta)
        return data

    return hook


def _capture_frames(fx, selection):
    sent, received = [], []

    def on_send(data):
        sent.append(data)
        return data

    def on_recv(data):
        received.append(data)
        return data

    conv = run_conversation(fx, fx.d_vp, selection, on_send=on_send, on_recv=on_recv)
    if not conv.completed:
        raise RuntimeError("honest conversation failed")
    return sent, received


def sweep_frames(fx, selection, *, delta=0x01, timeout=0.25, report=None):
    """Flip every byte of every frame of an honest conversation, one flip
    per conversation, in both directions.

    A flip counts as detected when either side raised or refused something:
    the verifier errored, the holder failed the conversation, or the holder
    rejected or dropped a frame.
    """
    report = TamperReport() if report is None else report
    sent, received = _capture_frames(fx, selection)
    expected = {name: fx.claim_value(name) for _, name in selection}
    for direction, frames in (("send", sent), ("recv", received)):
        for index, frame in enumerate(frames):
            for pos in range(len(frame)):
                hook = _frame_flipper(index, pos, delta)
                conv = run_conversation(fx, fx.d_vp, selection, timeout=timeout,
                                        **{f"on_{direction}": hook})
                report.frame_flips += 1
                silent = conv.completed and not conv.holder_detected
                if conv.completed:
                    silent = silent or any(c.value != expected[c.name] for c in conv.disclosed)
                if silent:
                    report.frame_undetected.append((direction, index, pos))
                else:
                    report.frame_detected += 1
    return report


def sweep_vp_commitments(fx, delta=0x01):
    """Flip each byte of each commitment in the offered VP."""
    flips = rejected = 0
    vc = fx.vp.credentials[0]
    for name in sorted(vc.commitments):
        original = vc.commitments[name]
        for pos in range(len(original)):
            vc.commitments[name] = _flip(original, pos, delta)
            try:
                verdict = validate_presentation(fx.vp, fx.d_vp, fx.directory,
                                                audience=fx.verifier.party_id, now=fx.now)
            finally:
                vc.commitments[name] = original
            flips += 1
            rejected += not verdict
    return flips, rejected


def replay_trials(fx, selection, rounds=5):
    """Cross-session replay in both directions plus handshake replay.

    Returns ``(attempts, rejected)``. A response replayed to the verifier
    must be dropped as foreign; a request replayed to the holder must be
    dropped without spending quota; replayed handshake frames must fail
    authentication.
    """
    attempts = rejected = 0
    for _ in range(rounds):
        old_sent, old_received = _capture_frames(fx, selection)
        old_request = next(f for f in old_sent if decode_frame(f).kind is Kind.OPRF_REQUEST)
        old_response = next(f for f in old_received
                            if decode_frame(f).kind is Kind.OPRF_RESPONSE)

        # old response queued ahead of the genuine one
        holder = {}

        def to_verifier(data, holder=holder):
            if decode_frame(data).kind is Kind.OPRF_REQUEST:
                holder["conn"].injected.append(old_response)
            return data

        conv = run_conversation(fx, fx.d_vp, selection, on_send=to_verifier,
                                prepare=lambda conn, holder=holder: holder.update(conn=conn))
        attempts += 1
        rejected += conv.completed and conv.verifier_dropped == 1

        # old request sent ahead of the genuine one
        def to_holder(data, holder=holder):
            if decode_frame(data).kind is Kind.OPRF_REQUEST:
                holder["conn"].inner.send_raw(old_request)
            return data

        conv = run_conversation(fx, fx.d_vp, selection, on_send=to_holder,
                                prepare=lambda conn, holder=holder: holder.update(conn=conn))
        attempts += 1
        s = conv.holder_session
        rejected += conv.completed and s is not None and s.dropped == 1 and s.used == len(selection)

        # old HELLO/AUTH replayed against a fresh holder nonce
        attempts += 1
        rejected += _replay_handshake(fx, old_sent[0], old_sent[1])
    return attempts, rejected


def _replay_handshake(fx, hello, auth) -> bool:
    endpoint = f"loop:harness-{next(_endpoint_counter)}"
    listener = transport_serve(endpoint)
    server = HolderServer(listener, fx.holder, fx.directory, fx.vp, fx.d_vp,
                          fx.fresh_secret(), 1)
    thread = threading.Thread(target=server.serve, kwargs={"max_sessions": 1}, daemon=True)
    thread.start()
    conn = transport_connect(endpoint)
    try:
        conn.send_raw(hello)
        conn.recv_raw(5.0)
        conn.send_raw(auth)
        try:
            frame = decode_frame(conn.recv_raw(5.0))
            offered = frame.kind is Kind.OFFER
        except ProtocolError:
            offered = False
    finally:
        conn.close()
        thread.join(10)
        listener.close()
    return not offered and server.failures == 1


def attack_tamper_and_replay(seed=0, *, n_claims=4, selection_size=2, frame_delta=0x01,
                             dvp_deltas=range(1, 256), timeout=0.25, replay_rounds=5):
    fx = make_fixture(n_claims, random.Random(f"tamper:{seed}"))
    selection = [(0, name) for name in fx.names[:selection_size]]
    report = TamperReport()
    report.dvp_flips, report.dvp_detected = sweep_dvp(fx, dvp_deltas)
    sweep_frames(fx, selection, delta=frame_delta, timeout=timeout, report=report)
    report.vp_flips, report.vp_rejected = sweep_vp_commitments(fx)
    report.replays, report.replays_rejected = replay_trials(fx, selection, replay_rounds)
    return report
