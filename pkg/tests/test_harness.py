import json
import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oblivsd.harness import (
    BYTES,
    CSV_FIELDS,
    DEVIATIONS,
    MS,
    BenchConfig,
    StatRecord,
    attack_selective_failure,
    bench_all,
    bench_baseline_sd,
    check_records,
    deviate,
    format_summary,
    loglog_slope,
    make_fixture,
    plan_selections,
    random_scenarios,
    read_csv,
    sd_check_response,
    sd_parse_request,
    sd_request_body,
    sd_response_body,
    summarize,
    sweep_vp_commitments,
    trim,
    write_csv,
)
from oblivsd.presentation import validate_presentation

TINY = dict(claim_counts=[2, 8], repetitions=10, scaling_n=8, scaling_quotas=[1, 2, 4, 8])


# -- config ---------------------------------------------------------------

def test_presets():
    full = BenchConfig.full()
    assert full.claim_counts == [2 ** k for k in range(1, 11)]
    assert (full.repetitions, full.trim_fraction, full.claim_value_bytes) == (1000, 0.01, 30)
    assert (full.scaling_n, full.scaling_quotas) == (1024, [1, 16, 256])
    desk = BenchConfig.desk()
    assert max(desk.claim_counts) == 128 and desk.repetitions == 100


@pytest.mark.parametrize("bad", [
    {"trim_fraction": 0.5},
    {"trim_fraction": -0.1},
    {"repetitions": 9},
    {"claim_counts": []},
    {"claim_counts": [0, 2]},
    {"claim_value_bytes": 0},
    {"scaling_quotas": [256], "scaling_n": 128},
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        BenchConfig.desk(**bad)


def test_config_from_json(tmp_path):
    path = tmp_path / "bench.json"
    path.write_text(json.dumps({"preset": "full", "repetitions": 50}))
    config = BenchConfig.load(path)
    assert config.repetitions == 50 and config.scaling_n == 1024
    with pytest.raises(ValueError):
        BenchConfig.from_dict({"preset": "huge"})
    with pytest.raises(ValueError):
        BenchConfig.from_dict({"reps": 10})


# -- statistics -----------------------------------------------------------

def test_trim_drops_injected_extremes():
    rng = random.Random(3)
    samples = [rng.uniform(1, 2) for _ in range(1000)]
    samples[17] = 1e9
    samples[400] = -1e9
    kept, dropped = trim(samples, 0.01)
    assert dropped == 20 and len(kept) == 980
    assert max(kept) < 2 and min(kept) > 1
    rec = summarize("p", 1, MS, samples, 0.01)
    assert rec.outliers == 20 and rec.max < 2


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=300), st.floats(0, 0.49))
def test_trim_counts(samples, fraction):
    kept, dropped = trim(samples, fraction)
    k = int(len(samples) * fraction)
    assert dropped == 2 * k and len(kept) == len(samples) - 2 * k
    assert kept == sorted(samples)[k:len(samples) - k]


def test_summarize_matches_numpy():
    samples = list(np.random.default_rng(0).exponential(size=500))
    rec = summarize("p", 4, MS, samples, 0.0)
    assert rec.p50 == pytest.approx(float(np.median(samples)))
    assert rec.mean == pytest.approx(float(np.mean(samples)))
    assert rec.p25 <= rec.p50 <= rec.p75 <= rec.max


def test_csv_roundtrip_lossless(tmp_path):
    rng = random.Random(5)
    records = [StatRecord(f"phase{i}", 2 ** i, MS if i % 2 else BYTES,
                          rng.random(), rng.random() * 1e6, 1 / 3, 2 / 3, 1e-300, i)
               for i in range(12)]
    path = tmp_path / "out.csv"
    write_csv(records, path)
    assert path.read_text().splitlines()[0] == ",".join(CSV_FIELDS)
    assert read_csv(path) == records


def test_loglog_slope_known():
    ns = [2, 4, 8, 16]
    assert loglog_slope(ns, [3 * n for n in ns]) == pytest.approx(1.0)
    assert loglog_slope(ns, [n * n for n in ns]) == pytest.approx(2.0)
    assert loglog_slope(ns, [5, 5, 5, 5]) == pytest.approx(0.0, abs=1e-12)


# -- baseline encoding ----------------------------------------------------

def test_baseline_roundtrip():
    fx = make_fixture(4, random.Random(6))
    picks = [(0, fx.names[1]), (0, fx.names[3])]
    assert sd_parse_request(sd_request_body(picks)) == picks
    body = sd_response_body(picks, [fx.data])
    assert sd_check_response(body, [fx.vc])
    # a wrong opening fails the commitment check
    value, salt = fx.data.openings[fx.names[1]]
    forged = body.replace(value, bytes([value[0] ^ 1]) + value[1:])
    assert not sd_check_response(forged, [fx.vc])


# -- bench runs -----------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_records():
    return bench_all(BenchConfig.desk(**TINY))


def test_bench_one_record_per_phase_and_n(tiny_records):
    keys = Counter((r.phase, r.n) for r in tiny_records)
    assert all(count == 1 for count in keys.values())
    phases = {p for p, _ in keys}
    for phase in ("vc.create", "vc.verify", "vp.create", "vp.verify", "d_vp.encrypt",
                  "d_vp.decrypt", "oprf.verifier", "oprf.holder", "sd.request",
                  "sd.response", "oprf.query.size", "sd.query.size", "scaling.disclose",
                  "scaling.validate", "claim.hash", "claim.encrypt", "claim.oprf_request"):
        assert phase in phases
    for phase in ("vp.create", "oprf.holder", "sd.query.size"):
        assert {n for p, n in keys if p == phase} == {2, 8}
    assert {n for p, n in keys if p == "scaling.disclose"} == {1, 2, 4, 8}
    assert all(r.metric in (MS, BYTES) for r in tiny_records)
    assert all(r.p25 <= r.p50 <= r.p75 <= r.max for r in tiny_records)


def test_bench_sizes_exact(tiny_records):
    table = {(r.phase, r.n): r.p50 for r in tiny_records}
    for n in (2, 8):
        # header, 32-byte session id, count, then length-prefixed elements
        assert table["oprf.query.size", n] == 8 + 32 + 4 + 34 * n
        assert table["oprf.response.size", n] == 8 + 32 + 4 + 34 * n


def test_bench_writes_csv(tmp_path):
    path = tmp_path / "bench.csv"
    records = bench_all(BenchConfig.desk(**TINY), path, scaling=False)
    assert read_csv(path) == records
    assert not any(r.phase.startswith("scaling") for r in records)


def test_bench_deterministic_sizes():
    config = BenchConfig.desk(**TINY)
    sizes = [[r for r in bench_baseline_sd(config) if r.metric == BYTES] for _ in range(2)]
    assert sizes[0] == sizes[1]
    assert plan_selections(config) == plan_selections(BenchConfig.desk(**TINY))
    other = plan_selections(BenchConfig.desk(**TINY, seed=1))
    assert other != plan_selections(config)


def test_plan_selections_shape():
    config = BenchConfig.desk()
    plan = plan_selections(config)
    assert set(plan) == set(config.scaling_quotas)
    for quota, selection in plan.items():
        assert len(selection) == quota == len(set(selection))


def test_check_records_reports(tiny_records):
    checks = check_records(tiny_records)
    names = {c.name for c in checks}
    assert "d_vp size > vp size" in names
    assert any(c.name.startswith("slope") for c in checks)
    # byte orderings are deterministic, so they hold even at tiny sizes
    by_name = {c.name: c for c in checks}
    assert by_name["d_vp size > vp size"].passed
    assert by_name["OPRF query bytes > baseline query bytes"].passed
    assert by_name["baseline response bytes > OPRF response bytes"].passed
    text = format_summary(tiny_records, checks)
    assert "vp.create" in text and ("PASS" in text or "FAIL" in text)


def test_check_records_detects_violation():
    recs = [StatRecord("d_vp.size", n, BYTES, 1, 1, 1, 1, 1, 0) for n in (8, 16)]
    recs += [StatRecord("vp.size", n, BYTES, 2, 2, 2, 2, 2, 0) for n in (8, 16)]
    recs += [StatRecord("oprf.verifier", n, MS, 1, 1, 1, 1, 1, 0) for n in (8, 16)]
    checks = {c.name: c for c in check_records(recs)}
    assert not checks["d_vp size > vp size"].passed
    steep = [StatRecord("vp.create", n, MS, n ** 2, n ** 2, n ** 2, n ** 2, n ** 2, 0)
             for n in (2, 4, 8)]
    checks = {c.name: c for c in check_records(steep)}
    assert not checks["slope vp.create vs N"].passed


# -- adversarial harness --------------------------------------------------

def test_scenarios_cover_all_cells():
    scenarios = random_scenarios(20, seed=0)
    cells = Counter((s.deviation, s.target_selected) for s in scenarios)
    assert set(cells) == {(d, sel) for d in DEVIATIONS for sel in (True, False)}
    assert all(count == 5 for count in cells.values())
    assert scenarios == random_scenarios(20, seed=0)
    for s in scenarios:
        assert len(set(s.selection)) == len(s.selection) and s.selection


@pytest.mark.parametrize("deviation", DEVIATIONS)
def test_deviated_presentation_still_validates(deviation):
    # the dishonest entry is invisible until its claim is disclosed
    fx = make_fixture(4, random.Random(7))
    d_vp = deviate(fx, fx.names[2], deviation)
    assert validate_presentation(fx.vp, d_vp, fx.directory, audience=fx.verifier.party_id,
                                 now=fx.now)
    assert d_vp.sets[0].entries[fx.names[2]] != fx.d_vp.sets[0].entries[fx.names[2]]
    assert d_vp.sets[0].entries[fx.names[0]] == fx.d_vp.sets[0].entries[fx.names[0]]


def test_selective_failure_scenarios_agree():
    for scenario in random_scenarios(8, seed=3):
        report = attack_selective_failure(scenario)
        assert report.agrees, report
        expected = "selected" if scenario.target_selected else "not-selected"
        assert report.holder_inference == expected


def test_vp_commitment_sweep():
    fx = make_fixture(2, random.Random(8))
    flips, rejected = sweep_vp_commitments(fx)
    assert flips == rejected == 2 * 64
