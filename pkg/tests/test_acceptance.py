"""End-to-end acceptance checks, one test per criterion, each at its stated tolerance."""

import itertools
import math
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from conftest import record_acceptance
from dacglitch import (
    Basis,
    TransitionModel,
    binary_basis,
    canonical_table,
    glitch_error,
    published_basis,
    segmented_basis,
    thermometer_basis,
)
from dacglitch.core import as_mask, masks_to_bit_matrix
from dacglitch.mappers import (
    TableMapper,
    canonical_mapping,
    greedy_map,
    make_mapper,
    mapping_cost,
    memoryless_solve,
    viterbi_map,
)
from dacglitch.optimizer import AnnealConfig, anneal, objective, random_basis
from dacglitch.representations import (
    enumerate_reps,
    metric_complete,
    metric_monte_carlo,
    rep_counts,
)
from dacglitch.simulator import (
    EdgeModel,
    StimulusConfig,
    ideal_zoh,
    reference_zoh,
    run_experiment,
    synthesize,
)

pytestmark = pytest.mark.slow

ROW_127 = "100001001110"
ROW_128 = "010001001110"
FIG6_TAUS = (0.01, 0.02, 0.05, 0.1)


def test_criterion_1_worked_transition():
    t0 = time.perf_counter()
    opt = published_basis(12)
    published = glitch_error(as_mask(ROW_127, opt), as_mask(ROW_128, opt), opt)
    seg = segmented_basis(3, 5)
    canon = canonical_table(seg)
    seg_err = glitch_error(canon[127], canon[128], seg)
    elapsed = time.perf_counter() - t0
    # coordinate descent has many local optima; the solved table is reported, not asserted
    derived = memoryless_solve(opt, restarts=1)
    derived_err = glitch_error(derived[127], derived[128], opt)
    ok = (published == 3 and seg.length == 12
          and seg.weights[:5] == (1, 2, 4, 8, 16) and set(seg.weights[5:]) == {32}
          and seg_err == 63 and elapsed < 1.0)
    record_acceptance(1, ok, f"optimized L=12 published rows: {published} (solved table: {derived_err}), "
                             f"segmented 12-switch: {seg_err}, {elapsed:.3f} s")
    assert ok


@pytest.mark.parametrize("length", [9, 10, 11, 12, 13])
def test_criterion_2_annealing_quality(length):
    cfg = AnnealConfig(length=length, bit_depth=8, restarts=100, iterations=1000, seed=0)
    res = anneal(cfg)
    ref = objective(published_basis(length))
    ratio = res.objective / ref
    valid = res.basis.total == 255 and res.basis.covers and res.basis.length == length
    ok = valid and ratio <= 1.05
    record_acceptance(2, ok, f"L={length}: {list(res.basis.weights)} objective ratio "
                             f"{ratio:.4f} (limit 1.05), {res.wall_time:.1f} s")
    assert ok


def test_criterion_3_metric_crossovers():
    model = TransitionModel.uniform(8)
    seg = segmented_basis(4, 4)
    seg_metric = metric_complete(seg, canonical_mapping(seg), model).normalized_metric
    thermo = 65535 / 6
    results = {}
    for L, name in ((10, "viterbi"), (11, "greedy")):
        b = published_basis(L)
        rep = metric_monte_carlo(b, make_mapper(name, b), model, length=100_000, seed=0)
        upper = (rep.raw_metric + rep.ci_halfwidth) / thermo
        results[(L, name)] = (rep.normalized_metric, upper)
    b13 = published_basis(13)
    table = memoryless_solve(b13, model, restarts=8, seed=0)
    exact = metric_complete(b13, table, model).normalized_metric
    mc = metric_monte_carlo(b13, TableMapper(table), model, length=100_000, seed=0)
    results[(13, "memoryless")] = (exact, exact)
    ok = all(upper < seg_metric for _, upper in results.values())
    parts = [f"L={L} {n} {v:.4f} (upper {u:.4f})" for (L, n), (v, u) in results.items()]
    record_acceptance(3, ok, f"4T+4B {seg_metric:.4f}; " + "; ".join(parts)
                             + f"; memoryless Monte Carlo {mc.normalized_metric:.4f}")
    assert ok


def _exhaustive_min(seq, weights):
    L = len(weights)
    masks = np.arange(1 << L)
    bits = (masks[:, None] >> np.arange(L)) & 1
    vals = bits @ np.asarray(weights)
    groups = [masks[vals == x] for x in seq]
    best = None
    for path in itertools.product(*groups):
        p = np.array(path)
        x = p[1:] ^ p[:-1]
        e = ((x[:, None] >> np.arange(L)) & 1) @ np.asarray(weights)
        c = int((e * e).sum())
        best = c if best is None else min(best, c)
    return best


def test_criterion_4_viterbi_optimality():
    rng = np.random.default_rng(2024)
    done = 0
    mismatches = 0
    while done < 200:
        N = int(rng.integers(3, 9))
        L = int(rng.integers(N, min(12, (1 << N) - 1) + 1))
        b = random_basis(N, L, rng)
        n = int(rng.integers(1, 9))
        seq = rng.integers(0, b.n_codes, n)
        counts = rep_counts(b)
        if math.prod(counts[x] for x in seq) > 20_000:
            continue
        if viterbi_map(seq, b).cost != _exhaustive_min(seq, b.weights):
            mismatches += 1
        done += 1
    long_bad = 0
    tables = {}
    for k in range(100):
        b = published_basis(9 + k % 4) if k % 2 else random_basis(8, int(rng.integers(9, 13)), rng)
        if b not in tables:
            tables[b] = memoryless_solve(b, restarts=1)
        seq = rng.integers(0, 256, 1000)
        v = viterbi_map(seq, b).cost
        if v > greedy_map(seq, b).cost or v > mapping_cost(seq, tables[b]):
            long_bad += 1
    ok = mismatches == 0 and long_bad == 0
    record_acceptance(4, ok, f"{done} exhaustive instances, {mismatches} mismatches; "
                             f"100 long sequences, {long_bad} ordering violations")
    assert ok


def test_criterion_5_thermometer_equivalence():
    ok = True
    for N in range(1, 9):
        th = thermometer_basis(N)
        n = 1 << N
        table = canonical_table(th)
        bits = masks_to_bit_matrix(table, th.length).astype(np.int16)
        diff = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
        toggles = np.stack([(bits[x] != bits).sum(axis=1) for x in range(n)])
        if not np.array_equal(toggles, diff):
            ok = False
        if N == 8:
            sample = [(int(x), int(y)) for x, y in np.random.default_rng(0).integers(0, 256, (50, 2))]
            ok &= all(glitch_error(table[x], table[y], th) == abs(x - y) for x, y in sample)
            squares = int((toggles.astype(np.int64) ** 2).sum())
            ok &= squares * 6 == n * n * (n * n - 1)
            norm = metric_complete(th, table).normalized_metric
            ok &= norm == 1.0
    record_acceptance(5, ok, f"all pairs |x-y| for N=1..8, 8-bit normalized metric {norm!r}")
    assert ok


def test_criterion_6_enumeration_oracle():
    rng = np.random.default_rng(6)
    bad = 0
    for _ in range(100):
        L = int(rng.integers(1, 17))
        b = Basis(tuple(int(w) for w in rng.integers(1, 257, L)), 8)
        masks = np.arange(1 << L)
        vals = ((masks[:, None] >> np.arange(L)) & 1) @ np.asarray(b.weights)
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        for x in range(256):
            lo, hi = np.searchsorted(sv, [x, x + 1])
            if sorted(enumerate_reps(x, b)) != sorted(order[lo:hi].tolist()):
                bad += 1
    sums_ok = True
    for k in range(30):
        L = 8 + k % 9
        b = random_basis(8, L, rng)
        total = sum(len(enumerate_reps(x, b)) for x in range(256))
        sums_ok &= total == 2 ** L == sum(rep_counts(b))
    ok = bad == 0 and sums_ok
    record_acceptance(6, ok, f"100 bases (L<=16) vs full scan: {bad} mismatching codewords; "
                             f"sum of |R(x)| = 2^L on 30 full-scale bases: {sums_ok}")
    assert ok


def test_criterion_7_simulator_sanity():
    stim = StimulusConfig(osr=64)
    codes = stim.codes(8)
    b = published_basis(13)
    masks = make_mapper("memoryless", b)(codes).masks
    zero = synthesize(codes, masks, b, EdgeModel(), 64)
    equal = synthesize(codes, masks, b, EdgeModel(tau_on=0.07, tau_off=0.07), 64)
    exact = np.array_equal(zero, ideal_zoh(codes, 64)) and np.array_equal(
        equal, reference_zoh(codes, 64, 0.07))

    osr = 1024
    taus = np.geomspace(0.02, 0.2, 9)
    energy = []
    for tau in taus:
        e = EdgeModel.skewed(float(tau))
        w = synthesize(codes, masks, b, e, osr)
        err = w - reference_zoh(codes, osr, e.reference_delay)
        energy.append(np.sum(err ** 2) / osr)
    slope = np.polyfit(np.log(taus), np.log(energy), 1)[0]

    worst = 0.0
    for basis, name in ((binary_basis(8), "canonical"), (segmented_basis(4, 4), "canonical"),
                        (b, "memoryless")):
        handle = make_mapper(name, basis)
        for tau in FIG6_TAUS:
            vals = []
            for grid in (64, 128, 256, 512):
                r = run_experiment(basis, handle, StimulusConfig(osr=grid), EdgeModel.skewed(tau))
                vals.append((r.sndr_db, r.sfdr_db))
            v = np.array(vals)
            worst = max(worst, float(np.abs(v - v[-1]).max()))
    ok = exact and abs(slope - 1.0) <= 0.05 and worst <= 0.1
    record_acceptance(7, ok, f"equal delays exact: {exact}; energy slope {slope:.4f}; "
                             f"max SNDR/SFDR change over OSR 64..512: {worst:.2e} dB")
    assert ok


def test_criterion_8_sfdr_ordering():
    stim = StimulusConfig()
    configs = {"8T": (thermometer_basis(8), "canonical"), "4T+4B": (segmented_basis(4, 4), "canonical"),
               "8B": (binary_basis(8), "canonical"), "opt13": (published_basis(13), "memoryless")}
    handles = {k: make_mapper(m, b, seed=0) for k, (b, m) in configs.items()}
    ok = True
    parts = []
    for tau in FIG6_TAUS:
        s = {k: run_experiment(configs[k][0], h, stim, EdgeModel.skewed(tau)).sfdr_db
             for k, h in handles.items()}
        ok &= s["8T"] >= s["4T+4B"] >= s["8B"]
        ok &= abs(s["opt13"] - s["4T+4B"]) <= 3.0
        parts.append(f"tau={tau}: 8T {s['8T']:.2f}, 4T+4B {s['4T+4B']:.2f}, 8B {s['8B']:.2f}, "
                     f"opt13 {s['opt13']:.2f}")
    record_acceptance(8, ok, "; ".join(parts))
    assert ok


def test_criterion_9_sndr_consistency():
    stim = StimulusConfig(kind="prbs-codes")
    model = TransitionModel.uniform(8)
    configs = [(binary_basis(8), "canonical"), (segmented_basis(4, 4), "canonical")]
    configs += [(published_basis(L), "viterbi") for L in range(9, 14)]
    metrics, handles = [], []
    for b, name in configs:
        h = make_mapper(name, b)
        handles.append(h)
        if name == "canonical":
            metrics.append(metric_complete(b, canonical_mapping(b), model).normalized_metric)
        else:
            metrics.append(metric_monte_carlo(b, h, model, length=100_000, seed=0).normalized_metric)
    ok = True
    parts = []
    for tau in (0.01, 0.05, 0.1):
        sndr = [run_experiment(b, h, stim, EdgeModel.skewed(tau), seed=0).sndr_db
                for (b, _), h in zip(configs, handles)]
        opt = sndr[2:]
        monotone = all(b >= a - 0.1 for a, b in zip(opt, opt[1:]))
        rho = spearmanr(metrics, sndr).statistic
        ok &= monotone and rho == -1.0
        parts.append(f"tau={tau}: spearman {rho:.3f}, L=9..13 SNDR "
                     + "/".join(f"{v:.2f}" for v in opt))
    record_acceptance(9, ok, "; ".join(parts))
    assert ok
