"""Representation sets and expected glitch-power metrics."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import _kernels as K
from .core import (
    Basis,
    RepDistribution,
    TransitionModel,
    check_codeword,
    masks_to_bit_matrix,
)
from .errors import CoverageError, IncompleteTableError, ValidationError

# Largest basis for which the full 2^L pattern table is materialized.
MAX_INDEX_LENGTH = 22

Z95 = 1.959963984540054


@dataclass(frozen=True)
class RepSet:
    codeword: int
    reps: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.reps)

    def __iter__(self):
        return iter(self.reps)


def enumerate_reps(x: int, basis: Basis, limit: int | None = None) -> RepSet:
    """All switch patterns decoding to ``x``, in lexicographic bit order.

    Depth-first subset sum over the weights taken largest first, pruning any
    branch whose remaining weights cannot close the gap.
    """
    x = check_codeword(x, basis)
    w = basis.weights
    idx = sorted(range(basis.length), key=lambda i: (-w[i], i))
    vals = [w[i] for i in idx]
    rest = [0] * (len(vals) + 1)
    for k in range(len(vals) - 1, -1, -1):
        rest[k] = rest[k + 1] + vals[k]

    found: list[int] = []
    stack = [(0, x, 0)]
    while stack:
        k, need, mask = stack.pop()
        if need == 0:
            found.append(mask)
            if limit is not None and len(found) >= limit:
                break
            continue
        if k == len(vals) or rest[k] < need:
            continue
        stack.append((k + 1, need, mask))
        if vals[k] <= need:
            stack.append((k + 1, need - vals[k], mask | (1 << idx[k])))
    L = basis.length
    found.sort(key=lambda m: _reverse_bits(m, L))
    return RepSet(x, tuple(found))


def _reverse_bits(m: int, L: int) -> int:
    return int(format(m, f"0{L}b")[::-1], 2) if L else 0


class RepIndex:
    """All ``2^L`` patterns of a basis grouped by the codeword they decode to.

    Inside each group patterns appear in canonical (lexicographic) order, so
    ``order[starts[x]]`` is the canonical representation of ``x``.
    """

    def __init__(self, basis: Basis):
        L = basis.length
        if L > MAX_INDEX_LENGTH:
            raise ValidationError(
                f"basis length {L} exceeds the indexable limit {MAX_INDEX_LENGTH}")
        self.basis = basis
        self.values = K.value_table(basis.array)
        masks = np.arange(1 << L, dtype=np.int64)
        rev = np.zeros_like(masks)
        for i in range(L):
            rev |= ((masks >> i) & 1) << (L - 1 - i)
        inside = self.values < basis.n_codes
        sel = masks[inside]
        order = sel[np.lexsort((rev[inside], self.values[inside]))]
        counts = np.bincount(self.values[inside], minlength=basis.n_codes)
        self.order = order
        self.starts = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        self.counts = counts

    def reps(self, x: int) -> np.ndarray:
        return self.order[self.starts[x]:self.starts[x + 1]]

    def canonical(self) -> np.ndarray:
        if (self.counts == 0).any():
            x = int(np.flatnonzero(self.counts == 0)[0])
            raise CoverageError(x)
        return self.order[self.starts[:-1]]

    def check_coverage(self) -> None:
        if (self.counts == 0).any():
            raise CoverageError(int(np.flatnonzero(self.counts == 0)[0]))


@lru_cache(maxsize=32)
def rep_index(basis: Basis) -> RepIndex:
    return RepIndex(basis)


@dataclass(frozen=True)
class RepCountStats:
    average: float
    minimum: int
    maximum: int


def rep_counts(basis: Basis) -> list[int]:
    """Number of representations of every codeword (exact, arbitrary size)."""
    counts = [0] * basis.n_codes
    counts[0] = 1
    for w in basis.weights:
        for v in range(basis.max_code, w - 1, -1):
            counts[v] += counts[v - w]
    return counts


def rep_count_stats(basis: Basis) -> RepCountStats:
    counts = rep_counts(basis)
    for x, c in enumerate(counts):
        if c == 0:
            raise CoverageError(x, f"codeword {x} has no representation")
    return RepCountStats(sum(counts) / basis.n_codes, min(counts), max(counts))


# --- metrics ----------------------------------------------------------------


@dataclass
class MetricReport:
    raw_metric: float
    normalized_metric: float
    basis: list[int]
    mapper: str
    method: str
    bit_depth: int
    basis_id: str = ""
    samples: int = 0
    ci_halfwidth: float = 0.0
    seed: int | None = None
    model: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    CSV_COLUMNS = ("basis_id", "L", "mapper", "method", "raw", "normalized", "ci_halfwidth", "seed")

    def csv_row(self) -> dict:
        return {
            "basis_id": self.basis_id or ",".join(map(str, self.basis)),
            "L": len(self.basis),
            "mapper": self.mapper,
            "method": self.method,
            "raw": repr(float(self.raw_metric)),
            "normalized": repr(float(self.normalized_metric)),
            "ci_halfwidth": repr(float(self.ci_halfwidth)),
            "seed": "" if self.seed is None else self.seed,
        }


def append_csv(path: str | os.PathLike, reports: Sequence[MetricReport]) -> None:
    """Append report rows, writing the header when the file is new."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=MetricReport.CSV_COLUMNS)
        if new:
            wr.writeheader()
        for r in reports:
            wr.writerow(r.csv_row())


def thermometer_metric(model: TransitionModel) -> float:
    """Expected squared glitch of the thermometer DAC, which toggles |x - y| cells."""
    n = 1 << model.bit_depth
    if model.is_uniform:
        # E[(x - y)^2] for independent uniform x, y: 2 Var = (n^2 - 1) / 6
        return (n * n - 1) / 6.0
    x = np.arange(n, dtype=float)
    return float((model.joint() * (x[:, None] - x[None, :]) ** 2).sum())


def _normalize(raw: float, model: TransitionModel) -> float:
    th = thermometer_metric(model)
    if th == 0:
        return 0.0 if raw == 0 else math.inf
    return raw / th


def pairwise_glitch(table_bits: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Matrix of toggled weights between every pair of rows of a 0/1 table.

    Uses sum_i w_i |a_i - b_i| = sum w a + sum w b - 2 sum w a b.
    """
    A = table_bits.astype(np.int64)
    v = A @ weights
    return v[:, None] + v[None, :] - 2 * ((A * weights) @ A.T)


def table_masks(table) -> list[int]:
    """Accept a MappingTable or a plain sequence of masks."""
    masks = getattr(table, "masks", None)
    if masks is None:
        masks = table
    return [int(m) for m in masks]


def metric_complete(basis: Basis, table, model: TransitionModel | None = None,
                    mapper: str = "memoryless") -> MetricReport:
    """Expected squared glitch of a one-representation-per-codeword table."""
    model = model or TransitionModel.uniform(basis.bit_depth)
    masks = table_masks(table)
    if len(masks) != basis.n_codes:
        raise IncompleteTableError(
            f"table has {len(masks)} entries, expected {basis.n_codes}")
    bits = masks_to_bit_matrix(masks, basis.length)
    values = bits.astype(np.int64) @ basis.array
    bad = np.flatnonzero(values != np.arange(basis.n_codes))
    if bad.size:
        raise IncompleteTableError(f"entry for codeword {int(bad[0])} decodes to {int(values[bad[0]])}")
    G = pairwise_glitch(bits, basis.array).astype(float)
    raw = float((model.joint() * G * G).sum())
    return MetricReport(raw, _normalize(raw, model), list(basis.weights), mapper,
                        "analytic", basis.bit_depth, basis_id=basis.label(),
                        model=model.to_json())


def metric_overcomplete(basis: Basis, rep_dist: RepDistribution,
                        model: TransitionModel | None = None,
                        mapper: str = "rep-distribution") -> MetricReport:
    """Expected squared glitch when each next codeword takes its best representation."""
    model = model or TransitionModel.uniform(basis.bit_depth)
    idx = rep_index(basis)
    idx.check_coverage()
    P = np.ascontiguousarray(model.joint(), dtype=float)
    wprob = np.zeros(1 << basis.length)
    for x in range(basis.n_codes):
        if x not in rep_dist.probs:
            if P[x].any():
                raise IncompleteTableError(f"no representation distribution for codeword {x}")
            continue
        for m, p in rep_dist[x].items():
            wprob[m] = p
    raw = float(K.overcomplete_sum(idx.values, idx.order, idx.starts, wprob, P))
    return MetricReport(raw, _normalize(raw, model), list(basis.weights), mapper,
                        "analytic", basis.bit_depth, basis_id=basis.label(),
                        model=model.to_json())


# Monte Carlo blocks have a fixed length so the drawn data and the mapper runs
# depend only on (seed, length), never on how blocks are spread over workers.
MC_BLOCK = 10_000


def _block_lengths(length: int) -> list[int]:
    n_full, rem = divmod(length, MC_BLOCK)
    sizes = [MC_BLOCK] * n_full
    if rem:
        if rem == 1 and sizes:
            sizes[-1] += 1
        else:
            sizes.append(rem)
    return sizes


def _mc_block(args):
    mapper, model, seed, b, size = args
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
    seq = model.sample(size, rng)
    path = mapper(seq)
    return path.transition_errors() ** 2


def metric_monte_carlo(basis: Basis, mapper, model: TransitionModel | None = None,
                       length: int = 100_000, seed: int = 0, shards: int = 1,
                       workers: int = 1) -> MetricReport:
    """Time-average squared glitch per transition of ``mapper`` on drawn sequences.

    ``mapper`` is any callable taking a codeword array and returning a
    :class:`~dacglitch.mappers.TrellisPath`.  The half-width is the 95% normal
    approximation over the per-transition samples.
    """
    if length < 2:
        raise ValidationError("Monte Carlo evaluation needs length >= 2")
    model = model or TransitionModel.uniform(basis.bit_depth)
    sizes = _block_lengths(length)
    jobs = [(mapper, model, seed, b, s) for b, s in enumerate(sizes)]
    shards = max(1, min(shards, len(jobs)))
    chunks = [jobs[i::shards] for i in range(shards)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_chunk, chunks))
    else:
        parts = [_run_chunk(c) for c in chunks]
    by_block = {}
    for part in parts:
        by_block.update(part)
    samples = np.concatenate([by_block[b] for b in range(len(sizes))]).astype(float)
    raw = float(samples.mean())
    half = float(Z95 * samples.std(ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else 0.0
    norm = _normalize(raw, model)
    label = getattr(mapper, "label", getattr(mapper, "__name__", "mapper"))
    return MetricReport(raw, norm, list(basis.weights), label, "monte-carlo",
                        basis.bit_depth, basis_id=basis.label(), samples=int(samples.size),
                        ci_halfwidth=half, seed=seed,
                        model=model.to_json())


def _run_chunk(jobs):
    return {job[3]: _mc_block(job) for job in jobs}
