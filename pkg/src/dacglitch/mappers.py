"""Per-sample representation selection: Viterbi, greedy best-next and memoryless."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels as K
from .core import (
    Basis,
    RepLike,
    TransitionModel,
    as_mask,
    canonical_table,
    mask_to_str,
    masks_to_bit_matrix,
)
from .errors import CapacityError, ConsistencyError, CoverageError, RangeError, ValidationError
from .representations import metric_complete, rep_index

DEFAULT_LUT_CAP = 1 << 24


def _as_codes(sequence, basis: Basis) -> np.ndarray:
    seq = np.asarray(sequence, dtype=np.int64).ravel()
    if seq.size == 0:
        raise ValidationError("sequence must hold at least one codeword")
    if seq.min() < 0 or seq.max() > basis.max_code:
        raise RangeError(f"sequence has codewords outside [0, {basis.max_code}]")
    return seq


def _check_covered(seq: np.ndarray, counts: np.ndarray) -> None:
    missing = seq[counts[seq] == 0]
    if missing.size:
        raise CoverageError(int(missing[0]))


def toggled_weights(masks: Sequence[int], basis: Basis) -> np.ndarray:
    """Toggled weight of every consecutive pair of patterns."""
    bits = masks_to_bit_matrix(masks, basis.length)
    if len(bits) < 2:
        return np.zeros(0, dtype=np.int64)
    flips = bits[1:] ^ bits[:-1]
    return flips.astype(np.int64) @ basis.array


@dataclass
class TrellisPath:
    """Chosen representation per sample and the total squared glitch cost."""

    basis: Basis
    codes: np.ndarray
    masks: np.ndarray
    cost: int
    state_counts: np.ndarray | None = None
    mapper: str = ""

    def __len__(self) -> int:
        return len(self.codes)

    def transition_errors(self) -> np.ndarray:
        return toggled_weights(self.masks, self.basis)

    def bits(self) -> np.ndarray:
        return masks_to_bit_matrix(self.masks, self.basis.length)

    def reps_str(self) -> list[str]:
        return [mask_to_str(m, self.basis.length) for m in self.masks]

    def to_json(self) -> dict:
        return {
            "mapper": self.mapper,
            "basis": self.basis.to_json(),
            "codes": [int(c) for c in self.codes],
            "reps": self.reps_str(),
            "cost": int(self.cost),
        }


@dataclass
class MappingTable:
    """Stored codeword-to-representation assignment.

    ``memoryless`` keeps one mask per codeword in ``masks``.  ``greedy-lut``
    keeps ``lut[prev_mask, codeword]`` with -1 for previous patterns that
    decode outside the code range.
    """

    basis: Basis
    mode: str
    masks: list[int] | None = None
    lut: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mode not in ("memoryless", "greedy-lut"):
            raise ValidationError(f"unknown table mode {self.mode!r}")
        self.validate()

    def validate(self) -> None:
        b = self.basis
        if self.mode == "memoryless":
            if self.masks is None or len(self.masks) != b.n_codes:
                raise ValidationError(f"memoryless table needs {b.n_codes} entries")
            bits = masks_to_bit_matrix(self.masks, b.length)
            vals = bits.astype(np.int64) @ b.array
            bad = np.flatnonzero(vals != np.arange(b.n_codes))
            if bad.size:
                raise ConsistencyError(f"entry {int(bad[0])} decodes to {int(vals[bad[0]])}")
            return
        idx = rep_index(b)
        lut = self.lut
        if lut is None or lut.shape != (1 << b.length, b.n_codes):
            raise ValidationError("greedy LUT has the wrong shape")
        live = idx.values < b.n_codes
        if (lut[~live] != -1).any():
            raise ConsistencyError("LUT holds rows for out-of-range previous patterns")
        rows = lut[live]
        if (rows < 0).any():
            raise ConsistencyError("LUT is missing entries for reachable previous patterns")
        if (idx.values[rows] != np.arange(b.n_codes)[None, :]).any():
            raise ConsistencyError("LUT entry does not decode to its codeword")

    def __getitem__(self, x: int) -> int:
        if self.mode != "memoryless":
            raise ValidationError("index a greedy LUT with lookup(prev, code)")
        return self.masks[x]

    def lookup(self, prev: int, code: int) -> int:
        return int(self.lut[prev, code])

    def objective(self, model: TransitionModel | None = None) -> float:
        return metric_complete(self.basis, self.masks, model).raw_metric

    def __eq__(self, other) -> bool:
        if not isinstance(other, MappingTable):
            return NotImplemented
        if self.basis != other.basis or self.mode != other.mode:
            return False
        if self.mode == "memoryless":
            return [int(m) for m in self.masks] == [int(m) for m in other.masks]
        return np.array_equal(self.lut, other.lut)


# --- mappers ----------------------------------------------------------------


def viterbi_map(sequence, basis: Basis, initial: RepLike | None = None) -> TrellisPath:
    """Globally optimal representation path (min total squared glitch).

    Ties resolve towards the lexicographically smallest representation.
    """
    idx = rep_index(basis)
    seq = _as_codes(sequence, basis)
    _check_covered(seq, idx.counts)
    init = -1
    if initial is not None:
        init = as_mask(initial, basis)
        if idx.values[init] != seq[0]:
            raise ConsistencyError("initial representation does not decode to the first codeword")
    path, cost, counts = K.viterbi(idx.values, idx.order, idx.starts, seq, init)
    return TrellisPath(basis, seq, path, int(cost), counts, "viterbi")


def greedy_map(sequence, basis: Basis, initial: RepLike | None = None) -> TrellisPath:
    """Best-next choice given only the previously committed representation."""
    idx = rep_index(basis)
    seq = _as_codes(sequence, basis)
    _check_covered(seq, idx.counts)
    if initial is None:
        first = int(idx.order[idx.starts[seq[0]]])
    else:
        first = as_mask(initial, basis)
        if idx.values[first] != seq[0]:
            raise ConsistencyError("initial representation does not decode to the first codeword")
    path, cost = K.greedy(idx.values, idx.order, idx.starts, seq, first)
    return TrellisPath(basis, seq, path, int(cost), idx.counts[seq], "greedy")


def build_greedy_lut(basis: Basis, cap: int = DEFAULT_LUT_CAP) -> MappingTable:
    """Offline best-next table over every previous pattern and next codeword."""
    entries = (1 << basis.length) * basis.n_codes
    if entries > cap:
        raise CapacityError(
            f"greedy LUT needs {entries} entries (cap {cap}); use on-the-fly greedy_map instead")
    idx = rep_index(basis)
    idx.check_coverage()
    lut = K.greedy_lut(idx.values, idx.order, idx.starts, basis.n_codes)
    return MappingTable(basis, "greedy-lut", lut=lut, meta={"entries": entries})


def replay_greedy_lut(table: MappingTable, sequence, initial: RepLike | None = None) -> TrellisPath:
    basis = table.basis
    idx = rep_index(basis)
    seq = _as_codes(sequence, basis)
    first = int(idx.order[idx.starts[seq[0]]]) if initial is None else as_mask(initial, basis)
    path = K.lut_replay(table.lut, seq, first)
    errs = idx.values[path[1:] ^ path[:-1]]
    return TrellisPath(basis, seq, path, int((errs * errs).sum()), None, "greedy-lut")


def table_map(sequence, table: MappingTable | Sequence[int], basis: Basis | None = None,
              label: str = "memoryless") -> TrellisPath:
    """Look every codeword up in a fixed table."""
    if isinstance(table, MappingTable):
        basis, masks = table.basis, table.masks
    else:
        masks = list(table)
    seq = _as_codes(sequence, basis)
    if basis.length <= 62:
        chosen = np.asarray(masks, dtype=np.int64)[seq]
    else:
        chosen = np.array([masks[c] for c in seq], dtype=object)
    errs = toggled_weights(chosen, basis)
    return TrellisPath(basis, seq, chosen, int((errs * errs).sum()), None, label)


def memoryless_solve(basis: Basis, model: TransitionModel | None = None, restarts: int = 1,
                     seed: int = 0, shuffle: bool = False, tol: float = 1e-12) -> MappingTable:
    """Fixed table minimizing expected squared glitch by coordinate descent.

    Restart 0 starts from canonical representations, later restarts from a
    uniformly random representation per codeword.  Each sweep visits codewords
    in ascending order (or a per-restart random order with ``shuffle``) and
    replaces the entry by its best response to the rest of the table; a sweep
    without changes ends the restart.  The best table over restarts wins.
    """
    if restarts < 1:
        raise ValidationError("restarts must be >= 1")
    model = model or TransitionModel.uniform(basis.bit_depth)
    idx = rep_index(basis)
    idx.check_coverage()
    n = basis.n_codes
    P = model.joint()
    S = P + P.T
    np.fill_diagonal(S, 0.0)
    S = np.ascontiguousarray(S)
    streams = np.random.SeedSequence(seed).spawn(restarts)
    best = None
    runs = []
    for r, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        if r == 0:
            table = idx.order[idx.starts[:-1]].copy()
        else:
            pick = (rng.random(n) * idx.counts).astype(np.int64)
            table = idx.order[idx.starts[:-1] + pick].copy()
        sweep = rng.permutation(n) if shuffle else np.arange(n)
        start = metric_complete(basis, table, model).raw_metric
        gains, sweeps = K.coordinate_descent(idx.values, idx.order, idx.starts, table, S,
                                             sweep.astype(np.int64), tol)
        trace = start - np.concatenate(([0.0], np.cumsum(gains)))
        final = metric_complete(basis, table, model).raw_metric
        runs.append({"restart": r, "objective": final, "sweeps": int(sweeps),
                     "updates": int(gains.size), "trace": trace.tolist()})
        if best is None or final < best[0]:
            best = (final, table.copy(), r)
    meta = {"objective": best[0], "best_restart": best[2], "restarts": runs,
            "seed": seed, "shuffle": shuffle, "model": model.to_json()}
    return MappingTable(basis, "memoryless", masks=[int(m) for m in best[1]], meta=meta)


def canonical_mapping(basis: Basis) -> MappingTable:
    return MappingTable(basis, "memoryless", masks=canonical_table(basis),
                        meta={"source": "canonical"})


def mapping_cost(sequence, mapping, basis: Basis | None = None) -> int:
    """Re-score a mapping: sum of squared toggled weights along the sequence.

    ``mapping`` may be a TrellisPath, a memoryless MappingTable, or an explicit
    list of per-sample representations (then ``basis`` is required).
    """
    if isinstance(mapping, TrellisPath):
        basis = mapping.basis
        masks = list(mapping.masks)
    elif isinstance(mapping, MappingTable):
        basis = mapping.basis
        if mapping.mode != "memoryless":
            raise ValidationError("score a greedy LUT through replay_greedy_lut")
        masks = [mapping.masks[int(c)] for c in sequence]
    else:
        if basis is None:
            raise ValidationError("basis required for explicit representation lists")
        masks = [as_mask(m, basis) for m in mapping]
    seq = _as_codes(sequence, basis)
    if len(masks) != len(seq):
        raise ConsistencyError(f"{len(masks)} representations for {len(seq)} codewords")
    bits = masks_to_bit_matrix(masks, basis.length)
    vals = bits.astype(np.int64) @ basis.array
    bad = np.flatnonzero(vals != seq)
    if bad.size:
        i = int(bad[0])
        raise ConsistencyError(f"sample {i}: representation decodes to {int(vals[i])}, codeword is {int(seq[i])}")
    errs = toggled_weights(masks, basis)
    return int((errs * errs).sum())


# --- mapper handles -----------------------------------------------------------


class Mapper:
    """Callable wrapper: ``mapper(codes) -> TrellisPath``."""

    label = "mapper"

    def __init__(self, basis: Basis):
        self.basis = basis

    def __call__(self, sequence) -> TrellisPath:
        raise NotImplementedError


class ViterbiMapper(Mapper):
    label = "viterbi"

    def __call__(self, sequence):
        return viterbi_map(sequence, self.basis)


class GreedyMapper(Mapper):
    label = "greedy"

    def __call__(self, sequence):
        return greedy_map(sequence, self.basis)


class TableMapper(Mapper):
    def __init__(self, table: MappingTable, label: str = "memoryless"):
        super().__init__(table.basis)
        self.table = table
        self.label = label

    def __call__(self, sequence):
        return table_map(sequence, self.table, label=self.label)


MAPPERS = ("viterbi", "greedy", "memoryless", "canonical")


def make_mapper(name: str, basis: Basis, model: TransitionModel | None = None,
                seed: int = 0, restarts: int = 8) -> Mapper:
    if name == "viterbi":
        return ViterbiMapper(basis)
    if name == "greedy":
        return GreedyMapper(basis)
    if name == "memoryless":
        return TableMapper(memoryless_solve(basis, model, restarts=restarts, seed=seed))
    if name == "canonical":
        return TableMapper(canonical_mapping(basis), label="canonical")
    raise ValidationError(f"unknown mapper {name!r}; choose from {', '.join(MAPPERS)}")
