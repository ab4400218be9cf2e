"""Basic DAC model: weight bases, switch representations and the glitch error.

A representation is carried around as an integer bit mask where bit ``i`` is
the state of switch ``i`` (the ``i``-th basis weight).  Bit strings follow the
same order: character 0 is switch 0, so ``"1010"`` on ``[1, 2, 4, 8]`` turns on
the weights 1 and 4.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import CoverageError, DimensionError, RangeError, ValidationError

RepLike = Union[int, str, Sequence[int], np.ndarray]


@dataclass(frozen=True)
class Basis:
    """Switch weights of an ``bit_depth``-bit current-steering DAC.

    Weights are integers in units of the unit current and are kept sorted in
    non-decreasing order.
    """

    weights: tuple[int, ...]
    bit_depth: int
    name: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        w = tuple(sorted(int(v) for v in self.weights))
        n = int(self.bit_depth)
        if n < 0:
            raise ValidationError(f"bit depth must be >= 0, got {n}")
        if not w:
            raise ValidationError("a basis needs at least one weight")
        if w[0] < 1 or w[-1] > (1 << n):
            raise ValidationError(
                f"weights must lie in [1, {1 << n}], got {list(w)}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bit_depth", n)

    @property
    def length(self) -> int:
        return len(self.weights)

    @property
    def n_codes(self) -> int:
        return 1 << self.bit_depth

    @property
    def max_code(self) -> int:
        return (1 << self.bit_depth) - 1

    @property
    def total(self) -> int:
        return sum(self.weights)

    @property
    def is_full_scale(self) -> bool:
        return self.total == self.max_code

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.int64)

    @cached_property
    def _suffix_reach(self) -> list[int]:
        # reach[i]: bitset of sums attainable by weights[i:], truncated to the code range
        limit = (1 << (self.max_code + 1)) - 1
        reach = [0] * (self.length + 1)
        reach[-1] = 1
        for i in range(self.length - 1, -1, -1):
            r = reach[i + 1]
            reach[i] = (r | (r << self.weights[i])) & limit
        return reach

    def uncovered(self) -> list[int]:
        """Codewords in ``[0, 2^N - 1]`` that no switch pattern reaches."""
        r = self._suffix_reach[0]
        return [x for x in range(self.n_codes) if not (r >> x) & 1]

    @property
    def covers(self) -> bool:
        r = self._suffix_reach[0]
        return r == (1 << self.n_codes) - 1

    def check(self, full_scale: bool = False) -> "Basis":
        """Raise unless every codeword is reachable (and, optionally, the sum is exact)."""
        missing = self.uncovered()
        if missing:
            raise CoverageError(missing[0], f"basis {list(self.weights)} cannot represent codeword {missing[0]}")
        if full_scale and not self.is_full_scale:
            raise ValidationError(
                f"basis sums to {self.total}, expected {self.max_code}")
        return self

    def label(self) -> str:
        return self.name or ",".join(str(w) for w in self.weights)

    def to_json(self) -> dict:
        d = {"weights": list(self.weights), "bit_depth": self.bit_depth}
        if self.name:
            d["name"] = self.name
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Basis":
        return cls(tuple(d["weights"]), int(d["bit_depth"]), d.get("name"))

    @classmethod
    def parse(cls, text: str, bit_depth: int) -> "Basis":
        """Comma-separated weights, e.g. ``"1,2,4,8"``."""
        try:
            weights = [int(t) for t in text.replace(" ", "").split(",") if t]
        except ValueError as exc:
            raise ValidationError(f"cannot parse basis {text!r}") from exc
        return cls(tuple(weights), bit_depth)


def binary_basis(n: int) -> Basis:
    return Basis(tuple(1 << i for i in range(n)), n, name=f"{n}B")


def thermometer_basis(n: int) -> Basis:
    return Basis((1,) * ((1 << n) - 1), n, name=f"{n}T")


def segmented_basis(thermo_bits: int, binary_bits: int) -> Basis:
    """``kT+mB`` segmentation: m binary LSBs plus 2^k - 1 unary MSB cells of weight 2^m."""
    n = thermo_bits + binary_bits
    if thermo_bits == 0:
        return binary_basis(n)
    unary = (1 << binary_bits,) * ((1 << thermo_bits) - 1)
    name = f"{thermo_bits}T+{binary_bits}B" if binary_bits else f"{n}T"
    return Basis(tuple(1 << i for i in range(binary_bits)) + unary, n, name=name)


# Published glitch-optimized 8-bit bases for L = 9..13.
PUBLISHED_BASES: dict[int, tuple[int, ...]] = {
    9: (1, 2, 4, 8, 16, 31, 43, 69, 81),
    10: (1, 2, 4, 8, 16, 21, 31, 39, 62, 71),
    11: (1, 2, 4, 8, 13, 18, 26, 30, 38, 54, 61),
    12: (1, 2, 4, 8, 11, 16, 20, 25, 27, 35, 48, 58),
    13: (1, 2, 4, 7, 9, 15, 16, 19, 22, 26, 38, 42, 54),
}


def published_basis(length: int) -> Basis:
    return Basis(PUBLISHED_BASES[length], 8, name=f"opt{length}")


# --- representations -------------------------------------------------------


def as_mask(rep: RepLike, basis: Basis) -> int:
    """Normalize a representation (mask, bit string or 0/1 sequence) to a mask."""
    L = basis.length
    if isinstance(rep, (int, np.integer)):
        m = int(rep)
        if m < 0 or m >> L:
            raise DimensionError(f"mask {m:#x} does not fit {L} switches")
        return m
    if isinstance(rep, str):
        rep = rep.strip()
        if len(rep) != L or set(rep) - {"0", "1"}:
            raise DimensionError(f"bit string {rep!r} does not match {L} switches")
        return sum(1 << i for i, c in enumerate(rep) if c == "1")
    bits = list(rep)
    if len(bits) != L:
        raise DimensionError(f"representation has {len(bits)} bits, basis has {L}")
    m = 0
    for i, b in enumerate(bits):
        b = int(b)
        if b not in (0, 1):
            raise DimensionError(f"representation bit {i} is {b}, expected 0 or 1")
        m |= b << i
    return m


def mask_to_bits(mask: int, length: int) -> tuple[int, ...]:
    return tuple((int(mask) >> i) & 1 for i in range(length))


def mask_to_str(mask: int, length: int) -> str:
    return "".join("1" if (int(mask) >> i) & 1 else "0" for i in range(length))


def masks_to_bit_matrix(masks: Iterable[int], length: int) -> np.ndarray:
    """Stack masks into an ``(n, length)`` uint8 matrix (works for any length)."""
    masks = list(masks)
    if length <= 62:
        a = np.asarray(masks, dtype=np.int64)
        return ((a[:, None] >> np.arange(length)) & 1).astype(np.uint8)
    out = np.zeros((len(masks), length), dtype=np.uint8)
    for r, m in enumerate(masks):
        m = int(m)
        while m:
            low = m & -m
            out[r, low.bit_length() - 1] = 1
            m ^= low
    return out


def lex_key(mask: int, length: int) -> int:
    """Sort key giving lexicographic order of the bit vector (switch 0 first)."""
    return int(mask_to_str(mask, length), 2)


def toggled_weight(mask: int, weights: Sequence[int]) -> int:
    total = 0
    m = int(mask)
    while m:
        low = m & -m
        total += weights[low.bit_length() - 1]
        m ^= low
    return total


def decode(rep: RepLike, basis: Basis) -> int:
    """Codeword produced by a switch pattern: the inner product of bits and weights."""
    return toggled_weight(as_mask(rep, basis), basis.weights)


def glitch_error(rep_x: RepLike, rep_y: RepLike, basis: Basis) -> int:
    """Sum of the weights of all switches that change state between two patterns."""
    return toggled_weight(as_mask(rep_x, basis) ^ as_mask(rep_y, basis), basis.weights)


def check_codeword(x: int, basis: Basis) -> int:
    x = int(x)
    if not 0 <= x <= basis.max_code:
        raise RangeError(f"codeword {x} outside [0, {basis.max_code}]")
    return x


def canonical_rep(x: int, basis: Basis) -> int:
    """Lexicographically smallest bit vector (switch 0 first) that decodes to ``x``.

    Greedy on the suffix reachability sets: leave switch ``i`` off whenever the
    remaining switches can still reach the target.
    """
    x = check_codeword(x, basis)
    reach = basis._suffix_reach
    if not (reach[0] >> x) & 1:
        raise CoverageError(x, f"codeword {x} is not representable")
    mask, target = 0, x
    for i, w in enumerate(basis.weights):
        if (reach[i + 1] >> target) & 1:
            continue
        mask |= 1 << i
        target -= w
    return mask


def canonical_table(basis: Basis) -> list[int]:
    return [canonical_rep(x, basis) for x in range(basis.n_codes)]


# --- transition statistics --------------------------------------------------


@dataclass(frozen=True, eq=False)
class TransitionModel:
    """Joint distribution P(x, y) of consecutive codewords.

    ``uniform-iid`` needs no matrix; the other kinds carry a ``2^N x 2^N`` joint
    table that sums to one.
    """

    bit_depth: int
    kind: str = "uniform-iid"
    matrix: np.ndarray | None = None

    KINDS = ("uniform-iid", "empirical-matrix", "sequence-derived")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValidationError(f"unknown transition model kind {self.kind!r}")
        if self.kind == "uniform-iid":
            return
        n = 1 << self.bit_depth
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (n, n):
            raise DimensionError(f"transition matrix must be {n}x{n}, got {m.shape}")
        if (m < 0).any():
            raise ValidationError("transition probabilities must be non-negative")
        s = m.sum()
        if not np.isclose(s, 1.0, rtol=0, atol=1e-9):
            raise ValidationError(f"joint probabilities sum to {s}, expected 1")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def uniform(cls, bit_depth: int) -> "TransitionModel":
        return cls(bit_depth)

    @classmethod
    def from_joint(cls, matrix: np.ndarray, bit_depth: int | None = None) -> "TransitionModel":
        m = np.asarray(matrix, dtype=float)
        n = int(m.shape[0]).bit_length() - 1 if bit_depth is None else bit_depth
        return cls(n, "empirical-matrix", m / m.sum())

    @classmethod
    def from_sequence(cls, codes: Sequence[int], bit_depth: int, circular: bool = False) -> "TransitionModel":
        c = np.asarray(codes, dtype=np.int64)
        n = 1 << bit_depth
        if c.size < 2:
            raise ValidationError("need at least two codewords to count transitions")
        if c.min() < 0 or c.max() >= n:
            raise RangeError(f"sequence contains codewords outside [0, {n - 1}]")
        nxt = np.roll(c, -1) if circular else c[1:]
        cur = c if circular else c[:-1]
        m = np.zeros((n, n))
        np.add.at(m, (cur, nxt), 1.0)
        return cls(bit_depth, "sequence-derived", m / m.sum())

    @property
    def is_uniform(self) -> bool:
        return self.kind == "uniform-iid"

    def joint(self) -> np.ndarray:
        n = 1 << self.bit_depth
        if self.is_uniform:
            return np.full((n, n), 1.0 / (n * n))
        return self.matrix

    def sample(self, length: int, rng: np.random.Generator) -> np.ndarray:
        """Draw a codeword sequence: i.i.d. for the uniform model, else a first-order chain."""
        n = 1 << self.bit_depth
        if self.is_uniform:
            return rng.integers(0, n, size=length)
        joint = self.matrix
        marginal = joint.sum(axis=1)
        rows = joint / np.where(marginal > 0, marginal, 1.0)[:, None]
        cdf = np.cumsum(rows, axis=1)
        out = np.empty(length, dtype=np.int64)
        out[0] = rng.choice(n, p=marginal)
        u = rng.random(length)
        for m in range(1, length):
            prev = out[m - 1]
            if marginal[prev] == 0:
                out[m] = rng.choice(n, p=marginal)
                continue
            out[m] = min(int(np.searchsorted(cdf[prev], u[m], side="right")), n - 1)
        return out

    def to_json(self) -> dict:
        d = {"kind": self.kind, "bit_depth": self.bit_depth}
        if not self.is_uniform:
            d["nonzero"] = int(np.count_nonzero(self.matrix))
        return d


class RepDistribution:
    """Per-codeword probabilities over that codeword's representations."""

    def __init__(self, basis: Basis, probs: dict[int, dict[int, float]]):
        self.basis = basis
        self.probs = {}
        for x, dist in probs.items():
            check_codeword(x, basis)
            total = 0.0
            for mask, p in dist.items():
                if p < 0:
                    raise ValidationError(f"negative probability for codeword {x}")
                if decode(mask, basis) != x:
                    raise ValidationError(
                        f"pattern {mask_to_str(mask, basis.length)} does not decode to {x}")
                total += p
            if not np.isclose(total, 1.0, atol=1e-9):
                raise ValidationError(f"probabilities for codeword {x} sum to {total}")
            self.probs[int(x)] = {int(m): float(p) for m, p in dist.items() if p > 0}

    @classmethod
    def degenerate(cls, basis: Basis, table: Sequence[int]) -> "RepDistribution":
        return cls(basis, {x: {int(m): 1.0} for x, m in enumerate(table)})

    @classmethod
    def uniform(cls, basis: Basis) -> "RepDistribution":
        from .representations import enumerate_reps

        probs = {}
        for x in range(basis.n_codes):
            reps = enumerate_reps(x, basis).reps
            probs[x] = {m: 1.0 / len(reps) for m in reps}
        return cls(basis, probs)

    def __getitem__(self, x: int) -> dict[int, float]:
        return self.probs[x]
