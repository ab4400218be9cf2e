"""Simulated annealing over integer weight bases."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels as K
from .core import Basis, TransitionModel
from .errors import InfeasibleError, ValidationError
from .representations import MAX_INDEX_LENGTH, Z95, thermometer_metric


@dataclass
class AnnealConfig:
    length: int
    bit_depth: int = 8
    iterations: int = 20_000
    restarts: int = 100
    initial_temperature: float | None = None
    cooling: float = 0.995
    steps: tuple[int, ...] = (1, 2, 4)
    samples: int = 2_000
    seed: int = 0
    calibration_moves: int = 64
    trace_points: int = 200
    workers: int = 1

    def __post_init__(self) -> None:
        self.steps = tuple(int(s) for s in self.steps)
        if not 0 < self.cooling < 1:
            raise ValidationError(f"cooling factor must lie in (0, 1), got {self.cooling}")
        if self.restarts < 1 or self.iterations < 1:
            raise ValidationError("restarts and iterations must be >= 1")
        if self.samples < 2:
            raise ValidationError("need at least two objective samples")
        if not self.steps or min(self.steps) < 1:
            raise ValidationError("neighbor steps must be positive integers")
        if self.initial_temperature is not None and self.initial_temperature <= 0:
            raise ValidationError("initial temperature must be positive")

    def to_json(self) -> dict:
        d = asdict(self)
        d["steps"] = list(self.steps)
        return d


@dataclass
class SearchResult:
    basis: Basis
    objective: float
    normalized: float
    restarts: list[dict]
    best_so_far: list[float]
    wall_time: float
    config: dict
    check_sampled: float = math.nan
    check_halfwidth: float = math.nan
    model: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "basis": self.basis.to_json(),
            "objective": self.objective,
            "normalized": self.normalized,
            "best_so_far": self.best_so_far,
            "restarts": self.restarts,
            "wall_time": self.wall_time,
            "config": self.config,
            "check_sampled": self.check_sampled,
            "check_halfwidth": self.check_halfwidth,
            "model": self.model,
        }


def check_feasible(bit_depth: int, length: int) -> None:
    """Raise unless some full-scale basis of this length covers every codeword."""
    n_codes = 1 << bit_depth
    if length < bit_depth:
        raise InfeasibleError(
            f"L={length} < N={bit_depth}: {1 << length} patterns cannot cover {n_codes} codewords")
    if length > n_codes - 1:
        raise InfeasibleError(
            f"L={length} weights >= 1 cannot sum to {n_codes - 1}")
    if length > MAX_INDEX_LENGTH:
        raise ValidationError(f"L={length} is beyond the searchable limit {MAX_INDEX_LENGTH}")


# --- objective --------------------------------------------------------------


@dataclass(frozen=True)
class ObjectiveSamples:
    """Fixed (x, u, y) draws shared by every candidate scored with them."""

    xs: np.ndarray
    us: np.ndarray
    ys: np.ndarray

    @classmethod
    def draw(cls, model: TransitionModel, n: int, rng: np.random.Generator) -> "ObjectiveSamples":
        n_codes = 1 << model.bit_depth
        if model.is_uniform:
            xs = rng.integers(0, n_codes, n)
            ys = rng.integers(0, n_codes, n)
        else:
            flat = rng.choice(n_codes * n_codes, size=n, p=model.joint().ravel())
            xs, ys = np.divmod(flat, n_codes)
        return cls(xs.astype(np.int64), rng.random(n), ys.astype(np.int64))


def _tables(basis: Basis):
    T = K.value_table(basis.array)
    if not K.covers_all(T, basis.n_codes):
        return None
    order, starts = K.group_masks(T, basis.n_codes)
    return T, order, starts


def objective(basis: Basis, model: TransitionModel | None = None,
              samples: ObjectiveSamples | None = None) -> float:
    """Expected best-response squared glitch with a uniform choice over R(x).

    Exact when ``samples`` is None; otherwise the mean over the given draws.
    Bases that miss a codeword score ``inf``.
    """
    if samples is not None:
        return sampled_objective(basis, samples)[0]
    model = model or TransitionModel.uniform(basis.bit_depth)
    if basis.length > MAX_INDEX_LENGTH:
        raise ValidationError(f"L={basis.length} is too long for the exact objective")
    tabs = _tables(basis)
    if tabs is None:
        return math.inf
    T, order, starts = tabs
    if model.is_uniform:
        return float(K.uniform_rep_objective(T, order, starts))
    counts = np.diff(starts)
    wprob = np.zeros(T.shape[0])
    inside = T < basis.n_codes
    wprob[inside] = 1.0 / counts[T[inside]]
    P = np.ascontiguousarray(model.joint(), dtype=float)
    return float(K.overcomplete_sum(T, order, starts, wprob, P))


def sampled_objective(basis: Basis, samples: ObjectiveSamples) -> tuple[float, float]:
    """Sample mean and 95% half-width of the objective over fixed draws."""
    tabs = _tables(basis)
    if tabs is None:
        return math.inf, math.inf
    terms = K.sampled_terms(*tabs, samples.xs, samples.us, samples.ys)
    return float(terms.mean()), float(Z95 * terms.std(ddof=1) / math.sqrt(terms.size))


# --- moves ------------------------------------------------------------------


def random_basis(bit_depth: int, length: int, rng: np.random.Generator,
                 max_tries: int = 1000) -> Basis:
    """Binary weights padded with random extras, then repaired to sum 2^N - 1."""
    check_feasible(bit_depth, length)
    target = (1 << bit_depth) - 1
    for _ in range(max_tries):
        w = [1 << i for i in range(bit_depth)]
        pad_hi = (1 << max(bit_depth - 1, 0)) + 1
        w += [int(v) for v in rng.integers(1, pad_hi, length - bit_depth)]
        w = np.array(w, dtype=np.int64)
        excess = int(w.sum()) - target
        while excess > 0:
            i = int(rng.integers(length))
            if w[i] > 1:
                take = min(excess, int(rng.integers(1, w[i])))
                w[i] -= take
                excess -= take
        b = Basis(tuple(w), bit_depth)
        if b.covers:
            return b
    raise InfeasibleError(f"could not draw a covering basis for N={bit_depth}, L={length}")


def neighbor_move(basis: Basis, rng: np.random.Generator, steps=(1, 2, 4),
                  max_retries: int = 100) -> tuple[Basis, int]:
    """Perturb one weight and rebalance another so the sum is unchanged.

    Returns the new basis and the index of the perturbed element (``-1`` when
    every retry failed and a fresh random basis was drawn instead).
    """
    L = basis.length
    hi = 1 << basis.bit_depth
    steps = np.asarray(steps)
    for _ in range(max_retries):
        i = int(rng.integers(L))
        step = int(steps[rng.integers(steps.size)]) * (1 if rng.random() < 0.5 else -1)
        if L < 2:
            break
        j = int(rng.integers(L - 1))
        j += j >= i
        w = list(basis.weights)
        new_i = min(max(w[i] + step, 1), hi)
        delta = new_i - w[i]
        if delta == 0:
            continue
        w[i] = new_i
        w[j] -= delta
        if not 1 <= w[j] <= hi:
            continue
        cand = Basis(tuple(w), basis.bit_depth)
        if cand.covers:
            return cand, i
    return random_basis(basis.bit_depth, L, rng), -1


def neighbor(basis: Basis, rng: np.random.Generator, steps=(1, 2, 4), max_retries: int = 100) -> Basis:
    return neighbor_move(basis, rng, steps, max_retries)[0]


def metropolis_accept(delta: float, temperature: float, u: float) -> bool:
    if delta <= 0:
        return True
    return u < math.exp(-delta / temperature)


def calibrate_temperature(basis: Basis, samples: ObjectiveSamples, rng: np.random.Generator,
                          steps, moves: int) -> float:
    """Temperature at which a typical (median) worsening move is accepted half the time."""
    f0 = sampled_objective(basis, samples)[0]
    worse = []
    for _ in range(moves):
        g = sampled_objective(neighbor(basis, rng, steps), samples)[0]
        if math.isfinite(g) and g > f0:
            worse.append(g - f0)
    if not worse:
        return max(1.0, 1e-3 * f0)
    return float(np.median(worse)) / math.log(2.0)


def _run_restart(args) -> dict:
    cfg, model, ss, index = args
    rng = np.random.default_rng(ss)
    samples = ObjectiveSamples.draw(model, cfg.samples, rng)
    cur = random_basis(cfg.bit_depth, cfg.length, rng)
    f = sampled_objective(cur, samples)[0]
    temp = cfg.initial_temperature
    if temp is None:
        temp = calibrate_temperature(cur, samples, rng, cfg.steps, cfg.calibration_moves)
    t0 = temp
    best, best_f = cur, f
    every = max(1, cfg.iterations // max(cfg.trace_points, 1))
    trace = [f]
    accepted = 0
    for it in range(1, cfg.iterations + 1):
        cand = neighbor(cur, rng, cfg.steps)
        g = sampled_objective(cand, samples)[0]
        if math.isfinite(g) and metropolis_accept(g - f, temp, rng.random()):
            cur, f = cand, g
            accepted += 1
            if f < best_f:
                best, best_f = cur, f
        temp *= cfg.cooling
        if it % every == 0:
            trace.append(f)
    return {
        "restart": index,
        "weights": list(best.weights),
        "sampled": best_f,
        "initial_temperature": t0,
        "accepted": accepted,
        "trace": trace,
    }


def anneal(config: AnnealConfig, model: TransitionModel | None = None) -> SearchResult:
    """Multi-start simulated annealing on the sampled objective.

    Every restart runs from its own seeded stream with its own fixed objective
    draws; each restart's best basis is then re-scored with the exact
    objective and the lowest score wins (earliest restart on ties).
    """
    check_feasible(config.bit_depth, config.length)
    model = model or TransitionModel.uniform(config.bit_depth)
    t_start = time.perf_counter()
    streams = np.random.SeedSequence(config.seed).spawn(config.restarts + 1)
    jobs = [(config, model, streams[r], r) for r in range(config.restarts)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            runs = list(ex.map(_run_restart, jobs))
    else:
        runs = [_run_restart(j) for j in jobs]

    scored: dict[tuple[int, ...], float] = {}
    best_so_far = []
    best = None
    for run in runs:
        key = tuple(run["weights"])
        if key not in scored:
            scored[key] = objective(Basis(key, config.bit_depth), model)
        run["full"] = scored[key]
        if best is None or run["full"] < best[0]:
            best = (run["full"], key)
        best_so_far.append(best[0])

    basis = Basis(best[1], config.bit_depth)
    check = ObjectiveSamples.draw(model, max(config.samples, 10_000),
                                  np.random.default_rng(streams[-1]))
    mean, half = sampled_objective(basis, check)
    th = thermometer_metric(model)
    return SearchResult(
        basis=basis,
        objective=best[0],
        normalized=best[0] / th if th else math.nan,
        restarts=runs,
        best_so_far=best_so_far,
        wall_time=time.perf_counter() - t_start,
        config=config.to_json(),
        check_sampled=mean,
        check_halfwidth=half,
        model=model.to_json(),
    )


def full_scale_bases(bit_depth: int, length: int):
    """Every non-decreasing weight tuple of the given length summing to 2^N - 1."""
    target = (1 << bit_depth) - 1

    def rec(prefix, remaining, slots, lo):
        if slots == 0:
            if remaining == 0:
                yield tuple(prefix)
            return
        for v in range(lo, remaining // slots + 1):
            prefix.append(v)
            yield from rec(prefix, remaining - v, slots - 1, v)
            prefix.pop()

    yield from rec([], target, length, 1)


def exhaustive_search(bit_depth: int, length: int, model: TransitionModel | None = None,
                      max_candidates: int = 200_000) -> tuple[Basis, float]:
    """Brute-force minimum of the exact objective; only for toy sizes."""
    check_feasible(bit_depth, length)
    model = model or TransitionModel.uniform(bit_depth)
    best = None
    for k, w in enumerate(full_scale_bases(bit_depth, length)):
        if k >= max_candidates:
            raise ValidationError("search space too large for exhaustive enumeration")
        b = Basis(w, bit_depth)
        if not b.covers:
            continue
        f = objective(b, model)
        if best is None or f < best[1]:
            best = (b, f)
    if best is None:
        raise InfeasibleError(f"no covering basis for N={bit_depth}, L={length}")
    return best
