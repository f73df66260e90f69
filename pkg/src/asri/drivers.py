"""Sampling of iterated Ito integrals for time, Wiener and compensated jump drivers.

Samples are batched over paths: every integral is an array of shape (P,).
Word convention: ``I_{ab} = int (int dX^a) dX^b``, so the first letter is the
innermost integrator.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError, MissingIntegralError, UnsupportedWordError
from .words import EMPTY, TIME, Alphabet, JumpSpec, Letter, Word, format_word, jump, wiener


@dataclass(frozen=True)
class DriverConfig:
    """Driving noise for one experiment.

    Args:
        wiener_count: number of Wiener processes.
        jumps: compound Poisson drivers with finite jump-size laws.
        fourier_terms: Fourier terms ``p`` for Levy areas (at least 1).
        grid_points: intervals of the uniform part of the merged grid used on
            steps with jumps; defaults to ``5 * (p + 1)``.
        seed: master seed.
        step: default step size ``h``.
        block_size: paths sharing one random stream per step.
    """

    wiener_count: int = 1
    jumps: tuple = ()
    fourier_terms: int = 10
    grid_points: int | None = None
    seed: int = 0
    step: float = 0.1
    block_size: int = 128

    def __post_init__(self):
        object.__setattr__(self, "jumps", tuple(self.jumps))
        if self.wiener_count < 0:
            raise DomainError("wiener_count must be non-negative")
        if self.fourier_terms < 1:
            raise DomainError("at least one Fourier term is required")
        if self.grid_points is not None and self.grid_points < 2:
            raise DomainError("the merged grid needs at least 2 points")
        if not self.step > 0:
            raise DomainError("step size must be positive")
        if self.block_size < 1:
            raise DomainError("block_size must be positive")

    @property
    def grid(self) -> int:
        return self.grid_points if self.grid_points is not None else 5 * (self.fourier_terms + 1)

    def alphabet(self, max_grade: int = 3) -> Alphabet:
        return Alphabet(self.wiener_count, self.jumps, max_grade)

    def with_(self, **changes) -> "DriverConfig":
        data = {f: getattr(self, f) for f in self.__dataclass_fields__}
        data.update(changes)
        return DriverConfig(**data)

    def digest(self) -> str:
        blob = json.dumps(
            {
                "d": self.wiener_count,
                "jumps": [[s.index, str(s.intensity), [[str(v), str(w)] for v, w in s.sizes]] for s in self.jumps],
                "p": self.fourier_terms,
                "M": self.grid,
                "seed": self.seed,
                "h": repr(self.step),
                "block": self.block_size,
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class JumpEvents:
    """Flat list of jump events, sorted by (path, time)."""

    path: np.ndarray
    time: np.ndarray
    size: np.ndarray

    @classmethod
    def empty(cls) -> "JumpEvents":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0))

    def __len__(self) -> int:
        return len(self.path)

    def counts(self, n_paths: int) -> np.ndarray:
        return np.bincount(self.path, minlength=n_paths)

    def power_sum(self, p: int, n_paths: int, weights: np.ndarray | None = None) -> np.ndarray:
        vals = self.size**p if weights is None else self.size**p * weights
        return np.bincount(self.path, weights=vals, minlength=n_paths)

    def select(self, mask: np.ndarray) -> "JumpEvents":
        return JumpEvents(self.path[mask], self.time[mask], self.size[mask])

    @staticmethod
    def concat(parts: Sequence["JumpEvents"]) -> "JumpEvents":
        if not parts:
            return JumpEvents.empty()
        path = np.concatenate([e.path for e in parts])
        time = np.concatenate([e.time for e in parts])
        size = np.concatenate([e.size for e in parts])
        order = np.lexsort((time, path))
        return JumpEvents(path[order], time[order], size[order])


@dataclass
class FinePath:
    """One path on a grid that contains every jump time.

    ``times`` starts at 0 and ends at ``h``; ``values`` has shape
    (len(times), d) with the Wiener values (starting at zero).  ``events``
    maps a jump index to (times, sizes) arrays.
    """

    times: np.ndarray
    values: np.ndarray
    events: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    @property
    def h(self) -> float:
        return float(self.times[-1])


@dataclass
class StepSample:
    """Iterated integrals over one step for a batch of paths."""

    t0: float
    h: float
    dW: np.ndarray
    events: dict[int, JumpEvents]
    integrals: dict[Word, np.ndarray]
    paths: list[FinePath] | None = None

    @property
    def n_paths(self) -> int:
        return self.dW.shape[0]

    def integral(self, w: Sequence[Letter]) -> np.ndarray:
        w = tuple(w)
        try:
            return self.integrals[w]
        except KeyError:
            raise MissingIntegralError(f"sample lacks the integral of {format_word(w)}") from None


# ---------------------------------------------------------------------------
# random streams


def block_rng(seed: int, block: int, step: int) -> np.random.Generator:
    """Counter-based stream for one block of paths at one step."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block, step])))


# ---------------------------------------------------------------------------
# Levy areas


def fourier_area(dWi, dWj, Xi, Yi, Xj, Yj, h: float) -> np.ndarray:
    """Truncated Fourier Levy area; coefficient arrays have the mode on the last axis."""
    k = np.arange(1, Xi.shape[-1] + 1)
    c = math.sqrt(2.0 / h)
    bi = Yi + c * np.asarray(dWi)[..., None]
    bj = Yj + c * np.asarray(dWj)[..., None]
    return (h / (2 * math.pi)) * np.sum((Xi * bj - bi * Xj) / k, axis=-1)


def levy_area_fourier(dW1, dW2, p: int, h: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Sample (I_12, I_21) given the increments, with ``p`` Fourier terms.

    The pair satisfies ``I_12 + I_21 = dW1 * dW2`` exactly.
    """
    if p < 1:
        raise DomainError("at least one Fourier term is required")
    dW1 = np.asarray(dW1, dtype=float)
    dW2 = np.asarray(dW2, dtype=float)
    shape = np.broadcast(dW1, dW2).shape
    X1, Y1, X2, Y2 = rng.standard_normal((4,) + shape + (p,))
    area = fourier_area(dW1, dW2, X1, Y1, X2, Y2, h)
    i12 = 0.5 * dW1 * dW2 + area
    return i12, dW1 * dW2 - i12


def fourier_path(dW: float, X: np.ndarray, Y: np.ndarray, h: float, n: int) -> np.ndarray:
    """Truncated Fourier Brownian path at ``n + 1`` uniform points of [0, h]."""
    s = np.linspace(0.0, h, n + 1)
    k = np.arange(1, len(X) + 1)
    phase = 2 * math.pi * np.outer(s, k) / h
    osc = (np.cos(phase) - 1.0) * X + np.sin(phase) * Y
    return (s / h) * dW - math.sqrt(h / 2) / math.pi * (osc / k).sum(axis=1)


def fourier_time_integral(dW, X, h: float, tail: np.ndarray) -> np.ndarray:
    """int_0^h W ds consistent with the Fourier coefficients, plus the tail modes."""
    p = X.shape[-1]
    k = np.arange(1, p + 1)
    tail_var = h**3 / (2 * math.pi**2) * max(math.pi**2 / 6 - float(np.sum(1.0 / k**2)), 0.0)
    return 0.5 * h * dW + h * math.sqrt(h / 2) / math.pi * np.sum(X / k, axis=-1) + math.sqrt(tail_var) * tail


# ---------------------------------------------------------------------------
# required words


def supported_words(alphabet: Alphabet) -> list[Word]:
    return alphabet.words(2)


def _check_required(required: Iterable[Word] | None, alphabet: Alphabet) -> set[Word]:
    base = set(supported_words(alphabet))
    if required is None:
        return base
    req = {tuple(w) for w in required}
    bad = sorted(w for w in req if w not in base)
    if bad:
        raise UnsupportedWordError(bad, "sample_step provides words of length at most 2 over the configured alphabet")
    return req | {(a,) for a in alphabet.letters} | {EMPTY}


def _needs_area(required: set[Word]) -> bool:
    return any(len(w) == 2 and w[0].is_wiener and w[1].is_wiener and w[0] != w[1] for w in required)


# ---------------------------------------------------------------------------
# jump helpers


def _draw_events(rng: np.random.Generator, spec: JumpSpec, n: int, h: float) -> JumpEvents:
    lam = float(spec.intensity)
    counts = rng.poisson(lam * h, size=n)
    total = int(counts.sum())
    path = np.repeat(np.arange(n), counts)
    time = rng.uniform(0.0, h, size=total)
    sizes = np.array([float(s) for s, _ in spec.sizes])
    weights = np.array([float(w) for _, w in spec.sizes])
    if len(sizes) == 1:
        size = np.full(total, sizes[0])
    else:
        size = sizes[rng.choice(len(sizes), size=total, p=weights)]
    order = np.lexsort((time, path))
    return JumpEvents(path[order], time[order], size[order])


def _left_sums(a: JumpEvents, pa: int, b: JumpEvents, n: int) -> np.ndarray:
    """For every event of ``b``: sum of size^pa over ``a`` events strictly earlier on its path."""
    if len(b) == 0:
        return np.zeros(0)
    path = np.concatenate([a.path, b.path])
    time = np.concatenate([a.time, b.time])
    flag = np.concatenate([np.ones(len(a)), np.zeros(len(b))])
    weight = np.concatenate([a.size**pa, np.zeros(len(b))])
    order = np.lexsort((flag, time, path))
    w_sorted = weight[order]
    exclusive = np.cumsum(w_sorted) - w_sorted
    totals = np.bincount(a.path, weights=a.size**pa, minlength=n)
    offset = np.cumsum(totals) - totals
    vals = exclusive - offset[path[order]]
    out = np.empty(len(path))
    out[order] = vals
    return out[len(a):]


def _jump_pair(a: JumpEvents, pa: int, ma: float, b: JumpEvents, qb: int, mb: float, h: float, n: int) -> np.ndarray:
    """I over the word (J_a^pa, J_b^qb) for compensated power brackets."""
    left = _left_sums(a, pa, b, n) - ma * b.time
    jumps = np.bincount(b.path, weights=b.size**qb * left, minlength=n)
    area = a.power_sum(pa, n, h - a.time) - ma * h * h / 2
    return jumps - mb * area


# ---------------------------------------------------------------------------
# sampling


def _wiener_letters(d: int) -> list[Letter]:
    return [wiener(i) for i in range(1, d + 1)]


def _grid_branch(rng, h: float, M: int, ev_times: list[np.ndarray], d: int):
    """Brownian values on uniform nodes merged with the event times.

    Returns (times, W, positions) where ``positions[k]`` locates the k-th
    event list in the sorted grid.
    """
    q = len(ev_times)
    kmax = max((len(t) for t in ev_times), default=0)
    nodes = np.linspace(0.0, h, M + 1)
    raw = np.full((q, M + 1 + kmax), h)
    raw[:, : M + 1] = nodes
    for r, t in enumerate(ev_times):
        raw[r, M + 1 : M + 1 + len(t)] = t
    order = np.argsort(raw, axis=1, kind="stable")
    times = np.take_along_axis(raw, order, axis=1)
    inverse = np.empty_like(order)
    np.put_along_axis(inverse, order, np.arange(raw.shape[1])[None, :].repeat(q, 0), axis=1)
    dt = np.diff(times, axis=1)
    incr = rng.standard_normal((q, dt.shape[1], d)) * np.sqrt(dt)[..., None]
    W = np.zeros((q, times.shape[1], d))
    np.cumsum(incr, axis=1, out=W[:, 1:])
    positions = [inverse[r, M + 1 : M + 1 + len(t)] for r, t in enumerate(ev_times)]
    return times, W, positions


def sample_step(
    config: DriverConfig,
    required: Iterable[Word] | None = None,
    *,
    paths: int = 1,
    step_index: int = 0,
    h: float | None = None,
    fourier_terms: int | None = None,
    grid_points: int | None = None,
    keep_paths: bool = False,
    force_grid: bool = False,
    first_block: int = 0,
) -> StepSample:
    """Sample all required integrals of length at most 2 over one step.

    Paths without jumps use exact Gaussian formulas and Fourier Levy areas;
    paths with at least one jump (and every path when ``force_grid`` or
    ``keep_paths`` is set) use Brownian values on a merged grid, exact jump
    sums and trapezoidal Wiener integrals.

    Paths are drawn in blocks of ``config.block_size``; ``first_block``
    offsets the block numbering so a chunk of paths starting at block ``b``
    reproduces exactly the draws it gets inside a larger batch.
    """
    alphabet = config.alphabet(2)
    req = _check_required(required, alphabet)
    h = config.step if h is None else float(h)
    p = config.fourier_terms if fourier_terms is None else int(fourier_terms)
    if p < 1:
        raise DomainError("at least one Fourier term is required")
    M = grid_points if grid_points is not None else (config.grid_points if config.grid_points is not None else 5 * (p + 1))
    force_grid = force_grid or keep_paths
    d = config.wiener_count
    area = _needs_area(req)
    block = config.block_size

    dW_parts, i0_parts, area_parts, path_store = [], [], [], []
    event_parts: dict[int, list] = {s.index: [] for s in config.jumps}
    wtau_parts: dict[int, list] = {s.index: [] for s in config.jumps}
    start = 0
    for b in range(math.ceil(paths / block)):
        n = min(block, paths - start)
        rng = block_rng(config.seed, first_block + b, step_index)
        evs = {s.index: _draw_events(rng, s, n, h) for s in config.jumps}
        has_jump = np.zeros(n, dtype=bool)
        for e in evs.values():
            has_jump[e.path] = True
        grid_mask = np.ones(n, dtype=bool) if force_grid else has_jump
        free = np.flatnonzero(~grid_mask)
        gridp = np.flatnonzero(grid_mask)

        dW = np.zeros((n, d))
        i0 = np.zeros((n, d))
        areas = np.zeros((n, d, d))
        # paths without jumps
        if len(free) and d:
            z = rng.standard_normal((len(free), d))
            dW[free] = math.sqrt(h) * z
            if area and d > 1:
                X = rng.standard_normal((len(free), d, p))
                Y = rng.standard_normal((len(free), d, p))
                tail = rng.standard_normal((len(free), d))
                i0[free] = fourier_time_integral(dW[free], X, h, tail)
                for i in range(d):
                    for j in range(i + 1, d):
                        a = fourier_area(dW[free, i], dW[free, j], X[:, i], Y[:, i], X[:, j], Y[:, j], h)
                        areas[free, i, j] = a
                        areas[free, j, i] = -a
            else:
                i0[free] = 0.5 * h * dW[free] + math.sqrt(h**3 / 12) * rng.standard_normal((len(free), d))
        # paths on the merged grid
        wtau = {k: np.zeros((len(e), d)) for k, e in evs.items()}
        if len(gridp):
            ev_times = []
            ev_slices = []
            for r in gridp:
                ts, sl = [], []
                for key, e in evs.items():
                    sel = np.flatnonzero(e.path == r)
                    ts.append(e.time[sel])
                    sl.append((key, sel))
                ev_times.append(np.concatenate(ts) if ts else np.zeros(0))
                ev_slices.append(sl)
            times, W, positions = _grid_branch(rng, h, M, ev_times, max(d, 1))
            W = W[..., :d]
            dW[gridp] = W[:, -1]
            dt = np.diff(times, axis=1)
            mid = 0.5 * (W[:, 1:] + W[:, :-1])
            i0[gridp] = np.einsum("qk,qkd->qd", dt, mid)
            if d > 1 and area:
                trap = np.einsum("qki,qkj->qij", mid, np.diff(W, axis=1))
                areas[gridp] = 0.5 * (trap - np.transpose(trap, (0, 2, 1)))
            for row, r in enumerate(gridp):
                pos = positions[row]
                offset = 0
                for key, sel in ev_slices[row]:
                    wtau[key][sel] = W[row, pos[offset : offset + len(sel)]]
                    offset += len(sel)
                if keep_paths:
                    path_store.append(
                        FinePath(
                            times[row].copy(),
                            W[row].copy(),
                            {key: (evs[key].time[sel].copy(), evs[key].size[sel].copy()) for key, sel in ev_slices[row]},
                        )
                    )
        dW_parts.append(dW)
        i0_parts.append(i0)
        area_parts.append(areas)
        for key, e in evs.items():
            event_parts[key].append(JumpEvents(e.path + start, e.time, e.size))
            wtau_parts[key].append(wtau[key])
        start += n

    dW = np.concatenate(dW_parts) if dW_parts else np.zeros((0, d))
    i0 = np.concatenate(i0_parts) if i0_parts else np.zeros((0, d))
    areas = np.concatenate(area_parts) if area_parts else np.zeros((0, d, d))
    events = {k: JumpEvents.concat(v) if len(v) > 1 else (v[0] if v else JumpEvents.empty()) for k, v in event_parts.items()}
    wtaus = {k: np.concatenate(v) if v else np.zeros((0, d)) for k, v in wtau_parts.items()}
    integrals = _assemble(alphabet, req, h, dW, i0, areas, events, wtaus, paths)
    return StepSample(step_index * h, h, dW, events, integrals, path_store if keep_paths else None)


def _assemble(alphabet, req, h, dW, i0, areas, events, wtaus, P) -> dict[Word, np.ndarray]:
    out: dict[Word, np.ndarray] = {EMPTY: np.ones(P)}
    d = alphabet.wiener_count
    single: dict[Letter, np.ndarray] = {TIME: np.full(P, h)}
    for i in range(d):
        single[wiener(i + 1)] = dW[:, i]
    jump_info = {}
    for a in alphabet.letters:
        if a.is_jump:
            ev = events[a.index]
            m = float(alphabet.moment(a.index, a.power))
            jump_info[a] = (ev, a.power, m)
            single[a] = ev.power_sum(a.power, P) - m * h
    for a, v in single.items():
        out[(a,)] = v
    time_int: dict[Letter, np.ndarray] = {}  # int_0^h X^a ds
    for a in alphabet.letters:
        if a.is_time:
            time_int[a] = np.full(P, h * h / 2)
        elif a.is_wiener:
            time_int[a] = i0[:, a.index - 1]
        else:
            ev, p, m = jump_info[a]
            time_int[a] = ev.power_sum(p, P, h - ev.time) - m * h * h / 2

    for w in req:
        if len(w) != 2 or w in out:
            continue
        a, b = w
        if a.is_time and b.is_time:
            val = np.full(P, h * h / 2)
        elif b.is_time:
            val = time_int[a]
        elif a.is_time:
            val = h * single[b] - time_int[b]
        elif a.is_wiener and b.is_wiener:
            i, j = a.index - 1, b.index - 1
            if i == j:
                val = 0.5 * (dW[:, i] ** 2 - h)
            else:
                val = 0.5 * dW[:, i] * dW[:, j] + areas[:, i, j]
        elif a.is_jump and b.is_wiener:
            ev, p, m = jump_info[a]
            j = b.index - 1
            wt = wtaus[a.index][:, j] if len(ev) else np.zeros(0)
            val = ev.power_sum(p, P, dW[ev.path, j] - wt) - m * (h * dW[:, j] - i0[:, j])
        elif a.is_wiener and b.is_jump:
            ev, p, m = jump_info[b]
            i = a.index - 1
            wt = wtaus[b.index][:, i] if len(ev) else np.zeros(0)
            ji = ev.power_sum(p, P, dW[ev.path, i] - wt) - m * (h * dW[:, i] - i0[:, i])
            val = dW[:, i] * single[b] - ji
        else:
            ea, pa, ma = jump_info[a]
            eb, qb, mb = jump_info[b]
            val = _jump_pair(ea, pa, ma, eb, qb, mb, h, P)
        out[w] = val
    return out


# ---------------------------------------------------------------------------
# Chen relation


def chen_aggregate(s1: StepSample, s2: StepSample, keep_events: bool = True) -> StepSample:
    """Integrals over the concatenation of two adjacent steps.

    ``I_w = sum over w = uv of I_u[first] * I_v[second]``; only words whose
    every prefix and suffix is present in both samples are produced.
    """
    if s1.n_paths != s2.n_paths:
        raise DomainError("samples must cover the same paths")
    words = set(s1.integrals) & set(s2.integrals)
    out: dict[Word, np.ndarray] = {}
    for w in words:
        total = None
        ok = True
        for k in range(len(w) + 1):
            u, v = w[:k], w[k:]
            iu = s1.integrals.get(u)
            iv = s2.integrals.get(v)
            if iu is None or iv is None:
                ok = False
                break
            term = iu * iv
            total = term if total is None else total + term
        if ok:
            out[w] = total
    events: dict[int, JumpEvents] = {}
    if keep_events:
        for key in set(s1.events) | set(s2.events):
            e1 = s1.events.get(key, JumpEvents.empty())
            e2 = s2.events.get(key, JumpEvents.empty())
            events[key] = JumpEvents.concat([e1, JumpEvents(e2.path, e2.time + s1.h, e2.size)])
    return StepSample(s1.t0, s1.h + s2.h, s1.dW + s2.dW, events, out)


def zero_sample(template: StepSample, t0: float | None = None) -> StepSample:
    """Zero-width step: the unit for :func:`chen_aggregate`."""
    P = template.n_paths
    integrals = {w: (np.ones(P) if not w else np.zeros(P)) for w in template.integrals}
    events = {k: JumpEvents.empty() for k in template.events}
    return StepSample(template.t0 + template.h if t0 is None else t0, 0.0, np.zeros_like(template.dW), events, integrals)


# ---------------------------------------------------------------------------
# brute-force oracle


def _increments(path: FinePath, a: Letter, alphabet: Alphabet):
    """Continuous increments per interval and jump increments at the right node."""
    times = path.times
    dt = np.diff(times)
    n = len(dt)
    zero = np.zeros(n)
    if a.is_time:
        return dt, zero, "time"
    if a.is_wiener:
        return np.diff(path.values[:, a.index - 1]), zero, "wiener"
    m = float(alphabet.moment(a.index, a.power))
    ts, vs = path.events.get(a.index, (np.zeros(0), np.zeros(0)))
    jumps = np.zeros(n)
    if len(ts):
        pos = np.searchsorted(times, ts, side="left") - 1
        pos = np.clip(pos, 0, n - 1)
        np.add.at(jumps, pos, vs**a.power)
    return -m * dt, jumps, "time"


def oracle_fine_grid(w: Sequence[Letter], path: FinePath, alphabet: Alphabet) -> float:
    """Brute-force I_w on a grid that contains every jump time.

    Wiener integrators use left-point (Ito) sums; time and compensator
    integrators use the trapezoid rule between nodes; each jump at a node
    multiplies the integrand's left limit.
    """
    w = tuple(w)
    for a in w:
        alphabet.check_letter(a)
    if not w:
        return 1.0
    n = len(path.times) - 1
    post = np.ones(n + 1)  # values at the nodes, after any jump there
    pre = np.ones(n + 1)  # left limits at the nodes
    for a in w:
        cont, jumps, kind = _increments(path, a, alphabet)
        if kind == "wiener":
            step = post[:-1] * cont
        else:
            step = 0.5 * (post[:-1] + pre[1:]) * cont
        kick = pre[1:] * jumps
        new_post = np.concatenate([[0.0], np.cumsum(step + kick)])
        new_pre = np.concatenate([[0.0], new_post[:-1] + step])
        post, pre = new_post, new_pre
    return float(post[-1])


def refine_path(path: FinePath, factor: int, rng: np.random.Generator) -> FinePath:
    """Insert ``factor - 1`` Brownian-bridge points into every interval."""
    if factor < 1:
        raise DomainError("refinement factor must be positive")
    if factor == 1:
        return path
    t = path.times
    frac = np.arange(factor) / factor
    new_t = np.concatenate([(t[:-1, None] + np.diff(t)[:, None] * frac[None, :]).ravel(), t[-1:]])
    d = path.values.shape[1]
    vals = np.empty((len(new_t), d))
    for i in range(len(t) - 1):
        dt = t[i + 1] - t[i]
        s = frac * dt
        steps = rng.standard_normal((factor, d)) * np.sqrt(dt / factor)
        free = np.vstack([np.zeros((1, d)), np.cumsum(steps, axis=0)])
        bridge = free[:-1] - (s / dt if dt > 0 else 0 * s)[:, None] * free[-1]
        vals[i * factor : (i + 1) * factor] = path.values[i] + bridge + (s / dt if dt > 0 else 0 * s)[:, None] * (path.values[i + 1] - path.values[i])
    vals[-1] = path.values[-1]
    return FinePath(new_t, vals, path.events)


# ---------------------------------------------------------------------------
# exact evaluation for time/jump words and pure Wiener powers


def _time_jump_integral(w: Word, h: float, events: Mapping[int, tuple[np.ndarray, np.ndarray]], alphabet: Alphabet) -> float:
    """Exact I_w for words over the time and jump letters (piecewise polynomials)."""
    from numpy.polynomial import Polynomial as Poly

    marks = sorted({0.0, h} | {float(t) for ts, _ in events.values() for t in ts})
    # F[k] = polynomial on each interval for the prefix of length k
    pieces = [Poly([1.0]) for _ in range(len(marks) - 1)]
    for a in w:
        if a.is_time:
            rate, jumps = 1.0, {}
        else:
            rate = -float(alphabet.moment(a.index, a.power))
            ts, vs = events.get(a.index, (np.zeros(0), np.zeros(0)))
            jumps = {}
            for t, v in zip(ts, vs):
                jumps[float(t)] = jumps.get(float(t), 0.0) + float(v) ** a.power
        pieces2 = []
        value = 0.0
        for k in range(len(marks) - 1):
            lo, hi = marks[k], marks[k + 1]
            anti = (pieces[k] * rate).integ()
            poly = anti - anti(lo) + value
            pieces2.append(poly)
            # a jump at the right node multiplies the integrand's left limit
            value = poly(hi) + jumps.get(hi, 0.0) * pieces[k](hi)
        pieces = pieces2
    return float(value) if w else 1.0


def hermite_power(dW: np.ndarray, h: float, k: int) -> np.ndarray:
    """I over k copies of one Wiener letter: h^{k/2} He_k(dW/sqrt h) / k!."""
    x = np.asarray(dW, dtype=float) / math.sqrt(h)
    prev, cur = np.ones_like(x), x
    if k == 0:
        return prev
    for n in range(1, k):
        prev, cur = cur, x * cur - n * prev
    return h ** (k / 2) * cur / math.factorial(k)


def exact_integral(w: Sequence[Letter], sample: StepSample, path_index: int, alphabet: Alphabet) -> float | None:
    """Exact I_w on one path, or ``None`` if the word has no closed form here.

    Covers the sampled words of length at most 2, words over the time and
    jump letters of any length, and powers of a single Wiener letter.
    """
    w = tuple(w)
    if len(w) <= 2 and w in sample.integrals:
        return float(sample.integrals[w][path_index])
    if all(not a.is_wiener for a in w):
        events = {}
        for key, ev in sample.events.items():
            sel = ev.path == path_index
            events[key] = (ev.time[sel], ev.size[sel])
        return _time_jump_integral(w, sample.h, events, alphabet)
    if len(set(w)) == 1 and w[0].is_wiener:
        return float(hermite_power(sample.dW[path_index, w[0].index - 1], sample.h, len(w)))
    return None


# ---------------------------------------------------------------------------
# binary dump


_MAGIC = b"ASRIDRV1"


def dump_samples(target: str | Path, samples: Sequence[StepSample], config: DriverConfig) -> None:
    """Write samples as little-endian float64 blocks after a JSON header."""
    if not samples:
        raise DomainError("nothing to dump")
    words = sorted(samples[0].integrals, key=lambda w: (len(w), [tuple(a) for a in w]))
    header = json.dumps(
        {
            "config_sha256": config.digest(),
            "paths": samples[0].n_paths,
            "steps": len(samples),
            "wiener": config.wiener_count,
            "words": [format_word(w) for w in words],
        }
    ).encode()
    with open(target, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for s in samples:
            fh.write(struct.pack("<dd", s.t0, s.h))
            fh.write(np.ascontiguousarray(s.dW, dtype="<f8").tobytes())
            for w in words:
                fh.write(np.ascontiguousarray(s.integrals[w], dtype="<f8").tobytes())


def load_samples(source: str | Path) -> tuple[dict, list[StepSample]]:
    from .words import parse_word

    data = Path(source).read_bytes()
    if data[:8] != _MAGIC:
        raise DomainError("not a driver dump")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16 : 16 + hlen])
    pos = 16 + hlen
    P, d = header["paths"], header["wiener"]
    words = [parse_word(t) for t in header["words"]]
    samples = []
    for _ in range(header["steps"]):
        t0, h = struct.unpack("<dd", data[pos : pos + 16])
        pos += 16
        dW = np.frombuffer(data, dtype="<f8", count=P * d, offset=pos).reshape(P, d).copy()
        pos += 8 * P * d
        integrals = {}
        for w in words:
            integrals[w] = np.frombuffer(data, dtype="<f8", count=P, offset=pos).copy()
            pos += 8 * P
        samples.append(StepSample(t0, h, dW, {}, integrals))
    return header, samples
