"""Tree-structured Parzen Estimator over sorted bin-boundary vectors.

Each interior boundary is a coordinate on a discrete candidate grid. Points are
kept sorted and de-duplicated, so every evaluated vector is a valid binning.
Several spaces can be searched jointly (e.g. size and time boundaries); the
objective then receives one interior vector per space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class SearchSpace:
    n_bins: int
    cap: float
    candidate_values: np.ndarray

    def __post_init__(self):
        cv = np.asarray(self.candidate_values)
        object.__setattr__(self, "candidate_values", cv)
        if self.n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        if self.n_bins - 1 > len(cv):
            raise ValueError("not enough candidate values for the requested bins")
        if len(cv) and (np.any(np.diff(cv) <= 0) or cv[0] <= 0 or cv[-1] >= self.cap):
            raise ValueError("candidates must be strictly increasing inside (0, cap)")

    @property
    def n_dims(self) -> int:
        return self.n_bins - 1

    @classmethod
    def sizes(cls, n_bins: int, cap: int = 1500) -> "SearchSpace":
        return cls(n_bins, cap, np.arange(1, cap))

    @classmethod
    def times(cls, n_bins: int, tau: float, step: float) -> "SearchSpace":
        m = int(round(tau / step))
        return cls(n_bins, tau, np.arange(1, m) * step)

    def decode(self, idx) -> np.ndarray:
        return self.candidate_values[np.asarray(idx, dtype=np.int64)]

    def boundaries(self, idx) -> np.ndarray:
        return np.concatenate([[0], self.decode(idx), [self.cap]])


@dataclass(frozen=True)
class TpeConfig:
    n_iterations: int = 200
    n_startup_random: int = 20
    gamma: float = 0.25
    n_ei_candidates: int = 24
    seed: int = 0
    good_split: str = "sqrt"  # good set size: ceil(gamma*sqrt(n)) or ceil(gamma*n) for "quantile"

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0, 1)")
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if not 0 <= self.n_startup_random < self.n_iterations:
            raise ValueError("n_startup_random must be smaller than n_iterations")
        if self.n_ei_candidates < 1:
            raise ValueError("n_ei_candidates must be >= 1")
        if self.good_split not in ("sqrt", "quantile"):
            raise ValueError("good_split must be 'sqrt' or 'quantile'")

    def n_good(self, n_trials: int) -> int:
        scale = math.sqrt(n_trials) if self.good_split == "sqrt" else n_trials
        return max(1, int(math.ceil(self.gamma * scale)))


@dataclass
class Trial:
    boundaries: np.ndarray | tuple  # interior values, one array per space
    objective: float
    index: np.ndarray = field(repr=False, default=None)

    def to_json(self) -> dict:
        b = self.boundaries
        plain = [_plain_list(v) for v in b] if isinstance(b, tuple) else _plain_list(b)
        return {"boundaries": plain, "objective": self.objective}


def _plain_list(v):
    return [int(x) if float(x).is_integer() else float(x) for x in np.asarray(v).tolist()]


def _repair(v: np.ndarray, m: int) -> np.ndarray:
    """Sort, then push duplicates up by one grid step (and back down at the top)."""
    v = np.sort(np.clip(v, 0, m - 1))
    for j in range(1, len(v)):
        if v[j] <= v[j - 1]:
            v[j] = v[j - 1] + 1
    if len(v) and v[-1] > m - 1:
        v[-1] = m - 1
        for j in range(len(v) - 2, -1, -1):
            if v[j] >= v[j + 1]:
                v[j] = v[j + 1] - 1
    return v


class _Parzen:
    """1-D Gaussian mixture over grid positions plus a uniform prior component."""

    def __init__(self, points: np.ndarray, m: int):
        self.m = m
        self.mu = np.asarray(points, dtype=np.float64)
        n = len(self.mu)
        sigma = np.empty(n)
        for i in range(n):
            others = np.abs(np.delete(self.mu, i) - self.mu[i])
            others = others[others > 0]
            sigma[i] = others.min() if len(others) else 0.0
        self.sigma = np.clip(sigma, 1.0, max(1.0, m / 4.0))
        self.prior_w = 1.0 / (n + 1)

    def sample(self, rng, comp: np.ndarray) -> np.ndarray:
        """Draw one value per entry of ``comp`` (kernel index, or n for the prior)."""
        n = len(self.mu)
        size = len(comp)
        out = np.empty(size)
        prior = comp == n
        out[prior] = rng.uniform(0, self.m - 1, size=int(prior.sum()))
        k = comp[~prior]
        out[~prior] = rng.normal(self.mu[k], self.sigma[k])
        return np.clip(np.rint(out), 0, self.m - 1)

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)[:, None]
        z = (x - self.mu) / self.sigma
        comp = np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2 * math.pi))
        dens = (1 - self.prior_w) * comp.mean(axis=1) + self.prior_w / self.m
        return np.log(dens)


def _random_point(rng, space: SearchSpace) -> np.ndarray:
    m = len(space.candidate_values)
    return np.sort(rng.choice(m, size=space.n_dims, replace=False))


def _split(spaces, x):
    out, start = [], 0
    for s in spaces:
        out.append(x[start:start + s.n_dims])
        start += s.n_dims
    return out


def tpe_optimize(space: SearchSpace | Sequence[SearchSpace], objective: Callable, cfg: TpeConfig = TpeConfig()):
    """Maximize ``objective`` over boundary vectors. Returns (best Trial, history)."""
    joint = not isinstance(space, SearchSpace)
    spaces = list(space) if joint else [space]
    if any(len(s.candidate_values) == 0 and s.n_dims > 0 for s in spaces):
        raise ValueError("empty search space")
    rng = np.random.default_rng(cfg.seed)
    sizes = [len(s.candidate_values) for s in spaces]
    dim_m = np.concatenate([[m] * s.n_dims for m, s in zip(sizes, spaces)]).astype(np.int64)

    history: list[Trial] = []
    seen: set[tuple] = set()

    def evaluate(x: np.ndarray) -> Trial:
        parts = _split(spaces, x)
        values = tuple(s.decode(p) for s, p in zip(spaces, parts))
        score = float(objective(*values)) if joint else float(objective(values[0]))
        t = Trial(values if joint else values[0], score, x.copy())
        history.append(t)
        seen.add(tuple(x.tolist()))
        return t

    def repair(x):
        return np.concatenate([_repair(p, m) for p, m in zip(_split(spaces, x), sizes)]).astype(np.int64)

    for it in range(cfg.n_iterations):
        if it < max(cfg.n_startup_random, 1) or len(history) < 2 or len(dim_m) == 0:
            x = np.concatenate([_random_point(rng, s) for s in spaces]).astype(np.int64)
            evaluate(x)
            continue
        xs = np.array([t.index for t in history])
        ys = np.array([t.objective for t in history])
        n_good = cfg.n_good(len(history))
        order = np.argsort(-ys, kind="stable")
        good, bad = xs[order[:n_good]], xs[order[n_good:]]
        cand = np.empty((cfg.n_ei_candidates, len(dim_m)))
        score = np.zeros(cfg.n_ei_candidates)
        lgs = []
        for j, m in enumerate(dim_m):
            lj, gj = _Parzen(good[:, j], m), _Parzen(bad[:, j], m)
            cand[:, j] = lj.sample(rng, rng.integers(0, n_good + 1, size=cfg.n_ei_candidates))
            lgs.append((lj, gj))
        cand = np.array([repair(c) for c in cand.astype(np.int64)])
        for j, (lj, gj) in enumerate(lgs):
            score += lj.logpdf(cand[:, j]) - gj.logpdf(cand[:, j])
        ranked = np.argsort(-score, kind="stable")
        pick = next((i for i in ranked if tuple(cand[i].tolist()) not in seen), ranked[0])
        evaluate(cand[pick])

    best = max(history, key=lambda t: t.objective)  # first maximum wins ties
    return best, history


def random_search(space: SearchSpace, objective: Callable, n_iterations: int, seed: int = 0):
    """Baseline: independent uniformly random boundary vectors."""
    rng = np.random.default_rng(seed)
    history = []
    for _ in range(n_iterations):
        x = _random_point(rng, space)
        v = space.decode(x)
        history.append(Trial(v, float(objective(v)), x))
    return max(history, key=lambda t: t.objective), history
