"""Synthetic labeled flow corpora with planted class structure."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .flows import Flow, FlowKey, LabeledDataset, PacketRecord

SIZE_MAX = 1500


@dataclass(frozen=True)
class ClassProfile:
    """Generative description of one traffic class.

    ``size_mixture`` holds ``(lo, hi, weight)`` components sampled uniformly
    over integer sizes in ``[lo, hi)``. ``rate_profile`` holds
    ``(start, end, packets_per_second)`` segments. With ``early_signal=False``
    packets before ``onset`` are drawn from ``background_mixture`` instead.
    """

    name: str
    size_mixture: tuple
    rate_profile: tuple = ((0.0, math.inf, 20.0),)
    direction_split: float = 0.5
    early_signal: bool = True
    onset: float = 0.0
    background_mixture: tuple = ((1, SIZE_MAX, 1.0),)

    def __post_init__(self):
        for mix in (self.size_mixture, self.background_mixture):
            total = sum(w for _, _, w in mix)
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"{self.name}: mixture weights sum to {total}, not 1")
            for lo, hi, _ in mix:
                if not (1 <= lo < hi <= SIZE_MAX):
                    raise ValueError(f"{self.name}: interval [{lo},{hi}) outside [1,{SIZE_MAX}]")
        if not 0.0 <= self.direction_split <= 1.0:
            raise ValueError("direction_split must be in [0, 1]")

    def size_pmf(self, mixture=None) -> np.ndarray:
        """Probability of each integer size 0..SIZE_MAX-1 under a mixture."""
        pmf = np.zeros(SIZE_MAX)
        for lo, hi, w in self.size_mixture if mixture is None else mixture:
            pmf[lo:hi] += w / (hi - lo)
        return pmf


def _sample_sizes(rng, mixture, n):
    weights = np.array([w for _, _, w in mixture])
    comp = rng.choice(len(mixture), size=n, p=weights / weights.sum())
    lo = np.array([m[0] for m in mixture])[comp]
    hi = np.array([m[1] for m in mixture])[comp]
    return rng.integers(lo, hi)


def _arrivals(rng, rate_profile, tau_max):
    # first packet opens the flow at t=0; exponential gaps, rate piecewise constant
    times = [0.0]
    t = 0.0
    segments = sorted(rate_profile)
    for start, end, rate in segments:
        end = min(end, tau_max)
        t = max(t, start)
        if rate <= 0:
            t = max(t, end)
            continue
        while True:
            t_next = t + rng.exponential(1.0 / rate)
            if t_next >= end:
                t = end  # memoryless: restart the clock at the segment boundary
                break
            times.append(t_next)
            t = t_next
        if t >= tau_max:
            break
    return np.array(times)


def _generate_flow(rng, profile: ClassProfile, tau_max: float, key: FlowKey) -> Flow:
    times = _arrivals(rng, profile.rate_profile, tau_max)
    n = len(times)
    sizes = _sample_sizes(rng, profile.size_mixture, n)
    if not profile.early_signal:
        early = times < profile.onset
        sizes[early] = _sample_sizes(rng, profile.background_mixture, int(early.sum()))
    dirs = (rng.random(n) >= profile.direction_split).astype(np.uint8)
    dirs[0] = 0
    return Flow(key, times, sizes, dirs, profile.name)


def _flow_key(class_idx: int, i: int) -> FlowKey:
    return FlowKey(f"10.{class_idx}.{i // 250}.{i % 250 + 1}", "192.0.2.1", 20000 + i % 40000, 443, 6)


def generate(profiles, flows_per_class: int, tau_max: float, seed: int) -> LabeledDataset:
    """Draw ``flows_per_class`` flows per profile; deterministic for a given seed."""
    profiles = list(profiles)
    if not profiles:
        raise ValueError("need at least one class profile")
    if len(profiles) < 2:
        raise ValueError("need at least two class profiles")
    children = np.random.SeedSequence(seed).spawn(len(profiles))
    flows = []
    for c, (profile, ss) in enumerate(zip(profiles, children)):
        rng = np.random.default_rng(ss)
        flows.extend(_generate_flow(rng, profile, tau_max, _flow_key(c, i)) for i in range(flows_per_class))
    return LabeledDataset(flows, [p.name for p in profiles])


def to_packet_records(dataset: LabeledDataset, spacing: float = 0.001) -> list[PacketRecord]:
    """Lay flows out on one trace timeline as packet records (backward packets swap the addresses)."""
    records = []
    for i, f in enumerate(dataset.flows):
        start = i * spacing
        rev = f.key.reversed()
        for t, s, d in zip(f.times, f.sizes, f.dirs):
            records.append(PacketRecord(start + float(t), int(s), int(d), f.key if d == 0 else rev, f.label))
    return records


# --- preset corpora -------------------------------------------------------

PLANTED_BAND = (370, 380)


def planted_profiles(rate: float = 8.0, band_weight: float = 0.3) -> list[ClassProfile]:
    """Two classes that differ only inside the narrow size band [370, 380).

    Class B moves ``band_weight`` of its mass into the band, taken from the rest
    of [300, 600); both classes keep identical mass on every 300-byte block, so
    five equal-width bins cannot tell them apart.
    """
    lo, hi = PLANTED_BAND
    rates = ((0.0, math.inf, rate),)
    a = ClassProfile("A", ((1, 300, 0.3), (300, 600, 0.4), (600, 1500, 0.3)), rates)
    b = ClassProfile("B", ((1, 300, 0.3), (300, 600, 0.4 - band_weight), (lo, hi, band_weight), (600, 1500, 0.3)),
                     rates)
    return [a, b]


def early_profiles(rate: float = 16.0) -> list[ClassProfile]:
    """Two classes whose size signature is present from the first packet."""
    rates = ((0.0, math.inf, rate),)
    x = ClassProfile("X", ((100, 400, 0.5), (1, 1500, 0.5)), rates)
    y = ClassProfile("Y", ((700, 1000, 0.5), (1, 1500, 0.5)), rates)
    return [x, y]


def late_profiles(onset: float = 2.5, rate: float = 16.0) -> list[ClassProfile]:
    """Like :func:`early_profiles` but indistinguishable before ``onset``."""
    return [ClassProfile(p.name, p.size_mixture, p.rate_profile, early_signal=False, onset=onset)
            for p in early_profiles(rate)]


def disjoint_profiles(rate: float = 10.0) -> list[ClassProfile]:
    rates = ((0.0, math.inf, rate),)
    return [ClassProfile("low", ((100, 200, 1.0),), rates), ClassProfile("high", ((900, 1000, 1.0),), rates)]


# --- analytic oracle ------------------------------------------------------

def _packet_count_pmf(profile: ClassProfile, tau: float, tol: float = 1e-15):
    # 1 opening packet + Poisson(integrated rate) arrivals in (0, tau)
    lam = sum(rate * max(0.0, min(end, tau) - start) for start, end, rate in profile.rate_profile)
    if lam == 0:
        return np.array([1]), np.array([1.0])
    ks = np.arange(int(lam + 12 * math.sqrt(lam) + 20))
    pmf = np.exp(ks * math.log(lam) - lam - gammaln(ks + 1))
    keep = pmf > tol
    return 1 + ks[keep], pmf[keep]


def bayes_accuracy(profile_a: ClassProfile, profile_b: ClassProfile, tau: float) -> float:
    """Optimal balanced two-class accuracy for flows observed over [0, tau).

    Valid when both classes share the arrival process and direction split, so
    only the packet-size pmfs differ. Sizes are grouped into regions of equal
    (p_a, p_b); the per-region counts are a sufficient statistic, and the
    accuracy is 1/2 * sum over count vectors of max(P_a, P_b), summed over the
    packet-count distribution. Supports up to three regions.
    """
    if profile_a.rate_profile != profile_b.rate_profile or profile_a.direction_split != profile_b.direction_split:
        raise ValueError("classes must share arrival and direction processes")
    if not (profile_a.early_signal and profile_b.early_signal):
        raise ValueError("analytic accuracy assumes the signal is active from t=0")
    pa, pb = profile_a.size_pmf(), profile_b.size_pmf()
    pairs = np.round(np.stack([pa, pb], axis=1), 15)
    regions, inverse = np.unique(pairs, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    qa = np.bincount(inverse, weights=pa)
    qb = np.bincount(inverse, weights=pb)
    # regions with p_a == p_b carry no information; fold them into one
    same = regions[:, 0] == regions[:, 1]
    if same.any():
        qa = np.append(qa[~same], qa[same].sum())
        qb = np.append(qb[~same], qb[same].sum())
    if len(qa) > 3:
        raise ValueError("analytic accuracy implemented for at most three regions")
    while len(qa) < 3:
        qa, qb = np.append(qa, 0.0), np.append(qb, 0.0)

    ns, pn = _packet_count_pmf(profile_a, tau)
    la, lb = np.log(np.where(qa > 0, qa, 1.0)), np.log(np.where(qb > 0, qb, 1.0))
    total = 0.0
    for n, w in zip(ns, pn):
        k1, k2 = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        k3 = n - k1 - k2
        ok = k3 >= 0
        k1, k2, k3 = k1[ok], k2[ok], k3[ok]
        coef = gammaln(n + 1) - gammaln(k1 + 1) - gammaln(k2 + 1) - gammaln(k3 + 1)
        ks = np.stack([k1, k2, k3], axis=1)
        # a zero-probability region with a positive count makes that likelihood zero
        pa_ = np.where(np.any((ks > 0) & (qa == 0), axis=1), 0.0, np.exp(coef + ks @ la))
        pb_ = np.where(np.any((ks > 0) & (qb == 0), axis=1), 0.0, np.exp(coef + ks @ lb))
        total += w * 0.5 * np.maximum(pa_, pb_).sum()
    return float(total)
