"""Semi-static hedge of a down-and-in claim under quasi self-duality.

The knock-in claim f(S_T) 1{exists t <= T: S_t <= H} is compared with the
European claim

    g(S_T) = f(S_T) 1{S_T <= H} + (S_T/H)^alpha f(H^2/S_T) 1{S_T < H},

whose value equals the knock-in value when the barrier is crossed
continuously.  Discrete monitoring and jumps over the barrier leave a
residual, which the experiment measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .mc import Estimate, McConfig, PayoffDescriptor, block_sizes, sample_increments
from .models import QsdSpec, qsd_to_native
from .numerics import RngStream

__all__ = [
    "HedgeSpec",
    "HedgeResult",
    "hedge_payoff",
    "knockin_payoff",
    "run_hedge_experiment",
    "hedge_sweep",
    "HEDGE_CSV_HEADER",
]

HEDGE_BLOCK = 2048


@dataclass(frozen=True)
class HedgeSpec:
    S0: float
    H: float
    f: PayoffDescriptor
    alpha: float
    monitoring_steps: int = 512

    def __post_init__(self):
        bad = []
        if not (0 < self.H < self.S0):
            bad.append(f"barrier must satisfy 0 < H < S0, got H={self.H}, S0={self.S0}")
        if self.alpha == 0 or not math.isfinite(self.alpha):
            bad.append(f"hedge order alpha must be finite and != 0, got {self.alpha}")
        if not (isinstance(self.monitoring_steps, (int, np.integer)) and self.monitoring_steps >= 1):
            bad.append(f"monitoring_steps must be a positive integer, got {self.monitoring_steps!r}")
        if bad:
            raise ValidationError(bad)


@dataclass(frozen=True)
class HedgeResult:
    knockin_value: Estimate
    hedge_value: Estimate
    z_score: float
    hit_fraction: float
    overshoot_mean: float
    gap: Estimate = None
    steps: int = 0

    def __post_init__(self):
        if not 0.0 <= self.hit_fraction <= 1.0:
            raise ValidationError(f"hit_fraction must lie in [0, 1], got {self.hit_fraction}")

    def csv_row(self, spec, model):
        f = spec.f
        vals = [model.alpha, model.lam, spec.H / spec.S0]
        head = [model.family] + [format(float(v), ".12g") for v in vals] + [
            f.kind, "" if f.strike is None else format(f.strike, ".12g"), str(self.steps)]
        tail = [self.knockin_value.mean, self.knockin_value.std_error, self.hedge_value.mean,
                self.hedge_value.std_error, self.z_score, self.hit_fraction, self.overshoot_mean]
        return ",".join(head + [format(float(v), ".12g") for v in tail])


HEDGE_CSV_HEADER = ("family,alpha,lambda,H_over_S0,payoff_kind,K,steps,knockin,knockin_se,"
                    "hedge,hedge_se,z,hit_frac,overshoot")


def hedge_payoff(s_T, spec):
    """g(s_T) = f(s_T) 1{s_T <= H} + (s_T/H)^alpha f(H^2/s_T) 1{s_T < H}."""
    s = np.asarray(s_T, dtype=float)
    H, f = spec.H, spec.f
    first = np.where(s <= H, f(s), 0.0)
    below = s < H
    # evaluate the reflected term only where it is used
    safe = np.where(below, s, H)
    second = np.where(below, (safe / H) ** spec.alpha * f(H * H / safe), 0.0)
    out = first + second
    return float(out) if out.ndim == 0 else out


def knockin_payoff(path, spec):
    """f(S_T) if the monitored path touches S <= H, else 0.

    ``path`` is an (n+1, 2) array of (t, S_t) or a 1-D array of S values.
    """
    arr = np.asarray(path, dtype=float)
    s = arr[:, 1] if arr.ndim == 2 else arr
    if np.min(s) <= spec.H:
        return float(spec.f(s[-1]))
    return 0.0


def _levels(steps_list, fine):
    out = []
    for n in steps_list:
        if n < 1 or fine % n:
            raise ValidationError(f"monitoring steps {n} must divide the simulation grid {fine}")
        out.append(fine // n)
    return out


def hedge_sweep(spec, model, cfg, steps_list=(32, 128, 512, 2048), extra_alphas=()):
    """Knock-in vs hedge values for several monitoring grids on one set of paths.

    Paths are simulated once on the finest grid; coarser grids are nested
    subsets of it.  ``extra_alphas`` evaluates hedges built with other orders
    (used for the power check) against the finest-grid knock-in.
    Returns (results keyed by steps, results keyed by extra alpha).
    """
    if not isinstance(model, QsdSpec):
        raise ValidationError("model must be a QsdSpec")
    fine = max(steps_list)
    strides = _levels(steps_list, fine)
    native = qsd_to_native(model)
    T = cfg.horizon_T
    dt = T / fine
    log_h = math.log(spec.H / spec.S0)
    lam = model.lam
    n_lv = len(steps_list)
    alphas = [spec.alpha] + list(extra_alphas)
    hedge_specs = [spec if a == spec.alpha else replace(spec, alpha=a) for a in alphas]

    run_cfg = replace(cfg, n_steps=fine, block_size=min(cfg.block_size, HEDGE_BLOCK))
    # per-level sums: knock-in, knock-in^2, gap, gap^2, hits, overshoot sum
    acc = {k: [[] for _ in range(6)] for k in range(n_lv)}
    hacc = [[[], []] for _ in alphas]
    extra_gap = [[[], []] for _ in alphas]
    n = 0
    for blk, size in enumerate(block_sizes(run_cfg)):
        stream = RngStream(cfg.seed, blk)
        inc = np.empty((size, fine))
        for k in range(fine):
            inc[:, k] = sample_increments(native, dt, stream, size, cfg.antithetic)
        x = np.cumsum(inc, axis=1)
        del inc
        t = np.arange(1, fine + 1) * dt
        logs = x + lam * t
        s_T = spec.S0 * np.exp(logs[:, -1])
        f_T = spec.f(s_T)
        hedges = [hedge_payoff(s_T, hs) for hs in hedge_specs]
        for j, h in enumerate(hedges):
            hacc[j][0].append(float(np.sum(h)))
            hacc[j][1].append(float(np.sum(h * h)))
        n += size
        for lv, stride in enumerate(strides):
            mon = logs[:, stride - 1::stride]
            below = mon <= log_h
            hit = below.any(axis=1)
            first = np.argmax(below, axis=1)
            s_hit = spec.S0 * np.exp(mon[np.arange(size), first])
            over = np.where(hit, spec.H - s_hit, 0.0)
            ki = np.where(hit, f_T, 0.0)
            gap = ki - hedges[0]
            a = acc[lv]
            for slot, arr in enumerate((ki, ki * ki, gap, gap * gap)):
                a[slot].append(float(np.sum(arr)))
            a[4].append(float(np.sum(hit)))
            a[5].append(float(np.sum(over)))
            if stride == 1:
                for j, h in enumerate(hedges):
                    g2 = ki - h
                    extra_gap[j][0].append(float(np.sum(g2)))
                    extra_gap[j][1].append(float(np.sum(g2 * g2)))

    fs = math.fsum
    hedge_est = [Estimate.from_sums(fs(s1), fs(s2), n) for s1, s2 in hacc]
    results = {}
    for lv, steps in enumerate(steps_list):
        a = acc[lv]
        ki = Estimate.from_sums(fs(a[0]), fs(a[1]), n)
        gap = Estimate.from_sums(fs(a[2]), fs(a[3]), n)
        hits = fs(a[4])
        over = fs(a[5]) / hits if hits else 0.0
        results[steps] = HedgeResult(ki, hedge_est[0], gap.z(0.0), hits / n, over, gap, steps)
    extras = {}
    fine_lv = steps_list.index(fine)
    fine_res = results[fine]
    for j, al in enumerate(alphas[1:], start=1):
        gap = Estimate.from_sums(fs(extra_gap[j][0]), fs(extra_gap[j][1]), n)
        extras[al] = HedgeResult(fine_res.knockin_value, hedge_est[j], gap.z(0.0),
                                 fine_res.hit_fraction, fine_res.overshoot_mean, gap, steps_list[fine_lv])
    return results, extras


def run_hedge_experiment(spec, model, cfg):
    """Knock-in value against hedge-claim value on common paths, monitored on ``spec.monitoring_steps`` dates."""
    results, _ = hedge_sweep(spec, model, cfg, steps_list=(spec.monitoring_steps,))
    return results[spec.monitoring_steps]
