"""Monte Carlo engine: exact increment samplers and statistical tests of duality and martingality.

Work is split into fixed-size path blocks keyed by ``stream_id = block index``.
Each block returns plain sums, and blocks are merged with ``math.fsum``, so
the result does not depend on the order in which blocks are evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import interpolate, special

from .errors import DomainError, ValidationError
from .models import (
    CgmyParams,
    GbmParams,
    MeixnerParams,
    NigParams,
    VgParams,
    cumulant,
    qsd_to_native,
    strip,
)
from .numerics import RngStream, rng_gamma, rng_inverse_gaussian, rng_normal, rng_uniform

__all__ = [
    "McConfig",
    "Estimate",
    "PayoffDescriptor",
    "MeixnerTable",
    "meixner_table",
    "meixner_density",
    "sample_increment",
    "sample_increments",
    "sample_terminal",
    "block_sizes",
    "mc_expectation",
    "duality_test",
    "martingale_test",
    "simulate_path",
    "simulate_paths",
    "MC_CSV_HEADER",
    "mc_csv_row",
    "mgf_check",
]

DEFAULT_BLOCK = 8192


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 1_000_000
    n_steps: int = 1
    horizon_T: float = 1.0
    seed: int = 42
    antithetic: bool = False
    block_size: int = DEFAULT_BLOCK

    def __post_init__(self):
        bad = []
        if not (isinstance(self.n_paths, (int, np.integer)) and self.n_paths >= 1):
            bad.append(f"n_paths must be a positive integer, got {self.n_paths!r}")
        if not (isinstance(self.n_steps, (int, np.integer)) and self.n_steps >= 1):
            bad.append(f"n_steps must be a positive integer, got {self.n_steps!r}")
        if not (self.horizon_T > 0 and math.isfinite(self.horizon_T)):
            bad.append(f"horizon_T must be > 0, got {self.horizon_T!r}")
        if not self.block_size >= 1:
            bad.append(f"block_size must be >= 1, got {self.block_size!r}")
        if self.antithetic and self.block_size % 2:
            bad.append("antithetic sampling needs an even block_size")
        if bad:
            raise ValidationError(bad)

    @property
    def dt(self):
        return self.horizon_T / self.n_steps


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    n: int

    @classmethod
    def from_sums(cls, s1, s2, n):
        mean = s1 / n
        if n < 2:
            return cls(mean, math.nan, n)
        var = max(s2 - s1 * mean, 0.0) / (n - 1)
        return cls(mean, math.sqrt(var / n), n)

    def z(self, target):
        if self.std_error == 0:
            return 0.0 if self.mean == target else math.copysign(math.inf, self.mean - target)
        return (self.mean - target) / self.std_error


_KINDS = ("call", "put", "digital", "identity", "constant")


@dataclass(frozen=True)
class PayoffDescriptor:
    """Payoff f: call (x-K)^+, put (K-x)^+, digital 1{x > K}, identity x, constant 1."""

    kind: str
    strike: float | None = None

    def __post_init__(self):
        kind = str(self.kind).lower()
        object.__setattr__(self, "kind", kind)
        if kind not in _KINDS:
            raise ValidationError(f"payoff kind must be one of {', '.join(_KINDS)}, got {self.kind!r}")
        if kind in ("call", "put", "digital"):
            if self.strike is None or not self.strike > 0:
                raise ValidationError(f"{kind} payoff needs a strike K > 0, got {self.strike!r}")
            object.__setattr__(self, "strike", float(self.strike))
        elif self.strike is not None:
            raise ValidationError(f"{kind} payoff takes no strike")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = self.kind
        if k == "call":
            return np.maximum(x - self.strike, 0.0)
        if k == "put":
            return np.maximum(self.strike - x, 0.0)
        if k == "digital":
            return (x > self.strike).astype(float)
        if k == "identity":
            return x.copy()
        return np.ones_like(x)

    def __str__(self):
        return self.kind if self.strike is None else f"{self.kind}({self.strike:.12g})"

    def duality_exponents(self, alpha):
        """Powers p of R = S_T/S_0 whose moments E[R^p] make both sides of the duality finite."""
        k = self.kind
        lhs = {"call": 1.0, "identity": 1.0}.get(k, 0.0)
        # R^alpha f(1/R): call and digital live on small R, put on large R
        rhs = {
            "call": min(alpha - 1.0, 0.0),
            "identity": alpha - 1.0,
            "digital": min(alpha, 0.0),
            "put": max(alpha, 0.0),
            "constant": alpha,
        }[k]
        return (lhs, rhs)


# --- Meixner inverse-CDF table ---------------------------------------------

def meixner_density(params, dt, x):
    """Density of the Meixner increment over ``dt`` (closed form via |Gamma(d dt + i y)|^2)."""
    a, b, d, m = params.a, params.b, params.d * dt, params.m * dt
    y = (np.asarray(x, dtype=float) - m) / a
    logc = 2.0 * d * math.log(2.0 * math.cos(b / 2.0)) - math.log(2.0 * a * math.pi) - special.gammaln(2.0 * d)
    lg = special.loggamma(d + 1j * y).real
    return np.exp(logc + b * y + 2.0 * lg)


@dataclass(frozen=True)
class MeixnerTable:
    """Tabulated CDF of a Meixner increment; ``x`` increasing, ``cdf`` non-decreasing in [0, 1]."""

    x: np.ndarray
    cdf: np.ndarray
    tail_mass: float

    def quantile(self, u):
        return np.interp(u, self.cdf, self.x)


def _meixner_chf(params, dt, u):
    a, b, d, m = params.a, params.b, params.d * dt, params.m * dt
    z = 0.5 * (a * u - 1j * b)
    # u >= 0 so Re z >= 0 and this form of log cosh z never overflows
    log_cosh = z + np.log1p(np.exp(-2.0 * z)) - math.log(2.0)
    return np.exp(1j * u * m + 2.0 * d * (math.log(math.cos(b / 2.0)) - log_cosh))


REFINE = 16


@lru_cache(maxsize=32)
def meixner_table(params, dt, n_grid=4001, tail_eps=1e-13):
    """CDF of the Meixner increment by Gil-Pelaez inversion of its characteristic function.

    F(x) = 1/2 - (1/pi) int_0^inf Im(e^{-iux} phi(u)) / u du, evaluated with
    Gauss-Legendre panels on u in (0, U] where |phi(U)| < tail_eps, then
    tabulated on a uniform x-grid covering all but ``tail_eps`` of the mass.
    """
    a, b, d = params.a, params.b, params.d * dt
    m = params.m * dt
    # |phi(u)| ~ (2 cos(b/2))^{2d} exp(-a d u)
    log_lead = 2.0 * d * math.log(2.0 * math.cos(b / 2.0))
    U = (log_lead - math.log(tail_eps)) / (a * d)
    # tails of the density decay like exp(-(pi -+ b)|x|/a) |x|^{2d-1}
    sd = math.sqrt(d * a * a / (2.0 * math.cos(b / 2.0) ** 2))
    reach = -math.log(tail_eps) + 2.0 * d * math.log(2.0 * math.cos(b / 2.0)) + 10.0
    mean = m + d * a * math.tan(b / 2.0)
    lo = mean - max(reach * a / (math.pi + b), 10.0 * sd)
    hi = mean + max(reach * a / (math.pi - b), 10.0 * sd)
    x = np.linspace(lo, hi, n_grid)
    width = max(abs(lo - m), abs(hi - m))
    # oscillation e^{-iu(x-m)}: a panel per quarter period at the widest x
    n_panels = int(min(20000, max(64, math.ceil(U * width * 2.0 / math.pi))))
    nodes, weights = np.polynomial.legendre.leggauss(16)
    edges = np.linspace(0.0, U, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    u = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    phi = _meixner_chf(params, dt, u)
    cdf = np.empty_like(x)
    chunk = max(1, 4_000_000 // u.size)
    for i in range(0, x.size, chunk):
        xs = x[i:i + chunk]
        integrand = np.imag(np.exp(-1j * np.outer(xs, u)) * phi[None, :]) / u[None, :]
        cdf[i:i + chunk] = 0.5 - integrand @ w / math.pi
    cdf = np.clip(np.maximum.accumulate(cdf), 0.0, 1.0)
    cdf[0], cdf[-1] = 0.0, 1.0
    # a monotone cubic through the nodes, resampled finely, keeps the
    # piecewise-linear inverse accurate where the density is peaked
    fine = np.linspace(lo, hi, REFINE * (n_grid - 1) + 1)
    cdf_fine = np.clip(interpolate.PchipInterpolator(x, cdf)(fine), 0.0, 1.0)
    return MeixnerTable(fine, np.maximum.accumulate(cdf_fine), tail_eps)


# --- samplers ---------------------------------------------------------------

def _is_antithetic_ok(params):
    return isinstance(params, (NigParams, MeixnerParams, GbmParams))


def sample_increments(params, dt, stream, size, antithetic=False):
    """``size`` independent draws of X_{t+dt} - X_t (exact in law; Meixner by tabulated inversion).

    With ``antithetic`` the second half of the draws mirrors the first half's
    Gaussian or uniform inputs, which leaves the law unchanged.
    """
    if not dt > 0:
        raise DomainError(f"dt must be > 0, got {dt}")
    if antithetic:
        if not _is_antithetic_ok(params):
            raise ValidationError(f"antithetic sampling is not available for {params.family}")
        if size % 2:
            raise ValidationError("antithetic sampling needs an even sample size")
    n = size // 2 if antithetic else size
    if isinstance(params, NigParams):
        tau = rng_inverse_gaussian(stream, params.d * dt, math.sqrt(params.a ** 2 - params.b ** 2), n)
        z = rng_normal(stream, n)
        root = np.sqrt(tau)
        if antithetic:
            tau, root, z = np.concatenate([tau, tau]), np.concatenate([root, root]), np.concatenate([z, -z])
        return params.m * dt + params.b * tau + root * z
    if isinstance(params, VgParams):
        up = rng_gamma(stream, params.C * dt, params.M, n)
        down = rng_gamma(stream, params.C * dt, params.G, n)
        return params.m * dt + up - down
    if isinstance(params, MeixnerParams):
        table = meixner_table(params, float(dt))
        u = rng_uniform(stream, n)
        if antithetic:
            u = np.concatenate([u, 1.0 - u])
        return table.quantile(u)
    if isinstance(params, GbmParams):
        z = rng_normal(stream, n)
        if antithetic:
            z = np.concatenate([z, -z])
        return params.m * dt + math.sqrt(params.sigma2 * dt) * z
    if isinstance(params, CgmyParams):
        raise ValidationError("no CGMY increment sampler; CGMY is verified analytically only")
    raise TypeError(f"unknown parameter type {type(params).__name__}")


def sample_increment(params, dt, stream):
    """One draw of X_{t+dt} - X_t."""
    return float(sample_increments(params, dt, stream, 1)[0])


def block_sizes(cfg):
    """Sizes of the path blocks; block k uses stream_id k."""
    full, rest = divmod(cfg.n_paths, cfg.block_size)
    sizes = [cfg.block_size] * full
    if rest:
        sizes.append(rest)
    if cfg.antithetic and any(s % 2 for s in sizes):
        raise ValidationError("antithetic sampling needs an even n_paths")
    return sizes


def sample_terminal(native, cfg, stream, size):
    """X_T for ``size`` paths: a sum of ``cfg.n_steps`` exact increments."""
    x = np.zeros(size)
    for _ in range(cfg.n_steps):
        x += sample_increments(native, cfg.dt, stream, size, cfg.antithetic)
    return x


def _pair_units(values, antithetic):
    """Antithetic pairs are averaged into one independent unit."""
    if not antithetic:
        return values
    h = values.shape[-1] // 2
    return 0.5 * (values[..., :h] + values[..., h:])


def _run(cfg, native, fn, n_out, blocks=None):
    """Evaluate ``fn(x_T) -> (n_out, size)`` per block; merged first and second moments per output.

    ``blocks`` restricts or reorders the block indices (used to check order independence).
    """
    sizes = block_sizes(cfg)
    idx = range(len(sizes)) if blocks is None else blocks
    s1 = [[] for _ in range(n_out)]
    s2 = [[] for _ in range(n_out)]
    n = 0
    for k in idx:
        stream = RngStream(cfg.seed, k)
        x = sample_terminal(native, cfg, stream, sizes[k])
        vals = _pair_units(np.atleast_2d(fn(x)), cfg.antithetic)
        n += vals.shape[1]
        for j in range(n_out):
            s1[j].append(float(np.sum(vals[j])))
            s2[j].append(float(np.sum(vals[j] * vals[j])))
    return [(math.fsum(a), math.fsum(b)) for a, b in zip(s1, s2)], n


def _check_moments(native, exponents, what):
    lo, hi = strip(native)
    bad = [f"{what}: E[R^{p:.6g}] is infinite (strip ({lo:.6g}, {hi:.6g}))"
           for p in exponents if not lo < p < hi]
    if bad:
        raise ValidationError(bad)


def mc_expectation(spec, g, cfg, S0=1.0, blocks=None):
    """Mean and standard error of g(S_T) with S_T = S0 exp(lambda T + X_T)."""
    native = qsd_to_native(spec)
    lt = spec.lam * cfg.horizon_T

    def fn(x):
        return np.asarray(g(S0 * np.exp(lt + x)), dtype=float) * np.ones_like(x)

    (sums,), n = _run(cfg, native, fn, 1, blocks)
    return Estimate.from_sums(*sums, n)


def duality_test(spec, f, cfg, blocks=None):
    """E[f(R)] against E[R^alpha f(1/R)], R = S_T/S_0, on common random numbers.

    Returns (lhs, rhs, z) with z the paired-difference z-score of lhs - rhs.
    """
    native = qsd_to_native(spec)
    _check_moments(native, f.duality_exponents(spec.alpha), f"duality with payoff {f}")
    lt, al = spec.lam * cfg.horizon_T, spec.alpha

    def fn(x):
        logr = lt + x
        lhs = f(np.exp(logr))
        rhs = np.exp(al * logr) * f(np.exp(-logr))
        return np.vstack([lhs, rhs, lhs - rhs])

    (l, r, dd), n = _run(cfg, native, fn, 3, blocks)
    lhs, rhs, diff = Estimate.from_sums(*l, n), Estimate.from_sums(*r, n), Estimate.from_sums(*dd, n)
    return lhs, rhs, diff.z(0.0)


def martingale_test(spec, cfg, blocks=None):
    """Estimates of E[exp(X_T)] and E[(S_T/S_0)^alpha]; both equal 1 for a calibrated spec."""
    native = qsd_to_native(spec)
    _check_moments(native, (1.0, spec.alpha), "martingale test")
    lt, al = spec.lam * cfg.horizon_T, spec.alpha

    def fn(x):
        return np.vstack([np.exp(x), np.exp(al * (lt + x))])

    (ex, ez), n = _run(cfg, native, fn, 2, blocks)
    return Estimate.from_sums(*ex, n), Estimate.from_sums(*ez, n)


def simulate_paths(spec, cfg, stream, size, S0=1.0):
    """(size, n_steps + 1) array of S on the grid t_k = k T / n_steps."""
    native = qsd_to_native(spec)
    inc = np.empty((size, cfg.n_steps))
    for k in range(cfg.n_steps):
        inc[:, k] = sample_increments(native, cfg.dt, stream, size, cfg.antithetic)
    logs = np.zeros((size, cfg.n_steps + 1))
    t = np.arange(1, cfg.n_steps + 1) * cfg.dt
    logs[:, 1:] = np.cumsum(inc, axis=1) + spec.lam * t
    return S0 * np.exp(logs)


def simulate_path(spec, cfg, stream, S0=1.0):
    """One path as an (n_steps + 1, 2) array of (t, S_t), starting at (0, S0)."""
    if cfg.antithetic:
        raise ValidationError("simulate_path draws a single path; disable antithetic sampling")
    s = simulate_paths(spec, cfg, stream, 1, S0)[0]
    t = np.linspace(0.0, cfg.horizon_T, cfg.n_steps + 1)
    return np.column_stack([t, s])


MC_CSV_HEADER = "test_name,family,alpha,lambda,lhs,lhs_se,rhs,rhs_se,z,n_paths,seed"


def mc_csv_row(test_name, spec, lhs, rhs, z, cfg):
    vals = [spec.alpha, spec.lam, lhs.mean, lhs.std_error, rhs.mean, rhs.std_error, z]
    return ",".join([test_name, spec.family] + [format(float(v), ".12g") for v in vals]
                    + [str(cfg.n_paths), str(cfg.seed)])


def mgf_check(spec, theta, cfg, blocks=None):
    """(log E_hat[exp(theta X_1)], standard error, kappa(theta)) at horizon T, per unit time."""
    native = qsd_to_native(spec)
    T = cfg.horizon_T

    def fn(x):
        return np.exp(theta * x)

    (sums,), n = _run(cfg, native, fn, 1, blocks)
    e = Estimate.from_sums(*sums, n)
    return math.log(e.mean) / T, e.std_error / e.mean / T, cumulant(native, theta)
