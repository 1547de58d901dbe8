"""Model catalog: NIG, VG, Meixner, CGMY (plus the Gaussian degenerate case).

Every family carries its native parameters, its Levy density, its cumulant
function kappa(theta) = log E[exp(theta X_1)] on the real strip of
regularity, and the quasi-self-dual reparameterization

    nu(dx) = exp(-alpha x / 2) nu0(dx),   nu0 even,

in which the order ``alpha`` becomes a model parameter.  Triplets use the
truncation c(x) = 1{|x| <= 1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

import numpy as np
from scipy import special

from .errors import DomainError, ValidationError
from .numerics import DEFAULT_QUAD, QuadSpec, bessel_k1, expm1mx, integrate_interval, integrate_levy

__all__ = [
    "NigParams",
    "VgParams",
    "MeixnerParams",
    "CgmyParams",
    "GbmParams",
    "ModelParams",
    "QsdBase",
    "QsdSpec",
    "LevyTriplet",
    "FAMILIES",
    "STRIP_MARGIN",
    "ENDPOINT_MARGIN",
    "levy_density",
    "log_levy_density",
    "cumulant",
    "strip",
    "triplet_of",
    "triplet_cumulant",
    "qsd_to_native",
    "base_cumulant",
    "admissible_interval",
    "jensen_violations",
    "format_params",
    "parse_params",
]

STRIP_MARGIN = 1e-9
ENDPOINT_MARGIN = 1e-9


def _check(conds):
    bad = [msg for ok, msg in conds if not ok]
    if bad:
        raise ValidationError(bad)


@dataclass(frozen=True)
class NigParams:
    a: float
    b: float
    d: float
    m: float = 0.0
    family = "nig"

    def __post_init__(self):
        _check([
            (self.a > 0, f"NIG: a must be > 0, got {self.a}"),
            (-self.a < self.b < self.a, f"NIG: b must lie in (-a, a) = ({-self.a}, {self.a}), got {self.b}"),
            (self.d > 0, f"NIG: d must be > 0, got {self.d}"),
            (math.isfinite(self.m), "NIG: m must be finite"),
        ])


@dataclass(frozen=True)
class VgParams:
    C: float
    G: float
    M: float
    m: float = 0.0
    family = "vg"

    def __post_init__(self):
        _check([
            (self.C > 0, f"VG: C must be > 0, got {self.C}"),
            (self.G > 0, f"VG: G must be > 0, got {self.G}"),
            (self.M > 1, f"VG: M must be > 1 (first exponential moment), got {self.M}"),
            (math.isfinite(self.m), "VG: m must be finite"),
        ])


@dataclass(frozen=True)
class MeixnerParams:
    a: float
    b: float
    d: float
    m: float = 0.0
    family = "meixner"

    @property
    def has_first_moment(self):
        """E[exp(X_1)] < inf, i.e. b < pi - a (which forces a < 2 pi)."""
        return self.b < math.pi - self.a

    def __post_init__(self):
        _check([
            (self.a > 0, f"Meixner: a must be > 0, got {self.a}"),
            (-math.pi < self.b < math.pi, f"Meixner: b must lie in (-pi, pi), got {self.b}"),
            (self.d > 0, f"Meixner: d must be > 0, got {self.d}"),
            (math.isfinite(self.m), "Meixner: m must be finite"),
        ])


@dataclass(frozen=True)
class CgmyParams:
    C: float
    G: float
    M: float
    Y: float
    m: float = 0.0
    family = "cgmy"

    def __post_init__(self):
        _check([
            (self.C > 0, f"CGMY: C must be > 0, got {self.C}"),
            (self.G > 0, f"CGMY: G must be > 0, got {self.G}"),
            (self.M > 1, f"CGMY: M must be > 1, got {self.M}"),
            (self.Y < 2, f"CGMY: Y must be < 2, got {self.Y}"),
            (self.Y not in (0.0, 1.0), "CGMY: Y = 0 is VG (use VgParams); Y = 1 is unsupported"),
            (math.isfinite(self.m), "CGMY: m must be finite"),
        ])


@dataclass(frozen=True)
class GbmParams:
    """Brownian motion with drift: kappa(theta) = m theta + sigma2 theta^2 / 2, nu = 0."""

    sigma2: float
    m: float = 0.0
    family = "bs"

    def __post_init__(self):
        _check([(self.sigma2 > 0, f"BS: sigma2 must be > 0, got {self.sigma2}")])


ModelParams = Union[NigParams, VgParams, MeixnerParams, CgmyParams, GbmParams]


# --- densities and cumulants ----------------------------------------------

def levy_density(params, x):
    """Levy density at x != 0 (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr == 0):
        raise DomainError("Levy density is undefined at x = 0")
    ax = np.abs(arr)
    with np.errstate(over="ignore", under="ignore"):
        if isinstance(params, NigParams):
            # scaled Bessel function keeps e^{bx} K1(a|x|) finite far into the tails
            out = (params.d * params.a / math.pi * np.exp(params.b * arr - params.a * ax)
                   * special.k1e(params.a * ax) / ax)
        elif isinstance(params, VgParams):
            rate = np.where(arr > 0, params.M, params.G)
            out = params.C * np.exp(-rate * ax) / ax
        elif isinstance(params, CgmyParams):
            rate = np.where(arr > 0, params.M, params.G)
            out = params.C * np.exp(-rate * ax) / ax ** (1.0 + params.Y)
        elif isinstance(params, MeixnerParams):
            # d e^{bx/a} / (x sinh(pi x / a)), written with |x| to stay positive and
            # to avoid overflow of sinh in the tails
            k = math.pi / params.a
            out = (
                params.d * 2.0 * np.exp(params.b / params.a * arr - k * ax)
                / (ax * -np.expm1(-2.0 * k * ax))
            )
        elif isinstance(params, GbmParams):
            out = np.zeros_like(arr)
        else:
            raise TypeError(f"unknown parameter type {type(params).__name__}")
    return float(out) if out.ndim == 0 else out


def log_levy_density(params, x):
    """log nu(x) for scalar x != 0; finite where ``levy_density`` underflows."""
    x = float(x)
    if x == 0.0:
        raise DomainError("Levy density is undefined at x = 0")
    ax = abs(x)
    if isinstance(params, NigParams):
        k = float(special.k1e(params.a * ax))
        return (math.log(params.d * params.a / math.pi) + params.b * x - params.a * ax
                + math.log(k) - math.log(ax))
    if isinstance(params, (VgParams, CgmyParams)):
        rate = params.M if x > 0 else params.G
        power = 1.0 + (params.Y if isinstance(params, CgmyParams) else 0.0)
        return math.log(params.C) - rate * ax - power * math.log(ax)
    if isinstance(params, MeixnerParams):
        k = math.pi / params.a
        return (math.log(2.0 * params.d) + params.b / params.a * x - k * ax
                - math.log(ax) - math.log(-math.expm1(-2.0 * k * ax)))
    if isinstance(params, GbmParams):
        return -math.inf
    raise TypeError(f"unknown parameter type {type(params).__name__}")


def strip(params):
    """Open interval of theta where E[exp(theta X_1)] is finite."""
    if isinstance(params, NigParams):
        return (-params.a - params.b, params.a - params.b)
    if isinstance(params, (VgParams, CgmyParams)):
        return (-params.G, params.M)
    if isinstance(params, MeixnerParams):
        return (-(math.pi + params.b) / params.a, (math.pi - params.b) / params.a)
    if isinstance(params, GbmParams):
        return (-math.inf, math.inf)
    raise TypeError(f"unknown parameter type {type(params).__name__}")


def _in_strip(params, theta):
    lo, hi = strip(params)
    return lo + STRIP_MARGIN <= theta <= hi - STRIP_MARGIN


def cumulant(params, theta):
    """kappa(theta) = log E[exp(theta X_1)]; raises ``DomainError`` off the strip."""
    theta = float(theta)
    if not _in_strip(params, theta):
        lo, hi = strip(params)
        raise DomainError(f"theta={theta} outside the strip ({lo}, {hi}) of {params.family}")
    if theta == 0.0:
        return 0.0
    m = params.m
    if isinstance(params, NigParams):
        a, b, d = params.a, params.b, params.d
        return m * theta + d * (math.sqrt(a * a - b * b) - math.sqrt(a * a - (b + theta) ** 2))
    if isinstance(params, VgParams):
        return m * theta - params.C * (math.log1p(-theta / params.M) + math.log1p(theta / params.G))
    if isinstance(params, MeixnerParams):
        a, b, d = params.a, params.b, params.d
        return m * theta + 2.0 * d * (math.log(math.cos(b / 2.0)) - math.log(math.cos((b + a * theta) / 2.0)))
    if isinstance(params, CgmyParams):
        C, G, M, Y = params.C, params.G, params.M, params.Y
        return m * theta + C * special.gamma(-Y) * (
            (M - theta) ** Y - M ** Y + (G + theta) ** Y - G ** Y
        )
    if isinstance(params, GbmParams):
        return m * theta + 0.5 * params.sigma2 * theta * theta
    raise TypeError(f"unknown parameter type {type(params).__name__}")


def _mean(params):
    """kappa'(0) in closed form."""
    m = params.m
    if isinstance(params, NigParams):
        return m + params.d * params.b / math.sqrt(params.a ** 2 - params.b ** 2)
    if isinstance(params, VgParams):
        return m + params.C / params.M - params.C / params.G
    if isinstance(params, MeixnerParams):
        return m + params.d * params.a * math.tan(params.b / 2.0)
    if isinstance(params, CgmyParams):
        C, G, M, Y = params.C, params.G, params.M, params.Y
        return m + C * special.gamma(-Y) * Y * (G ** (Y - 1.0) - M ** (Y - 1.0))
    if isinstance(params, GbmParams):
        return m
    raise TypeError(f"unknown parameter type {type(params).__name__}")


# --- triplets --------------------------------------------------------------

@dataclass(frozen=True)
class LevyTriplet:
    """(gamma, sigma^2, nu) with truncation 1{|x| <= 1}; ``density`` is a callable on R \\ {0}."""

    gamma: float
    sigma2: float
    density: Callable[[float], float] = field(compare=False)

    def __post_init__(self):
        _check([
            (self.sigma2 >= 0, f"sigma2 must be >= 0, got {self.sigma2}"),
            (math.isfinite(self.gamma), "gamma must be finite"),
        ])


def _zero_density(x):
    return 0.0


def _scalar_density(params):
    if isinstance(params, GbmParams):
        return _zero_density

    def nu(x):
        return levy_density(params, x)

    # exponentially weighted tail integrals use this where nu underflows
    nu.log = lambda x: log_levy_density(params, x)
    return nu


def triplet_of(params, spec=DEFAULT_QUAD, check=False):
    """Levy triplet under c(x) = 1{|x| <= 1}.

    NIG and VG drifts follow their closed forms; Meixner and CGMY use
    gamma = kappa'(0) - int_{|x|>1} x nu(dx), by quadrature.  With ``check``
    the integrability int min(x^2, 1) nu(dx) < inf is verified numerically.
    """
    nu = _scalar_density(params)
    if isinstance(params, GbmParams):
        return LevyTriplet(params.m, params.sigma2, nu)
    if isinstance(params, NigParams):
        a, b, d = params.a, params.b, params.d
        if b == 0.0:
            gamma = params.m
        else:
            integral = integrate_interval(lambda x: math.sinh(b * x) * bessel_k1(a * x) if x > 0 else 0.0,
                                          0.0, 1.0, spec)
            gamma = params.m + 2.0 * d * a / math.pi * integral
    elif isinstance(params, VgParams):
        C, G, M = params.C, params.G, params.M
        gamma = params.m - C * (G * math.expm1(-M) - M * math.expm1(-G)) / (M * G)
    else:
        outer = integrate_levy(lambda x: x if abs(x) > 1.0 else 0.0, nu, spec)
        gamma = _mean(params) - outer
    if check:
        mass = integrate_levy(lambda x: min(x * x, 1.0), nu, spec)
        if not math.isfinite(mass):
            raise ValidationError("Levy measure fails int min(x^2, 1) nu(dx) < inf")
    return LevyTriplet(gamma, 0.0, nu)


def triplet_cumulant(triplet, theta, spec=DEFAULT_QUAD):
    """kappa(theta) rebuilt from a triplet by quadrature (independent of the closed forms)."""

    def integrand(x):
        if abs(x) <= 1.0:
            return expm1mx(theta * x)
        return math.expm1(theta * x)

    jump = integrate_levy(integrand, triplet.density, spec) if triplet.density is not _zero_density else 0.0
    return triplet.gamma * theta + 0.5 * triplet.sigma2 * theta * theta + jump


# --- quasi-self-dual reparameterization ------------------------------------

FAMILIES = ("nig", "vg", "meixner", "cgmy", "bs")
_BASE_KEYS = {
    "nig": ("a", "d"),
    "vg": ("C", "beta"),
    "cgmy": ("C", "beta", "Y"),
    "meixner": ("b", "d"),
    "bs": ("sigma2",),
}


@dataclass(frozen=True)
class QsdBase:
    """A family in its symmetric-base form, without order or carrying cost.

    Keys: NIG {a, d}; VG {C, beta}; CGMY {C, beta, Y}; Meixner {b, d}
    (or {a, d} with b = 0 for order zero); BS {sigma2}.
    """

    family: str
    params: tuple

    def __init__(self, family, params=None, **kwargs):
        fam = str(family).lower()
        merged = dict(params or {})
        merged.update(kwargs)
        if fam not in FAMILIES:
            raise ValidationError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")
        keys = _BASE_KEYS[fam]
        if fam == "meixner" and merged.get("b", None) in (None, 0, 0.0) and "a" in merged:
            keys = ("a", "d")
            merged.setdefault("b", 0.0)
            merged = {"a": merged["a"], "b": 0.0, "d": merged["d"]}
        missing = [k for k in keys if k not in merged]
        if missing:
            raise ValidationError([f"{fam}: missing base parameter {k!r}" for k in missing])
        extra = [k for k in merged if k not in keys and not (fam == "meixner" and k == "b")]
        if extra:
            raise ValidationError([f"{fam}: unexpected base parameter {k!r}" for k in extra])
        vals = {k: float(merged[k]) for k in merged}
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "params", tuple(sorted(vals.items())))
        self._validate()

    def __getitem__(self, key):
        return dict(self.params)[key]

    def get(self, key, default=None):
        return dict(self.params).get(key, default)

    def as_dict(self):
        return dict(self.params)

    def _validate(self):
        p = self.as_dict()
        f = self.family
        if f == "nig":
            _check([(p["a"] > 0.5, f"NIG: a must be > 1/2, got {p['a']}"),
                    (p["d"] > 0, f"NIG: d must be > 0, got {p['d']}")])
        elif f in ("vg", "cgmy"):
            conds = [(p["C"] > 0, f"{f.upper()}: C must be > 0, got {p['C']}"),
                     (p["beta"] > 0.5, f"{f.upper()}: beta must be > 1/2, got {p['beta']}")]
            if f == "cgmy":
                conds += [(p["Y"] < 2, f"CGMY: Y must be < 2, got {p['Y']}"),
                          (p["Y"] not in (0.0, 1.0), "CGMY: Y must not be 0 (use VG) or 1")]
            _check(conds)
        elif f == "meixner":
            conds = [(p["d"] > 0, f"Meixner: d must be > 0, got {p['d']}"),
                     (-math.pi < p["b"] < math.pi, f"Meixner: b must lie in (-pi, pi), got {p['b']}")]
            if "a" in p:
                conds.append((0 < p["a"] < math.pi, f"Meixner (order 0): a must lie in (0, pi), got {p['a']}"))
            elif p["b"] == 0.0:
                conds.append((False, "Meixner: b = 0 (order 0) needs the scale a in (0, pi)"))
            _check(conds)
        elif f == "bs":
            _check([(p["sigma2"] > 0, f"BS: sigma2 must be > 0, got {p['sigma2']}")])

    def __str__(self):
        return format_params(self.family, self.as_dict())


def admissible_interval(base):
    """Open interval of admissible orders alpha for a symmetric base."""
    p = base.as_dict()
    f = base.family
    if f == "nig":
        return (-2.0 * (p["a"] - 1.0), 2.0 * p["a"])
    if f in ("vg", "cgmy"):
        return (-2.0 * (p["beta"] - 1.0), 2.0 * p["beta"])
    if f == "meixner":
        b = p["b"]
        if b > 0:
            return (-math.inf, -2.0 * b / (math.pi - b))
        if b < 0:
            return (-2.0 * b / (math.pi - b), math.inf)
        return (0.0, 0.0)
    return (-math.inf, math.inf)


def _alpha_violations(base, alpha):
    if not math.isfinite(alpha):
        return [f"alpha must be finite, got {alpha}"]
    if base.family == "meixner":
        b = base["b"]
        if b == 0.0:
            return [] if alpha == 0.0 else ["Meixner with b = 0 admits only alpha = 0"]
        if alpha == 0.0:
            return ["Meixner: alpha = 0 requires b = 0"]
    lo, hi = admissible_interval(base)
    if not (lo + ENDPOINT_MARGIN <= alpha <= hi - ENDPOINT_MARGIN):
        return [f"{base.family}: alpha={alpha} outside the admissible interval ({lo}, {hi})"]
    return []


def jensen_violations(alpha, lam):
    """Sign combinations of (lambda, alpha) that no quasi-self-dual model can have."""
    out = []
    if lam > 0 and alpha > 1:
        out.append(f"lambda={lam} > 0 with alpha={alpha} > 1 cannot be quasi self-dual")
    if lam < 0 and alpha < 1 and alpha != 0:
        out.append(f"lambda={lam} < 0 with alpha={alpha} < 1, alpha != 0 cannot be quasi self-dual")
    return out


@dataclass(frozen=True)
class QsdSpec:
    """Symmetric base + order ``alpha`` + carrying cost ``lam`` + drift ``m``.

    ``m`` is the drift added to the Esscher-shifted symmetric part, i.e.

        kappa_X(theta) = m theta + kappa0(theta - alpha/2) - kappa0(-alpha/2),

    and defaults to -lam, the value required for both martingale conditions.
    A different ``m`` gives a deliberately miscalibrated spec.
    """

    base: QsdBase
    alpha: float
    lam: float
    m: float = None

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "lam", float(self.lam))
        if self.m is None:
            object.__setattr__(self, "m", -self.lam)
        object.__setattr__(self, "m", float(self.m))
        bad = _alpha_violations(self.base, self.alpha)
        if not math.isfinite(self.lam):
            bad.append("lambda must be finite")
        bad += jensen_violations(self.alpha, self.lam)
        if bad:
            raise ValidationError(bad)

    @property
    def family(self):
        return self.base.family

    def with_lambda(self, lam):
        """Same law of X, different carrying cost (m is kept)."""
        return QsdSpec(self.base, self.alpha, lam, self.m)

    def native(self):
        return qsd_to_native(self)

    def __str__(self):
        return f"{self.base} alpha={self.alpha!r} lambda={self.lam!r} m={self.m!r}"


def qsd_to_native(spec):
    """Native parameters of the model described by a ``QsdSpec``."""
    p = spec.base.as_dict()
    al, m = spec.alpha, spec.m
    f = spec.family
    if f == "nig":
        return NigParams(p["a"], -0.5 * al, p["d"], m)
    if f == "vg":
        return VgParams(p["C"], p["beta"] - 0.5 * al, p["beta"] + 0.5 * al, m)
    if f == "cgmy":
        return CgmyParams(p["C"], p["beta"] - 0.5 * al, p["beta"] + 0.5 * al, p["Y"], m)
    if f == "meixner":
        if al == 0.0:
            return MeixnerParams(p["a"], 0.0, p["d"], m)
        return MeixnerParams(-2.0 * p["b"] / al, p["b"], p["d"], m)
    if f == "bs":
        return GbmParams(p["sigma2"], m - 0.5 * al * p["sigma2"])
    raise ValidationError(f"unknown family {f!r}")


def base_cumulant(base, alpha, theta):
    """Cumulant of the symmetric part nu0 (zero drift); Meixner's depends on alpha."""
    p = base.as_dict()
    f = base.family
    if f == "nig":
        a = p["a"]
        return p["d"] * (a - math.sqrt(a * a - theta * theta))
    if f == "vg":
        beta = p["beta"]
        return -p["C"] * (math.log1p(-theta / beta) + math.log1p(theta / beta))
    if f == "cgmy":
        beta, Y = p["beta"], p["Y"]
        return p["C"] * special.gamma(-Y) * ((beta - theta) ** Y + (beta + theta) ** Y - 2.0 * beta ** Y)
    if f == "meixner":
        a = p["a"] if alpha == 0.0 else -2.0 * p["b"] / alpha
        return -2.0 * p["d"] * math.log(math.cos(a * theta / 2.0))
    if f == "bs":
        return 0.5 * p["sigma2"] * theta * theta
    raise ValidationError(f"unknown family {f!r}")


# --- flat key-value text form -----------------------------------------------

_NATIVE = {
    "nig": (NigParams, ("a", "b", "d", "m")),
    "vg": (VgParams, ("C", "G", "M", "m")),
    "meixner": (MeixnerParams, ("a", "b", "d", "m")),
    "cgmy": (CgmyParams, ("C", "G", "M", "Y", "m")),
    "bs": (GbmParams, ("sigma2", "m")),
}


def format_params(family_or_params, values: Mapping[str, float] | None = None):
    """``family=NIG a=1 b=-0.5 d=1 m=0``."""
    if values is None:
        params = family_or_params
        family = params.family
        values = {k: getattr(params, k) for k in _NATIVE[family][1]}
    else:
        family = family_or_params
    body = " ".join(f"{k}={float(v):.12g}" for k, v in values.items())
    return f"family={family.upper()} {body}".strip()


def parse_params(text):
    """Inverse of :func:`format_params`; returns native params when all native keys are present,
    otherwise a ``QsdBase``."""
    fields = {}
    for tok in text.split():
        if "=" not in tok:
            raise ValidationError(f"malformed token {tok!r}; expected key=value")
        k, v = tok.split("=", 1)
        fields[k] = v
    if "family" not in fields:
        raise ValidationError("missing family=... token")
    family = fields.pop("family").lower()
    if family not in _NATIVE:
        raise ValidationError(f"unknown family {family!r}")
    try:
        values = {k: float(v) for k, v in fields.items()}
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    cls, keys = _NATIVE[family]
    if set(values) == set(keys):
        return cls(**values)
    return QsdBase(family, values)
