"""Quasi self-duality: the order/carrying-cost map and the conditions behind it.

For S_t = exp(lambda t + X_t) with X Levy with triplet (gamma, sigma^2, nu),
S is quasi self-dual of order alpha and exp(X) is a martingale iff

  (i)   nu(dx) = exp(-alpha x) nu(-dx),
  (ii)  gamma = int_{|x|<=1} x (1 - e^{alpha x/2}) nu(dx) - alpha sigma^2/2 - lambda,
  (iii) lambda = (1 - alpha) sigma^2/2 + int (e^x - x e^{alpha x/2} 1{|x|<=1} - 1) nu(dx).

This module evaluates (iii) in closed form per family and by quadrature,
inverts it, and measures every residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError, ValidationError
from .models import (
    ENDPOINT_MARGIN,
    LevyTriplet,
    QsdBase,
    QsdSpec,
    _alpha_violations,
    admissible_interval,
    base_cumulant,
    cumulant,
    qsd_to_native,
    triplet_of,
)
from .numerics import DEFAULT_QUAD, expm1mx, find_root, integrate_interval, integrate_levy

__all__ = [
    "DualityReport",
    "InversionResult",
    "calibrate",
    "lambda_of_alpha",
    "lambda_of_alpha_quadrature",
    "image_interval",
    "alpha_of_lambda",
    "alpha_of_lambda_closed",
    "alpha_of_lambda_root",
    "gamma_drift",
    "martingale_drift",
    "check_measure_symmetry",
    "vanishing_integral",
    "power_triplet",
    "cumulant_reflection_error",
    "chi",
    "stochastic_log_symmetry",
    "meixner_alpha0_lambda",
    "full_report",
]

CLOSED_FORM_TOL = 1e-9
QUADRATURE_TOL = 1e-6


# --- forward map ------------------------------------------------------------

def meixner_alpha0_lambda(a, d):
    """Carrying cost making exp(X) a martingale for the symmetric (order 0) Meixner model."""
    if not (0 < a < math.pi):
        raise DomainError(f"a must lie in (0, pi), got {a}")
    if not d > 0:
        raise DomainError(f"d must be > 0, got {d}")
    return -2.0 * d * math.log(math.cos(a / 2.0))


def _forward(base, alpha):
    """lambda(alpha) without the admissibility check (used for residuals)."""
    p = base.as_dict()
    f = base.family
    if f == "nig":
        a, d = p["a"], p["d"]
        return -d * (math.sqrt(a * a - 0.25 * (2.0 - alpha) ** 2) - math.sqrt(a * a - 0.25 * alpha * alpha))
    if f == "vg":
        C, beta = p["C"], p["beta"]
        return -C * (math.log1p(-1.0 / (beta + 0.5 * alpha)) + math.log1p(1.0 / (beta - 0.5 * alpha)))
    if f == "meixner":
        if alpha == 0.0:
            return meixner_alpha0_lambda(p["a"], p["d"])
        b, d = p["b"], p["d"]
        return 2.0 * d * (math.log(math.cos(b / 2.0)) - math.log(math.cos(b / 2.0 - b / alpha)))
    if f == "cgmy":
        return base_cumulant(base, alpha, 1.0 - 0.5 * alpha) - base_cumulant(base, alpha, -0.5 * alpha)
    if f == "bs":
        return 0.5 * (1.0 - alpha) * p["sigma2"]
    raise ValidationError(f"unknown family {f!r}")


def lambda_of_alpha(base, alpha, strict=True):
    """Carrying cost lambda for which the order-``alpha`` model is quasi self-dual and risk neutral.

    Equals kappa0(1 - alpha/2) - kappa0(-alpha/2) for the symmetric base cumulant.
    With ``strict=False`` the closed form is also evaluated at finite endpoints
    of the admissible interval, where it extends continuously but no model exists.
    """
    alpha = float(alpha)
    bad = _alpha_violations(base, alpha)
    if bad and not strict:
        lo, hi = admissible_interval(base)
        if base.family != "meixner" and lo <= alpha <= hi:
            bad = []
    if bad:
        raise ValidationError(bad)
    return _forward(base, alpha)


def calibrate(base, alpha):
    """QsdSpec with lambda = lambda_of_alpha(alpha) and m = -lambda."""
    return QsdSpec(base, alpha, lambda_of_alpha(base, alpha))


def _unit(x):
    return 1.0


def _weighted(inner, c, density):
    """x -> g(x) nu(x) with g = inner on |x| <= 1 and g = e^{cx} - 1 outside.

    Far in the tails e^{cx} overflows, and nu underflows, long before the
    product does.  When the density carries a ``log`` attribute the product
    is formed in log space there.
    """
    log_nu = getattr(density, "log", None)

    def prod(x):
        if abs(x) <= 1.0:
            return inner(x) * density(x)
        cx = c * x
        if cx > 30.0 and log_nu is not None:
            return math.exp(cx + log_nu(x)) - density(x)
        d = density(x)
        if d == 0.0:
            return 0.0
        if cx < 700.0:
            return math.expm1(cx) * d
        return math.exp(cx + math.log(d)) - d

    return prod


def lambda_of_alpha_quadrature(triplet, alpha, spec=DEFAULT_QUAD):
    """(1 - alpha) sigma^2/2 + int (e^x - x e^{alpha x/2} 1{|x|<=1} - 1) nu(dx), by quadrature."""
    half = 0.5 * alpha

    def inner(x):
        # e^x - 1 - x e^{ax/2} = (e^x - 1 - x) - x (e^{ax/2} - 1)
        return expm1mx(x) - x * math.expm1(half * x)

    prod = _weighted(inner, 1.0, triplet.density)
    return 0.5 * (1.0 - alpha) * triplet.sigma2 + integrate_levy(prod, _unit, spec)


# --- inversion --------------------------------------------------------------

@dataclass(frozen=True)
class InversionResult:
    """Orders alpha solving lambda_of_alpha(alpha) = target_lambda.

    ``solutions`` holds (alpha, branch) pairs, branch in {"principal", "upper"};
    two solutions occur only in the Meixner (M2) band 2d log cos(b/2) < lambda < 0.
    """

    solutions: tuple
    target_lambda: float
    residuals: tuple
    method: str = "closed"

    @property
    def alphas(self):
        return [a for a, _ in self.solutions]

    @property
    def principal(self):
        return self.solutions[0][0]

    @property
    def unique(self):
        return len(self.solutions) == 1

    def csv_header(self):
        return "branch,alpha,lambda,residual,method"

    def csv_rows(self):
        return [
            f"{br},{_fmt(al)},{_fmt(self.target_lambda)},{_fmt(res)},{self.method}"
            for (al, br), res in zip(self.solutions, self.residuals)
        ]

    def text(self):
        lines = [f"lambda = {_fmt(self.target_lambda)}  ({self.method})"]
        for (al, br), res in zip(self.solutions, self.residuals):
            lines.append(f"  alpha={_fmt(al)}  branch={br}  residual={_fmt(res)}")
        if not self.unique:
            lines.append("  note: non-unique order; both branches satisfy the relation")
        return "\n".join(lines)


def _fmt(x):
    return format(float(x) + 0.0, ".12g")


def _meixner_floor(base):
    return 2.0 * base["d"] * math.log(math.cos(base["b"] / 2.0))


def image_interval(base):
    """(lo, hi, lo_closed) of lambda values reachable by admissible orders."""
    p = base.as_dict()
    f = base.family
    if f == "nig":
        r = p["d"] * math.sqrt(2.0 * p["a"] - 1.0)
        return (-r, r, False)
    if f in ("vg", "bs"):
        return (-math.inf, math.inf, False)
    if f == "meixner":
        b = p["b"]
        if b > 0:
            return (0.0, math.inf, False)
        if b < 0:
            return (_meixner_floor(base), math.inf, True)
        lam0 = meixner_alpha0_lambda(p["a"], p["d"])
        return (lam0, lam0, True)
    if f == "cgmy":
        if p["Y"] < 0:
            # finite activity: the base cumulant blows up at both ends of the strip
            return (-math.inf, math.inf, False)
        lo, hi = admissible_interval(base)
        return (_forward(base, hi), _forward(base, lo), False)
    raise ValidationError(f"unknown family {f!r}")


FLOOR_SNAP = 1e-12


def _at_floor(base, lam):
    """True when lambda equals the Meixner (M2) minimum up to rounding; the order is then exactly 2."""
    floor = _meixner_floor(base)
    return abs(lam - floor) <= FLOOR_SNAP * max(1.0, abs(floor))


def _check_image(base, lam, strict=True):
    lo, hi, lo_closed = image_interval(base)
    inside = (lo <= lam if lo_closed else lo < lam) and lam < hi
    if not strict and base.family == "nig":
        inside = lo <= lam <= hi
    if lo_closed and base.family == "meixner" and base["b"] < 0 and _at_floor(base, lam):
        inside = True
    if base.family == "meixner" and base["b"] == 0.0:
        inside = abs(lam - lo) <= CLOSED_FORM_TOL
    if not inside:
        left = "[" if lo_closed else "("
        raise ValidationError(
            f"lambda={lam} outside the image {left}{lo}, {hi}) of the {base.family} order map"
        )


def _finish(base, lam, sols, method):
    residuals = []
    for al, _ in sols:
        res = abs(_forward(base, al) - lam)
        tol = CLOSED_FORM_TOL * max(1.0, abs(lam))
        if not res <= tol:
            raise NumericalError(f"inversion residual {res} exceeds {tol} at alpha={al}", al, res)
        residuals.append(res)
    return InversionResult(tuple(sols), float(lam), tuple(residuals), method)


def alpha_of_lambda_closed(base, lam, strict=True):
    """Closed-form inverse of the order map (NIG, VG, Meixner, BS).

    ``strict=False`` admits the NIG image endpoints +-d sqrt(2a-1), returning
    the limiting orders on the boundary of the admissible interval.
    """
    lam = float(lam)
    _check_image(base, lam, strict)
    p = base.as_dict()
    f = base.family
    if f == "nig":
        a, d = p["a"], p["d"]
        alpha = 1.0 - lam * math.sqrt(4 * a * a * d * d - d * d - lam * lam) / (d * math.sqrt(lam * lam + d * d))
        sols = [(alpha, "principal")]
    elif f == "vg":
        # (-2 + 2 sqrt(D)) / E with E = e^{-lam/C} - 1, D = 1 + E + beta^2 E^2,
        # rationalised so lam -> 0 gives 1 without cancellation
        beta = p["beta"]
        e = math.expm1(-lam / p["C"])
        alpha = 2.0 * (1.0 + beta * beta * e) / (math.sqrt(1.0 + e + beta * beta * e * e) + 1.0)
        sols = [(alpha, "principal")]
    elif f == "meixner":
        b, d = p["b"], p["d"]
        if b == 0.0:
            sols = [(0.0, "principal")]
        elif b < 0 and _at_floor(base, lam):
            sols = [(2.0, "principal")]
        else:
            arg = math.cos(b / 2.0) * math.exp(-lam / (2.0 * d))
            acos = math.acos(min(1.0, arg))
            sols = [(2.0 * b / (b - 2.0 * acos), "principal")]
            if b < 0 and _meixner_floor(base) < lam < 0 and acos > 0:
                sols.append((2.0 * b / (b + 2.0 * acos), "upper"))
    elif f == "bs":
        sols = [(1.0 - 2.0 * lam / p["sigma2"], "principal")]
    else:
        raise ValidationError(f"no closed-form inverse for {f}; use alpha_of_lambda_root")
    return _finish(base, lam, sols, "closed")


def _toward(ref, end, n=60):
    """Points moving from ``ref`` toward ``end`` (finite: geometric approach; infinite: doubling)."""
    if math.isfinite(end):
        gap = end - ref
        for k in range(n):
            step = gap * (1.0 - 2.0 ** -(k + 1))
            pt = ref + step
            if abs(end - pt) < ENDPOINT_MARGIN * max(1.0, abs(end)):
                pt = end - math.copysign(ENDPOINT_MARGIN * max(1.0, abs(end)), gap)
                yield pt
                return
            yield pt
    else:
        s = 1.0
        for _ in range(n):
            yield ref + math.copysign(s, end)
            s *= 2.0


def _segment_root(g, lo, hi, ref, increasing):
    """Root of a monotone ``g`` on the open segment (lo, hi), bracketed by walking outward from ``ref``."""
    g_ref = g(ref)
    if g_ref == 0.0:
        return ref
    # g increasing and g(ref) > 0: the root lies left of ref
    go_left = (g_ref > 0) == increasing
    end = lo if go_left else hi
    prev = ref
    for pt in _toward(ref, end):
        try:
            val = g(pt)
        except (ValueError, ZeroDivisionError):
            break
        if val == 0.0 or (val > 0) != (g_ref > 0):
            a, b = (pt, prev) if pt < prev else (prev, pt)
            return find_root(g, a, b)
        prev = pt
    raise NumericalError(f"could not bracket the order on ({lo}, {hi})")


def alpha_of_lambda_root(base, lam):
    """Inverse of the order map by bracketed root finding on its monotone pieces."""
    lam = float(lam)
    _check_image(base, lam)
    f = base.family
    lo, hi = admissible_interval(base)

    def g(al):
        return _forward(base, al) - lam

    if f == "meixner":
        b = base["b"]
        if b == 0.0:
            return _finish(base, lam, [(0.0, "principal")], "root")
        if b > 0:
            ref = hi - 1.0
            sols = [(_segment_root(g, lo, hi, ref, increasing=True), "principal")]
        else:
            floor = _meixner_floor(base)
            if _at_floor(base, lam):
                sols = [(2.0, "principal")]
            else:
                sols = [(_segment_root(g, lo, 2.0, 0.5 * (lo + 2.0), increasing=False), "principal")]
                if floor < lam < 0:
                    sols.append((_segment_root(g, 2.0, hi, 3.0, increasing=True), "upper"))
        return _finish(base, lam, sols, "root")
    if f == "bs":
        ref = 1.0
    else:
        ref = 0.5 * (lo + hi)
    return _finish(base, lam, [(_segment_root(g, lo, hi, ref, increasing=False), "principal")], "root")


def alpha_of_lambda(base, lam):
    """Closed form where one exists, root finding otherwise."""
    if base.family == "cgmy":
        return alpha_of_lambda_root(base, lam)
    return alpha_of_lambda_closed(base, lam)


# --- condition checks -------------------------------------------------------

def gamma_drift(alpha, lam, sigma2, density, spec=DEFAULT_QUAD):
    """Drift gamma required by condition (ii) for order ``alpha`` and carrying cost ``lam``."""
    half = 0.5 * alpha
    if alpha == 0.0:
        inner = 0.0
    else:
        inner = integrate_levy(lambda x: -x * math.expm1(half * x), density, spec, inner_only=True)
    return inner - half * sigma2 - lam


def martingale_drift(sigma2, density, spec=DEFAULT_QUAD):
    """Drift gamma making exp(X) a martingale: -sigma^2/2 + int (x 1{|x|<=1} + 1 - e^x) nu(dx)."""

    prod = _weighted(expm1mx, 1.0, density)
    return -0.5 * sigma2 - integrate_levy(prod, _unit, spec)


def check_measure_symmetry(density, alpha, grid):
    """Max relative deviation of e^{alpha x/2} nu(x) from its reflection over ``grid``."""
    worst = 0.0
    for x in grid:
        x = float(x)
        if x == 0.0:
            raise DomainError("symmetry grid must avoid 0")
        left = math.exp(0.5 * alpha * x) * density(x)
        right = math.exp(-0.5 * alpha * x) * density(-x)
        dev = abs(left - right) / (left + 1e-300)
        worst = max(worst, dev)
    return worst


def vanishing_integral(density, alpha, spec=DEFAULT_QUAD):
    """int (e^{alpha x} - 1 - alpha x e^{alpha x/2} 1{|x|<=1}) nu(dx); zero under condition (i)."""
    if alpha == 0.0:
        return 0.0

    def inner(x):
        ax = alpha * x
        return expm1mx(ax) - ax * math.expm1(0.5 * ax)

    return integrate_levy(_weighted(inner, alpha, density), _unit, spec)


def power_triplet(triplet, alpha, lam, spec=DEFAULT_QUAD):
    """Triplet of Z = alpha (lambda t + X)."""
    if alpha == 0.0:
        raise DomainError("power_triplet needs alpha != 0")
    nu = triplet.density
    r = 1.0 / abs(alpha)

    def xnu(x):
        return x * nu(x)

    if r > 1.0:
        corr = integrate_interval(xnu, 1.0, r, spec) + integrate_interval(xnu, -r, -1.0, spec)
    elif r < 1.0:
        corr = -(integrate_interval(xnu, r, 1.0, spec) + integrate_interval(xnu, -1.0, -r, spec))
    else:
        corr = 0.0
    gamma = alpha * (lam + triplet.gamma + corr)

    def pushed(y):
        return nu(y / alpha) / abs(alpha)

    return LevyTriplet(gamma, alpha * alpha * triplet.sigma2, pushed)


def cumulant_reflection_error(spec, z_grid):
    """max |kappa_Z(z) - kappa_Z(1 - z)| for Z = alpha (lambda t + X).

    For alpha = 0 the order-zero condition is evenness of lambda t + X, so the
    grid values are used as theta and kappa(theta) is compared with kappa(-theta).
    """
    native = qsd_to_native(spec)
    al, lam = spec.alpha, spec.lam
    worst = 0.0
    for z in z_grid:
        z = float(z)
        if al == 0.0:
            dev = (lam * z + cumulant(native, z)) - (-lam * z + cumulant(native, -z))
        else:
            kz = al * lam * z + cumulant(native, al * z)
            kr = al * lam * (1.0 - z) + cumulant(native, al * (1.0 - z))
            dev = kz - kr
        worst = max(worst, abs(dev))
    return worst


def chi(y):
    """Self-inverse map y -> -y/(1+y) of (-1, inf)."""
    return -y / (1.0 + y)


def stochastic_log_symmetry(density_x, alpha, intervals, form="borel", spec=DEFAULT_QUAD):
    """Max relative deviation of the stochastic-logarithm symmetry over ``intervals``.

    For each B = (lo, hi) the jump measure of Y (exp(X) = E(Y)) is compared
    with its chi-reflection:

      borel:  nu^Y(B)  vs  int_{chi(B)} (1+y)^alpha nu^Y(dy)
      mellin: nu^Y(B)  vs  int_B (1+y)^{-alpha} (nu^Y chi^{-1})(dy)

    nu^Y(B) is integrated in x = log(1+y); the reflected side in y directly.
    """
    if form not in ("borel", "mellin"):
        raise ValueError(f"form must be 'borel' or 'mellin', got {form!r}")

    def nu_y(y):
        return density_x(math.log1p(y)) / (1.0 + y)

    worst = 0.0
    for lo, hi in intervals:
        if not (-1.0 < lo < hi) or lo <= 0.0 <= hi:
            raise DomainError(f"interval ({lo}, {hi}) must lie in (-1, inf) and avoid 0")
        lhs = integrate_interval(density_x, math.log1p(lo), math.log1p(hi), spec)
        if form == "borel":
            rhs = integrate_interval(lambda y: (1.0 + y) ** alpha * nu_y(y), chi(hi), chi(lo), spec)
        else:
            # density of nu^Y chi^{-1} at y is nu^Y(chi(y)) |chi'(y)| = nu^Y(chi(y)) / (1+y)^2
            rhs = integrate_interval(
                lambda y: (1.0 + y) ** (-alpha) * nu_y(chi(y)) / (1.0 + y) ** 2, lo, hi, spec
            )
        scale = max(abs(lhs), abs(rhs))
        dev = 0.0 if scale == 0.0 else abs(lhs - rhs) / scale
        worst = max(worst, dev)
    return worst


# --- report -----------------------------------------------------------------

DEFAULT_SYMMETRY_GRID = tuple(s * x for x in np.geomspace(1e-3, 10.0, 25) for s in (1.0, -1.0))
DEFAULT_Z_GRID = tuple(np.linspace(0.05, 0.95, 19))
DEFAULT_INTERVALS = ((0.1, 0.5), (-0.5, -0.1), (0.5, 2.0), (-0.9, -0.6), (0.01, 0.05))


@dataclass(frozen=True)
class DualityReport:
    measure_symmetry_error: float
    drift_condition_residual: float
    lambda_alpha_residual: float
    martingale_residuals: tuple
    vanishing_integral: float
    cumulant_reflection_error: float
    stochastic_log_error: float = 0.0
    spec: QsdSpec = field(default=None, compare=False)

    def __post_init__(self):
        vals = [self.measure_symmetry_error, self.drift_condition_residual, self.lambda_alpha_residual,
                *self.martingale_residuals, self.vanishing_integral, self.cumulant_reflection_error,
                self.stochastic_log_error]
        if not all(math.isfinite(v) for v in vals):
            raise NumericalError(f"non-finite residual in duality report: {vals}")

    def max_residual(self):
        return max(abs(self.measure_symmetry_error), abs(self.drift_condition_residual),
                   abs(self.lambda_alpha_residual), *map(abs, self.martingale_residuals),
                   abs(self.vanishing_integral), abs(self.cumulant_reflection_error),
                   abs(self.stochastic_log_error))

    CSV_HEADER = ("family,alpha,lambda,measure_symmetry,drift_residual,lambda_residual,"
                  "kappa_x1,kappa_z1,vanishing_integral,reflection_error,stoch_log_error")

    def csv_row(self):
        s = self.spec
        fam, al, lam = (s.family, s.alpha, s.lam) if s is not None else ("", math.nan, math.nan)
        vals = [al, lam, self.measure_symmetry_error, self.drift_condition_residual,
                self.lambda_alpha_residual, *self.martingale_residuals, self.vanishing_integral,
                self.cumulant_reflection_error, self.stochastic_log_error]
        return ",".join([fam] + [_fmt(v) for v in vals])

    def text(self):
        kx, kz = self.martingale_residuals
        head = f"{self.spec}\n" if self.spec is not None else ""
        return head + "\n".join([
            f"  (i)   measure symmetry error      {_fmt(self.measure_symmetry_error)}",
            f"  (ii)  drift condition residual    {_fmt(self.drift_condition_residual)}",
            f"  (iii) lambda-alpha residual       {_fmt(self.lambda_alpha_residual)}",
            f"        kappa_X(1)                  {_fmt(kx)}",
            f"        kappa_Z(1)                  {_fmt(kz)}",
            f"        vanishing integral          {_fmt(self.vanishing_integral)}",
            f"        cumulant reflection error   {_fmt(self.cumulant_reflection_error)}",
            f"        stochastic-log deviation    {_fmt(self.stochastic_log_error)}",
        ])


def full_report(spec, quad=DEFAULT_QUAD, grid=DEFAULT_SYMMETRY_GRID, z_grid=DEFAULT_Z_GRID,
                intervals=DEFAULT_INTERVALS):
    """Evaluate every quasi-self-duality and martingale condition for ``spec``."""
    native = qsd_to_native(spec)
    trip = triplet_of(native, quad)
    al, lam = spec.alpha, spec.lam
    sym = check_measure_symmetry(trip.density, al, grid)
    drift = trip.gamma - gamma_drift(al, lam, trip.sigma2, trip.density, quad)
    lam_res = lam - lambda_of_alpha_quadrature(trip, al, quad)
    kx = cumulant(native, 1.0)
    kz = 0.0 if al == 0.0 else al * lam + cumulant(native, al)
    van = vanishing_integral(trip.density, al, quad)
    refl = cumulant_reflection_error(spec, z_grid)
    slog = stochastic_log_symmetry(trip.density, al, intervals, spec=quad)
    return DualityReport(sym, drift, lam_res, (kx, kz), van, refl, slog, spec)
