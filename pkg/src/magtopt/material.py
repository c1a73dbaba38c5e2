"""Magnetic reluctivity laws and the derived nonlinear operators.

The material law nu(s) maps flux-density magnitude s = |B| [T] to reluctivity
[m/H]. Physical laws stay between nu_min and the reluctivity of air NU0 and
saturate toward NU0. Three implementations ship: a smooth saturation law
(Marrocco family), a constant linear stub, and a cubic-spline fit of measured
(s, nu) samples loaded from CSV.

Derived operators (vectorized over trailing axes):
  flux_map(curve, W)          H-field map  W -> nu(|W|) W
  flux_jacobian(curve, W)     its 2x2 Jacobian, symmetric
  nonlinearity(curve, W, V)   second-order Taylor remainder of flux_map at W

All curve objects are immutable after construction and safe for concurrent
read access.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

# reluctivity of air (vacuum) [m/H]
NU0 = 1.0e7 / (4.0 * np.pi)


class MaterialError(Exception):
    pass


@dataclass(frozen=True)
class MarroccoCurve:
    """Smooth saturation law nu(s) = nu_air (s^2a + c tau)/(s^2a + tau).

    nu(0) = c nu_air, nu -> nu_air as s -> inf, nu'(0) = 0, C^inf for s >= 0
    when 2*alpha >= 4. Monotone increasing, so the admissibility quotient
    is >= 0.
    """
    alpha: float = 4.0
    c: float = 0.0039
    tau: float = 1.52e6
    nu_air: float = NU0

    def __post_init__(self):
        if not (0.0 < self.c < 1.0 and self.tau > 0.0 and 2 * self.alpha >= 2):
            raise MaterialError("invalid saturation-law parameters")

    @property
    def nu_min(self) -> float:
        return self.c * self.nu_air

    def nu(self, s):
        s = np.asarray(s, dtype=float)
        u = s ** (2 * self.alpha)
        return self.nu_air * (u + self.c * self.tau) / (u + self.tau)

    def nu_prime(self, s):
        s = np.asarray(s, dtype=float)
        m = 2 * self.alpha
        return (self.nu_air * m * self.tau * (1.0 - self.c)
                * s ** (m - 1) / (s ** m + self.tau) ** 2)

    def nu_second(self, s):
        s = np.asarray(s, dtype=float)
        m = 2 * self.alpha
        u = s ** m
        D = u + self.tau
        g = s ** (m - 2) * ((m - 1) * D - 2 * m * u)
        return self.nu_air * self.tau * (1.0 - self.c) * m * g / D ** 3

    def nu_third(self, s):
        s = np.asarray(s, dtype=float)
        m = 2 * self.alpha
        u = s ** m
        D = u + self.tau
        g = s ** (m - 2) * ((m - 1) * D - 2 * m * u)
        gp = (m - 1) * (m - 2) * s ** (m - 3) * D - 3 * m * (m - 1) * s ** (2 * m - 3)
        return (self.nu_air * self.tau * (1.0 - self.c) * m
                * (gp * D - 3 * m * s ** (m - 1) * g) / D ** 4)

    def cache_key(self) -> str:
        raw = f"marrocco:{self.alpha!r}:{self.c!r}:{self.tau!r}:{self.nu_air!r}"
        return hashlib.sha256(raw.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class LinearCurve:
    """Constant reluctivity nu(s) = nu_const: the linear stub."""
    nu_const: float = 1000.0
    nu_air: float = NU0

    def __post_init__(self):
        if self.nu_const <= 0:
            raise MaterialError("nu_const must be positive")

    @property
    def nu_min(self) -> float:
        return self.nu_const

    def nu(self, s):
        return np.full_like(np.asarray(s, dtype=float), self.nu_const)

    def nu_prime(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))

    nu_second = nu_prime
    nu_third = nu_prime

    def cache_key(self) -> str:
        raw = f"linear:{self.nu_const!r}:{self.nu_air!r}"
        return hashlib.sha256(raw.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class SplineCurve:
    """Cubic-spline reluctivity from measured (s, nu) samples.

    Beyond the last sample the B-H curve is continued with vacuum slope:
    nu(s) = nu_air + A/s with A = (nu(s_max) - nu_air) s_max, so (nu s)' is
    exactly nu_air there and nu -> nu_air. Below the first sample the value is
    held constant (nu' = 0 near s = 0). Derivatives are analytic from the
    spline / the continuation formulas.
    """
    s: np.ndarray
    values: np.ndarray
    nu_air: float = NU0
    _spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if s.ndim != 1 or len(s) < 4:
            raise MaterialError("need at least 4 spline samples")
        if np.any(np.diff(s) <= 0):
            raise MaterialError("spline s-column must be strictly increasing")
        if s[0] < 0 or np.any(v <= 0):
            raise MaterialError("spline samples must have s >= 0, nu > 0")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_spline", CubicSpline(s, v, extrapolate=False))

    @property
    def nu_min(self) -> float:
        grid = np.linspace(self.s[0], self.s[-1], 4097)
        return float(min(self._spline(grid).min(), self.values.min()))

    def _tail_coeff(self) -> float:
        return (self.values[-1] - self.nu_air) * self.s[-1]

    def _eval(self, s, order: int):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty_like(s)
        lo = s < self.s[0]
        hi = s > self.s[-1]
        mid = ~(lo | hi)
        sp = self._spline if order == 0 else self._spline.derivative(order)
        out[mid] = sp(s[mid])
        out[lo] = self.values[0] if order == 0 else 0.0
        A = self._tail_coeff()
        sh = s[hi]
        if order == 0:
            out[hi] = self.nu_air + A / sh
        else:
            sign = (-1.0) ** order
            out[hi] = sign * math.factorial(order) * A / sh ** (order + 1)
        return out

    def nu(self, s):
        return self._eval(s, 0).reshape(np.shape(s))

    def nu_prime(self, s):
        return self._eval(s, 1).reshape(np.shape(s))

    def nu_second(self, s):
        return self._eval(s, 2).reshape(np.shape(s))

    def nu_third(self, s):
        return self._eval(s, 3).reshape(np.shape(s))

    def cache_key(self) -> str:
        raw = b"spline:" + self.s.tobytes() + self.values.tobytes() + repr(self.nu_air).encode()
        return hashlib.sha256(raw).hexdigest()[:12]

    @classmethod
    def from_csv(cls, path, nu_air: float = NU0) -> "SplineCurve":
        """Load two-column CSV `s,nu` (header required, >= 4 rows)."""
        with open(path, newline="") as f:
            reader = csv.reader(f)
            rows = [r for r in reader if r and not r[0].lstrip().startswith("#")]
        if not rows:
            raise MaterialError(f"{path}: empty file")
        header = [c.strip().lower() for c in rows[0]]
        if header[:2] != ["s", "nu"]:
            raise MaterialError(f"{path}: line 1: expected header 's,nu'")
        s, v = [], []
        for ln, r in enumerate(rows[1:], start=2):
            try:
                s.append(float(r[0]))
                v.append(float(r[1]))
            except (ValueError, IndexError) as exc:
                raise MaterialError(f"{path}: line {ln}: bad row {r!r}") from exc
        try:
            return cls(np.asarray(s), np.asarray(v), nu_air=nu_air)
        except MaterialError as exc:
            raise MaterialError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# derived operators

def eval_nu(curve, s: float) -> float:
    """Reluctivity at flux density magnitude s >= 0."""
    if s < 0:
        raise MaterialError("flux density magnitude must be >= 0")
    return float(curve.nu(s))


def flux_map(curve, W: np.ndarray) -> np.ndarray:
    """H-field map nu(|W|) W; W has shape (..., 2)."""
    W = np.asarray(W, dtype=float)
    s = np.linalg.norm(W, axis=-1)
    return curve.nu(s)[..., None] * W


def flux_jacobian(curve, W: np.ndarray) -> np.ndarray:
    """Jacobian of flux_map: nu(|W|) I + nu'(|W|)/|W| W (x) W, shape (..., 2, 2).

    At W = 0 the Jacobian is nu(0) I. Eigenvalues are nu(|W|) across W and
    (nu(|W|) |W|)' along W; the matrix is symmetric by construction.
    """
    W = np.asarray(W, dtype=float)
    s = np.linalg.norm(W, axis=-1)
    nus = curve.nu(s)
    out = np.zeros(W.shape[:-1] + (2, 2))
    out[..., 0, 0] = nus
    out[..., 1, 1] = nus
    f = np.zeros_like(s)
    pos = s > 0
    f[pos] = curve.nu_prime(s[pos]) / s[pos]
    out[..., 0, 0] += f * W[..., 0] * W[..., 0]
    out[..., 0, 1] += f * W[..., 0] * W[..., 1]
    out[..., 1, 0] = out[..., 0, 1]
    out[..., 1, 1] += f * W[..., 1] * W[..., 1]
    return out


def nonlinearity(curve, W: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Taylor remainder flux_map(W+V) - flux_map(W) - flux_jacobian(W) V.

    Identically zero for the linear stub; bounded by C |V|^2 otherwise.
    """
    W = np.asarray(W, dtype=float)
    V = np.asarray(V, dtype=float)
    DV = np.einsum("...ij,...j->...i", flux_jacobian(curve, W), V)
    return flux_map(curve, W + V) - flux_map(curve, W) - DV


def jacobian_eigenvalues(curve, s):
    """(lam1, lam2) = (nu(s), (nu(s) s)') of the flux-map Jacobian at |W| = s."""
    s = np.asarray(s, dtype=float)
    lam1 = curve.nu(s)
    return lam1, lam1 + curve.nu_prime(s) * s


# ---------------------------------------------------------------------------
# assumption validation

#: lower admissibility threshold for the delta quotient (first sufficient bound)
DELTA_THRESHOLD_FIXED = -1.0 / 3.0


def delta_threshold_contrast(curve) -> float:
    """Second sufficient bound -(1+k1)^2/((1+k1)^2 + 2), k1 = (nu_min - nu_air)/nu_air."""
    k1 = (curve.nu_min - curve.nu_air) / curve.nu_air
    q = (1.0 + k1) ** 2
    return -q / (q + 2.0)


@dataclass(frozen=True)
class AssumptionReport:
    """Sampled material-law checks.

    bounds_ok        nu_min <= nu(s) <= nu_air on the grid
    slope_bounds_ok  nu_min <= (nu(s) s)' <= nu_air on the grid; saturation
                     laws of the shipped family overshoot the upper bound in
                     a band, which is reported as a warning, not an error
    c3_smoothness_ok finite nu''/nu''' samples, nu'(0) = 0, nu'(s)/s bounded
                     near zero
    delta_nu         min over the grid of nu'(s) s / nu(s)
    admissibility_ok delta_nu > max(threshold_fixed, threshold_contrast);
                     violation is a warning (measured steel data violates it)
    """
    bounds_ok: bool
    slope_bounds_ok: bool
    c3_smoothness_ok: bool
    delta_nu: float
    threshold_fixed: float
    threshold_contrast: float
    admissibility_ok: bool
    warnings: tuple

    def summary(self) -> str:
        lines = [
            f"value bounds [nu_min, nu_air]      : {'ok' if self.bounds_ok else 'VIOLATED'}",
            f"slope bounds on (nu s)'            : {'ok' if self.slope_bounds_ok else 'violated (warning)'}",
            f"C3 smoothness / nu'(0)=0           : {'ok' if self.c3_smoothness_ok else 'VIOLATED'}",
            f"delta quotient inf nu'(s)s/nu(s)   : {self.delta_nu:.6g}",
            f"thresholds (fixed, contrast)       : ({self.threshold_fixed:.6g}, "
            f"{self.threshold_contrast:.6g})",
            f"delta-quotient admissibility       : "
            f"{'ok' if self.admissibility_ok else 'violated (warning, run proceeds)'}",
        ]
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines)


def default_sample_grid(s_max: float = 1.0e4, n: int = 10000) -> np.ndarray:
    """Log-spaced sample grid on [1e-6, s_max] including 0."""
    return np.concatenate([[0.0], np.geomspace(1.0e-6, s_max, n)])


def validate_assumptions(curve, sample_grid=None) -> AssumptionReport:
    """Sampled check of the physical and smoothness assumptions on the law.

    The checks are infima over all s > 0 in the continuum; sampling on a
    log grid is the generic test. Admissibility violations (delta_nu at or
    below the thresholds) produce a warning and a False flag only.
    """
    grid = default_sample_grid() if sample_grid is None else np.asarray(sample_grid, float)
    if grid.size == 0:
        raise ValueError("sample grid must be non-empty")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("sample grid must be strictly increasing")

    tol = 1e-9 * curve.nu_air
    nu = np.asarray(curve.nu(grid))
    nup = np.asarray(curve.nu_prime(grid))
    slope = nu + nup * grid
    warnings = []

    bounds_ok = bool(np.all(nu >= curve.nu_min - tol) and np.all(nu <= curve.nu_air + tol))
    if not bounds_ok:
        warnings.append("nu(s) leaves [nu_min, nu_air] on the sample grid")
    slope_ok = bool(np.all(slope >= curve.nu_min - tol) and np.all(slope <= curve.nu_air + tol))
    if not slope_ok:
        warnings.append("(nu(s) s)' leaves [nu_min, nu_air] on the sample grid")

    pos = grid > 0
    small = grid[pos][grid[pos] <= 1e-2]
    ratio_bounded = True
    if small.size:
        ratio = np.abs(curve.nu_prime(small)) / small
        ratio_bounded = bool(np.all(np.isfinite(ratio)) and ratio.max() <= 1e3 * curve.nu_air)
    c3_ok = bool(
        abs(float(curve.nu_prime(0.0))) <= tol
        and ratio_bounded
        and np.all(np.isfinite(curve.nu_second(grid)))
        and np.all(np.isfinite(curve.nu_third(grid))))
    if not c3_ok:
        warnings.append("smoothness checks failed (nu'(0), nu'/s, higher derivatives)")

    with np.errstate(divide="ignore", invalid="ignore"):
        quot = np.where(pos, nup * grid / nu, np.inf)
    delta = float(np.min(quot))
    r2 = delta_threshold_contrast(curve)
    a4 = bool(delta > max(DELTA_THRESHOLD_FIXED, r2))
    if not a4:
        warnings.append(
            f"delta quotient {delta:.4g} at or below the admissibility threshold; "
            "run proceeds (sufficient condition only)")
    return AssumptionReport(bounds_ok, slope_ok, c3_ok, delta,
                            DELTA_THRESHOLD_FIXED, r2, a4, tuple(warnings))
