"""Jump measures, their transformed densities and Fourier transforms.

A :class:`LevyMeasureSpec` describes the state-independent jump measure
``nu`` of an affine model.  Besides the Lévy exponent used by the Riccati
solver it exposes the finite "transformed" density

    rho(x) = 2^d prod_k (1 - sin(x_k)/x_k) nu(x)

whose Fourier transform the spectral estimator reconstructs.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

KINDS = ("none", "symmetric-stable", "compound-poisson", "tabulated")


def sinc_factor(x):
    """Return ``1 - sin(x)/x`` elementwise, with value 0 at ``x = 0``.

    A series is used for small ``|x|`` where the direct formula cancels.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-3
    xs = x[small]
    x2 = xs * xs
    out[small] = x2 / 6.0 - x2 * x2 / 120.0 + x2**3 / 5040.0
    xl = x[~small]
    out[~small] = 1.0 - np.sin(xl) / xl
    return out


def stable_eta(C: float, alpha: float) -> float:
    """Scale of the exponent ``-eta |u|^alpha`` for ``nu(x) = C |x|^(-1-alpha)``.

    ``eta = 2C int_0^inf (1 - cos y) y^(-1-alpha) dy
          = C pi / (Gamma(1 + alpha) sin(pi alpha / 2))``.
    """
    return C * math.pi / (gamma_fn(1.0 + alpha) * math.sin(math.pi * alpha / 2.0))


def _chi(x):
    return np.clip(x, -1.0, 1.0)


@dataclass(frozen=True)
class LevyMeasureSpec:
    """Jump measure of the state-independent jump component.

    ``kind`` is one of ``none``, ``symmetric-stable`` (density ``C|x|^(-1-alpha)``,
    ``0 < alpha < 1``), ``compound-poisson`` (``rate`` times a Gaussian jump
    law with ``mean``/``std``; ``dim = 2`` takes a mean vector and a
    covariance matrix) or ``tabulated`` (density values on ``x_grid``,
    linearly interpolated, zero outside the grid).
    """

    kind: str = "none"
    C: float = 0.0
    alpha: float = 0.5
    rate: float = 0.0
    mean: object = 0.0
    std: object = 1.0
    x_grid: tuple = ()
    values: tuple = ()
    dim: int = 1
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown Levy measure kind {self.kind!r}")
        if self.dim not in (1, 2):
            raise ValueError("only dim 1 or 2 jump measures are supported")
        if self.kind == "symmetric-stable":
            if not 0.0 < self.alpha < 1.0:
                raise ValueError("symmetric-stable requires 0 < alpha < 1")
            if self.C <= 0:
                raise ValueError("symmetric-stable requires C > 0")
            if self.dim != 1:
                raise ValueError("symmetric-stable is one-dimensional")
        elif self.kind == "compound-poisson":
            if self.rate <= 0:
                raise ValueError("compound-poisson requires rate > 0")
            if self.dim == 1 and float(self.std) <= 0:
                raise ValueError("compound-poisson requires std > 0")
            if self.dim == 2:
                cov = np.asarray(self.std, dtype=float)
                if cov.shape != (2, 2) or np.any(np.linalg.eigvalsh(cov) <= 0):
                    raise ValueError("2-d compound-poisson needs a positive definite 2x2 covariance")
                if np.asarray(self.mean, dtype=float).shape != (2,):
                    raise ValueError("2-d compound-poisson needs a mean vector of length 2")
        elif self.kind == "tabulated":
            xg = np.asarray(self.x_grid, dtype=float)
            vals = np.asarray(self.values, dtype=float)
            if xg.ndim != 1 or xg.size < 2 or xg.shape != vals.shape:
                raise ValueError("tabulated density needs matching 1-d x_grid and values")
            if np.any(np.diff(xg) <= 0):
                raise ValueError("tabulated x_grid must be strictly increasing")
            if np.any(vals < 0) or not np.all(np.isfinite(vals)):
                raise ValueError("tabulated density must be finite and non-negative")
            if self.dim != 1:
                raise ValueError("tabulated densities are one-dimensional")

    @property
    def moment_order(self) -> float:
        """Highest finite moment of ``nu`` beyond the unit ball (``inf`` if all)."""
        if self.kind == "symmetric-stable":
            # moments of order < alpha exist; report the integer part
            return 0.0
        return math.inf

    @property
    def eta(self) -> float:
        if self.kind != "symmetric-stable":
            raise ValueError("eta is only defined for symmetric-stable measures")
        return stable_eta(self.C, self.alpha)

    @property
    def has_density(self) -> bool:
        return self.kind != "none"

    def scaled(self, factor: float) -> "LevyMeasureSpec":
        """Return the measure multiplied by ``factor``."""
        if self.kind == "symmetric-stable":
            return LevyMeasureSpec("symmetric-stable", C=self.C * factor, alpha=self.alpha)
        if self.kind == "compound-poisson":
            return LevyMeasureSpec("compound-poisson", rate=self.rate * factor,
                                   mean=self.mean, std=self.std, dim=self.dim)
        if self.kind == "tabulated":
            return LevyMeasureSpec("tabulated", x_grid=self.x_grid,
                                   values=tuple(np.asarray(self.values) * factor))
        return self

    # -- density -----------------------------------------------------------
    def density(self, x):
        """Lévy density ``nu(x)``; for ``dim = 2`` ``x`` has trailing axis 2."""
        x = np.asarray(x, dtype=float)
        if self.kind == "none":
            return np.zeros(x.shape if self.dim == 1 else x.shape[:-1])
        if self.kind == "symmetric-stable":
            ax = np.abs(x)
            with np.errstate(divide="ignore"):
                out = self.C * ax ** (-1.0 - self.alpha)
            return np.where(ax == 0, np.inf, out)
        if self.kind == "compound-poisson":
            if self.dim == 1:
                m, s = float(self.mean), float(self.std)
                return self.rate * np.exp(-0.5 * ((x - m) / s) ** 2) / (s * math.sqrt(2 * math.pi))
            m = np.asarray(self.mean, dtype=float)
            cov = np.asarray(self.std, dtype=float)
            prec = np.linalg.inv(cov)
            z = x - m
            q = np.einsum("...i,ij,...j->...", z, prec, z)
            return self.rate * np.exp(-0.5 * q) / (2 * math.pi * math.sqrt(np.linalg.det(cov)))
        xg = np.asarray(self.x_grid)
        return np.interp(x, xg, np.asarray(self.values), left=0.0, right=0.0)

    # -- characteristic exponent ------------------------------------------
    def _chi_mean(self):
        """Compensator vector ``int chi(x) nu(dx)``."""
        key = "chi_mean"
        if key in self._cache:
            return self._cache[key]
        if self.kind == "compound-poisson":
            if self.dim == 1:
                m, s = float(self.mean), float(self.std)
                val = self.rate * integrate.quad(
                    lambda y: _chi(y) * math.exp(-0.5 * ((y - m) / s) ** 2) / (s * math.sqrt(2 * math.pi)),
                    m - 12 * s, m + 12 * s, limit=200, points=[-1.0, 1.0])[0]
                out = np.array([val])
            else:
                m = np.asarray(self.mean, dtype=float)
                cov = np.asarray(self.std, dtype=float)
                out = np.empty(2)
                for k in range(2):
                    mk, sk = m[k], math.sqrt(cov[k, k])
                    out[k] = self.rate * integrate.quad(
                        lambda y: _chi(y) * math.exp(-0.5 * ((y - mk) / sk) ** 2) / (sk * math.sqrt(2 * math.pi)),
                        mk - 12 * sk, mk + 12 * sk, limit=200, points=[-1.0, 1.0])[0]
        elif self.kind == "tabulated":
            xg = np.asarray(self.x_grid)
            out = np.array([np.trapezoid(_chi(xg) * np.asarray(self.values), xg)])
        else:
            out = np.zeros(self.dim)
        self._cache[key] = out
        return out

    def exponent(self, z):
        """Jump part of ``F_0``: ``int (exp(z.x) - 1 - chi(x).z) nu(dx)``.

        ``z`` is complex; for ``dim = 1`` any shape, for ``dim = 2`` trailing
        axis of length 2.  Raises ``ValueError`` when the integral diverges.
        """
        z = np.asarray(z, dtype=complex)
        if self.kind == "none":
            return np.zeros(z.shape if self.dim == 1 else z.shape[:-1], dtype=complex)
        if self.kind == "symmetric-stable":
            re = np.abs(z.real)
            if np.any(re > 1e-12 * (1.0 + np.abs(z.imag))):
                bad = float(np.max(z.real[re > 0])) if np.any(z.real > 0) else float(np.min(z.real))
                raise ValueError(f"stable jump integral diverges for Re z = {bad:g}")
            return -self.eta * np.abs(z.imag) ** self.alpha + 0j
        if self.kind == "compound-poisson":
            comp = self._chi_mean()
            if self.dim == 1:
                m, s = float(self.mean), float(self.std)
                return self.rate * (np.exp(z * m + 0.5 * s * s * z * z) - 1.0) - comp[0] * z
            m = np.asarray(self.mean, dtype=float)
            cov = np.asarray(self.std, dtype=float)
            quad = np.einsum("...i,ij,...j->...", z, cov, z)
            return self.rate * (np.exp(z @ m + 0.5 * quad) - 1.0) - z @ comp
        # tabulated: trapezoid quadrature on the grid
        xg = np.asarray(self.x_grid)
        vals = np.asarray(self.values)
        zz = z.reshape(-1, 1)
        integrand = (np.exp(zz * xg) - 1.0) * vals
        out = np.trapezoid(integrand, xg, axis=1) - self._chi_mean()[0] * z.ravel()
        return out.reshape(z.shape)

    def exponent_derivative(self, z):
        """Derivative of :meth:`exponent` with respect to (1-d) ``z``."""
        if self.dim != 1:
            raise ValueError("exponent_derivative is implemented for dim 1")
        z = np.asarray(z, dtype=complex)
        if self.kind == "none":
            return np.zeros(z.shape, dtype=complex)
        if self.kind == "symmetric-stable":
            if np.any(np.abs(z.real) > 1e-12 * (1.0 + np.abs(z.imag))):
                raise ValueError("stable jump integral diverges off the imaginary axis")
            u = z.imag
            with np.errstate(divide="ignore"):
                g = -self.eta * self.alpha * np.abs(u) ** (self.alpha - 1.0) * np.sign(u)
            # d/dz = (1/i) d/du along the imaginary axis
            return g / 1j
        if self.kind == "compound-poisson":
            m, s = float(self.mean), float(self.std)
            return self.rate * (m + s * s * z) * np.exp(z * m + 0.5 * s * s * z * z) - self._chi_mean()[0]
        xg = np.asarray(self.x_grid)
        vals = np.asarray(self.values)
        zz = z.reshape(-1, 1)
        out = np.trapezoid(xg * np.exp(zz * xg) * vals, xg, axis=1) - self._chi_mean()[0]
        return out.reshape(z.shape)


def levy_exponent(spec: LevyMeasureSpec, u):
    """``int (e^{iux} - 1 - i chi(x) u) nu(dx)`` at real frequencies ``u``."""
    u = np.asarray(u, dtype=float)
    return spec.exponent(1j * u)


@dataclass(frozen=True)
class TransformedDensity:
    x_grid: np.ndarray
    values: np.ndarray
    d: int = 1

    def mass(self) -> float:
        return float(np.trapezoid(self.values, self.x_grid))


def rho_pointwise(spec: LevyMeasureSpec, x):
    """Transformed density ``2^d prod_k (1 - sin x_k / x_k) nu(x)``.

    The factor is zero on the coordinate hyperplanes, which also removes
    the singularity of stable densities at the origin.
    """
    x = np.asarray(x, dtype=float)
    if spec.dim == 1:
        fac = 2.0 * sinc_factor(x)
    else:
        fac = 4.0 * sinc_factor(x[..., 0]) * sinc_factor(x[..., 1])
    nu = spec.density(x)
    with np.errstate(invalid="ignore"):
        out = fac * nu
    return np.where(fac == 0, 0.0, out)


def rho_from_nu(spec: LevyMeasureSpec, x_grid) -> TransformedDensity:
    if not spec.has_density and spec.kind != "none":
        raise ValueError("measure has no density")
    xg = np.asarray(x_grid, dtype=float)
    if spec.dim != 1:
        raise ValueError("grid evaluation is one-dimensional; use rho_pointwise for d = 2")
    if xg.ndim != 1 or np.any(np.diff(xg) <= 0):
        raise ValueError("x_grid must be strictly increasing")
    return TransformedDensity(xg, rho_pointwise(spec, xg), 1)


def _rho_fourier_1d(spec: LevyMeasureSpec, u: float) -> complex:
    f = lambda y: float(rho_pointwise(spec, np.array(y)))
    if spec.kind == "none":
        return 0j
    if spec.kind == "tabulated":
        xg = np.asarray(spec.x_grid)
        r = rho_pointwise(spec, xg)
        return complex(np.trapezoid(np.exp(1j * u * xg) * r, xg))
    if spec.kind == "compound-poisson":
        m, s = float(spec.mean), float(spec.std)
        a, b = m - 14 * s, m + 14 * s
        re = integrate.quad(f, a, b, weight="cos", wvar=u, limit=400)[0] if u != 0 else integrate.quad(f, a, b, limit=400)[0]
        im = integrate.quad(f, a, b, weight="sin", wvar=u, limit=400)[0] if u != 0 else 0.0
        return complex(re, im)
    # symmetric stable: even integrand, heavy algebraic tail
    cut = 50.0
    if u == 0:
        head = integrate.quad(f, 0.0, cut, limit=400, epsabs=1e-13, epsrel=1e-11)[0]
        tail = integrate.quad(f, cut, np.inf, limit=400, epsabs=1e-13, epsrel=1e-11)[0]
    else:
        head = integrate.quad(f, 0.0, cut, weight="cos", wvar=u, limit=800, epsabs=1e-13, epsrel=1e-11)[0]
        tail = integrate.quad(f, cut, np.inf, weight="cos", wvar=u, limlst=200, epsabs=1e-13)[0]
    return complex(2.0 * (head + tail), 0.0)


def fourier_of_rho(spec: LevyMeasureSpec, u) -> complex:
    """``int exp(i u.z) rho(z) dz`` by adaptive quadrature.

    ``u`` is a scalar for ``dim = 1`` or a length-2 vector for ``dim = 2``.
    Symmetric measures return a real value up to quadrature error.
    """
    if spec.dim == 1:
        uu = float(np.asarray(u, dtype=float).reshape(-1)[0])
        return _rho_fourier_1d(spec, uu)
    u = np.asarray(u, dtype=float)
    m = np.asarray(spec.mean, dtype=float)
    sd = np.sqrt(np.diag(np.asarray(spec.std, dtype=float)))
    lo, hi = m - 10 * sd, m + 10 * sd

    def part(fn):
        return integrate.dblquad(
            lambda y, x: fn(u[0] * x + u[1] * y) * float(rho_pointwise(spec, np.array([x, y]))),
            lo[0], hi[0], lo[1], hi[1], epsabs=1e-10, epsrel=1e-9)[0]

    return complex(part(math.cos), part(math.sin))


# -- tabulated CSV I/O -----------------------------------------------------

def load_tabulated(path) -> LevyMeasureSpec:
    """Read a headerless two-column ``x,value`` CSV as a tabulated measure."""
    xs, vs = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            xs.append(float(row[0]))
            vs.append(float(row[1]))
    return LevyMeasureSpec("tabulated", x_grid=tuple(xs), values=tuple(vs))


def save_tabulated(spec: LevyMeasureSpec, path) -> None:
    if spec.kind != "tabulated":
        raise ValueError("only tabulated measures can be saved")
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for x, v in zip(spec.x_grid, spec.values):
            w.writerow([repr(float(x)), repr(float(v))])
