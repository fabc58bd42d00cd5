"""Spectral estimation of the transformed Lévy density.

Given an estimate of ``psi_s(u) = d/ds log phi(u|s,x)`` at ``s = 0``:

1. ``Psi(u) = int_{[-1,1]^d} [psi_s(u) - psi_s(u + w)] dw`` removes drift and
   the state-dependent linear part and leaves ``2^d/3 tr(alpha0) + F[rho](u)``.
2. The constant is estimated by a kernel average of ``Psi`` at scale ``U``.
3. ``rho`` is recovered by Fourier inversion of ``Psi - L`` over ``[-U, U]^d``.

The cutoff, a stability index and a near-zero correction of ``rho`` can be
chosen from the data (one dimension only).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

from .levy import sinc_factor


class EstimatorUnavailable(RuntimeError):
    """The input carries no information (all-zero smoothed c.f.)."""


def limit_kernel(t):
    """``15 t^2 (1 - |t|)^2`` on ``[-1, 1]``; unit mass, vanishes at 0."""
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    return np.where(a <= 1.0, 15.0 * t * t * (1.0 - a) ** 2, 0.0)


@dataclass(frozen=True)
class EstimatorConfig:
    U: float | str = "auto"
    U_max: float = 60.0
    n_U: int = 60
    du: float = 0.05
    transform_nodes: int = 33
    limit_nodes: int = 32
    x_max: float = 5.0
    dx: float = 0.05
    limit_mode: str = "kernel"  # kernel | boundary
    t0_mode: str = "literal"  # literal | radial
    pi_reg: float = 0.1
    kappa: float = 1.5
    a_step: float = 0.01
    index_points: int = 200
    eps_points: int = 40
    correct: bool = True

    def __post_init__(self):
        if self.U != "auto" and not (isinstance(self.U, (int, float)) and self.U > 0):
            raise ValueError("U must be positive or 'auto'")
        if self.U_max <= 1:
            raise ValueError("U_max must exceed 1")
        if self.n_U < 1:
            raise ValueError("n_U must be >= 1")
        if self.du <= 0 or self.dx <= 0 or self.x_max <= 0:
            raise ValueError("grid steps and x_max must be positive")
        if self.limit_mode not in ("kernel", "boundary"):
            raise ValueError(f"unknown limit_mode {self.limit_mode!r}")
        if self.t0_mode not in ("literal", "radial"):
            raise ValueError(f"unknown t0_mode {self.t0_mode!r}")
        if self.pi_reg <= 0:
            raise ValueError("pi_reg must be positive")
        if not 1.0 <= self.kappa < 2.0:
            raise ValueError("kappa must lie in [1, 2)")
        if self.transform_nodes < 2 or self.limit_nodes < 2:
            raise ValueError("quadrature node counts must be >= 2")

    @property
    def x_grid(self) -> np.ndarray:
        n = int(round(self.x_max / self.dx))
        return np.arange(-n, n + 1) * self.dx

    def to_dict(self):
        return asdict(self)


@dataclass
class SpectralEstimate:
    d: int
    u: np.ndarray
    Psi_hat: np.ndarray
    L_hat: float
    x: np.ndarray
    rho_tilde: np.ndarray
    U_used: float
    imag_residue: float
    U_table: np.ndarray | None = None  # columns U, objective
    a_grid: np.ndarray | None = None
    O_curve: np.ndarray | None = None
    alpha_tilde: float | None = None
    rho_corrected: np.ndarray | None = None
    epsilon: float | None = None
    c_eps: float | None = None
    correction_status: str = "not-run"
    meta: dict = field(default_factory=dict)


# -- step 1: truncation --------------------------------------------------------------

def truncate_T0(phi_hat, rho0, mode: str = "literal"):
    """Keep ``|phi|`` inside ``[rho0, 1]``; phase is preserved by the lower clamp.

    Above 1 the literal mode returns the constant 1, the radial mode
    ``phi/|phi|``.
    """
    z = np.asarray(phi_hat, dtype=complex)
    r0 = np.broadcast_to(np.asarray(rho0, dtype=float), z.shape)
    if np.any((r0 <= 0) | (r0 > 1)):
        raise ValueError("rho0 must lie in (0, 1]")
    a = np.abs(z)
    unit = np.exp(1j * np.angle(z))  # angle(0) = 0 gives the real r0 for a zero input
    out = np.where(a < r0, r0 * unit, z)
    top = 1.0 + 0j if mode == "literal" else unit
    out = np.where(a > 1.0, top, out)
    return out[()] if out.ndim == 0 else out


def truncate_T1(phi_s_hat, phi_hat, rho1):
    """``phi_s/phi`` with modulus clamped at ``rho1``, ratio phase kept."""
    zs = np.asarray(phi_s_hat, dtype=complex)
    z = np.asarray(phi_hat, dtype=complex)
    if np.any(z == 0):
        raise ZeroDivisionError("truncate_T1 needs a nonzero c.f. value")
    r1 = np.asarray(rho1, dtype=float)
    inside = np.abs(zs) <= r1 * np.abs(z)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        ratio = zs / z
        # clamp branch from phases only, safe for tiny or subnormal |phi|
        clamped = r1 * np.exp(1j * (np.angle(zs) - np.angle(z)))
    out = np.where(inside, ratio, clamped)
    return out[()] if out.ndim == 0 else out


def _norm(u, d):
    u = np.asarray(u, dtype=float)
    return np.abs(u) if d == 1 else np.max(np.abs(u), axis=-1)


def psi_estimates(smoothed, profiles, t0_mode: str = "literal"):
    """``(psi_hat, psi_s_hat)`` on the smoother's 1-d frequency grid.

    ``log`` of the clamped c.f. uses the phase unwrapped outward from the
    grid point nearest zero.
    """
    if smoothed.state.truncated or not np.any(smoothed.phi_hat):
        raise EstimatorUnavailable("smoothed c.f. is identically zero (design truncation)")
    rho0, rho1 = profiles
    u = np.asarray(smoothed.u_grid, dtype=float).reshape(len(smoothed.phi_hat), -1)
    if u.shape[1] != 1:
        raise ValueError("psi_estimates works on a 1-d frequency grid")
    u = u[:, 0]
    v = np.abs(u)
    phi0 = truncate_T0(smoothed.phi_hat, rho0(v), t0_mode)
    psi_s = truncate_T1(smoothed.phi_s_hat, phi0, rho1(v))
    order = np.argsort(u, kind="stable")
    ang = np.angle(phi0[order])
    k0 = int(np.argmin(np.abs(u[order])))
    unwrapped = np.empty_like(ang)
    unwrapped[k0:] = np.unwrap(ang[k0:])
    unwrapped[:k0 + 1] = np.unwrap(ang[:k0 + 1][::-1])[::-1]
    psi = np.empty(len(u), dtype=complex)
    psi[order] = np.log(np.abs(phi0[order])) + 1j * unwrapped
    return psi, psi_s


# -- psi_s sources ---------------------------------------------------------------------

def _ecf_mean(u_flat, X, weights=None):
    """``sum_n w_n exp(i u . X_n)`` for each row of ``u_flat``, chunked."""
    out = np.empty(u_flat.shape[0], dtype=complex)
    step = max(1, 2_000_000 // max(1, X.shape[0]))
    for i in range(0, u_flat.shape[0], step):
        t = u_flat[i:i + step] @ X.T
        e = np.cos(t) + 1j * np.sin(t)
        out[i:i + step] = e.mean(axis=1) if weights is None else e @ weights
    return out


def _prep(u, d):
    u = np.asarray(u, dtype=float)
    if d == 1:
        return u, u.reshape(-1, 1)
    return u, u.reshape(-1, d)


class PairsPsiS:
    """Finite-difference ``psi_s`` from i.i.d. pairs at lag ``Delta``.

    ``phi(u|0, x) = exp(iu.x)`` so ``psi_s = phi_s exp(-iu.x)``; with all
    records started at ``x`` this is the mean of ``exp(iu.(X_end - x)) - 1``
    over ``Delta``.  Being an empirical c.f., its box transform is available
    in closed form (``transform``).
    """

    def __init__(self, obs):
        from .sim import IidPairs
        if not isinstance(obs.design, IidPairs):
            raise ValueError("finite-difference route needs an iid-pairs design")
        self.d = obs.d
        self.inc = np.asarray(obs.x_end - obs.x_start, dtype=float)
        self.Delta = obs.design.Delta
        # int_{[-1,1]^d} exp(iw.Y) dw = prod 2 sin(Y_k)/Y_k
        box = np.prod(2.0 - 2.0 * sinc_factor(self.inc), axis=1)
        self._box_weights = (2.0 ** self.d - box) / (self.inc.shape[0] * self.Delta)

    def _shape(self, u):
        u, flat = _prep(u, self.d)
        return (u.shape if self.d == 1 else u.shape[:-1]), flat

    def __call__(self, u):
        shape, flat = self._shape(u)
        return ((_ecf_mean(flat, self.inc) - 1.0) / self.Delta).reshape(shape)

    def transform(self, u):
        shape, flat = self._shape(u)
        return _ecf_mean(flat, self.inc, self._box_weights).reshape(shape)


def psi_s_from_pairs(obs) -> PairsPsiS:
    return PairsPsiS(obs)


def psi_s_from_smoothed(smoothed, profiles, t0_mode: str = "literal") -> Callable:
    """``T1[phi_s_hat / T0[phi_hat]]`` from local-linear weights at any frequency."""
    if smoothed.state.truncated:
        raise EstimatorUnavailable("smoothed c.f. is identically zero (design truncation)")
    rho0, rho1 = profiles
    X = smoothed.X
    d = X.shape[1]
    st = smoothed.state
    W = np.column_stack([st.tau0, st.tau1]).astype(complex)

    def fn(u):
        u, flat = _prep(u, d)
        shape = u.shape if d == 1 else u.shape[:-1]
        out0 = np.empty(flat.shape[0], dtype=complex)
        out1 = np.empty_like(out0)
        step = max(1, 2_000_000 // max(1, X.shape[0]))
        for i in range(0, flat.shape[0], step):
            t = flat[i:i + step] @ X.T
            e = (np.cos(t) + 1j * np.sin(t)) @ W
            out0[i:i + step] = e[:, 0]
            out1[i:i + step] = e[:, 1]
        v = _norm(flat, d) if d > 1 else np.abs(flat[:, 0])
        p0 = truncate_T0(out0, rho0(v), t0_mode)
        return truncate_T1(out1, p0, rho1(v)).reshape(shape)

    return fn


def psi_s_exact(chars, x) -> Callable:
    """Exact ``psi_s(u|0, x) = F0(iu) + F1(iu).x`` (the Riccati right-hand side at 0)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = chars.d

    def fn(u):
        u = np.asarray(u, dtype=float)
        z = 1j * (u[..., None] if d == 1 else u)
        return chars.F0(z) + chars.F1(z) @ x

    return fn


def observed_component(fn: Callable, d_full: int, index: int) -> Callable:
    """Restrict a ``d_full``-dimensional ``psi_s`` to one coordinate."""
    def g(u):
        u = np.asarray(u, dtype=float)
        full = np.zeros(u.shape + (d_full,))
        full[..., index] = u
        return fn(full)
    return g


# -- step 2: transform and limit ---------------------------------------------------------

def _gauss_legendre(n):
    return np.polynomial.legendre.leggauss(n)


def transform_psi(psi_s_fn: Callable, u, transform_nodes: int = 33, d: int = 1):
    """``Psi(u)`` by tensor Gauss-Legendre over ``[-1, 1]^d``."""
    t, w = _gauss_legendre(transform_nodes)
    u = np.asarray(u, dtype=float)
    if d == 1:
        base = psi_s_fn(u)
        shifted = psi_s_fn(u[..., None] + t)
        return (2.0 * base - shifted @ w)
    if d != 2:
        raise ValueError("dimension must be 1 or 2")
    T1, T2 = np.meshgrid(t, t, indexing="ij")
    offs = np.stack([T1.ravel(), T2.ravel()], axis=-1)
    ww = np.outer(w, w).ravel()
    base = psi_s_fn(u)
    shifted = psi_s_fn(u[..., None, :] + offs)
    return 4.0 * base - shifted @ ww


def limit_estimate(Psi_fn: Callable, U: float, nodes: int = 48, d: int = 1) -> float:
    """Kernel average of ``Psi`` at scale ``U`` (Gauss-Legendre, split at 0).

    ``Psi`` is taken Hermitian, so in one dimension only ``u >= 0`` is evaluated.
    """
    if U <= 0:
        raise ValueError("U must be positive")
    t, w = _gauss_legendre(nodes)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    if d == 1:
        vals = Psi_fn(U * t)
        return float(2.0 * np.sum(w * limit_kernel(t) * np.real(vals)))
    # [0,1] nodes mirrored onto [-1,0]
    tt = np.concatenate([-t[::-1], t])
    wt = np.concatenate([w[::-1], w]) * limit_kernel(tt)
    A, B = np.meshgrid(tt, tt, indexing="ij")
    pts = U * np.stack([A, B], axis=-1)
    vals = Psi_fn(pts)
    return float(np.real(np.sum(np.outer(wt, wt) * vals)))


# -- step 3: inversion -----------------------------------------------------------------

def _nyquist_check(du, x_grid):
    xm = float(np.max(np.abs(x_grid)))
    if xm > 0 and du > math.pi / (4.0 * xm) + 1e-15:
        raise ValueError(f"u step {du} violates the Nyquist margin pi/(4 max|x|) = {math.pi / (4 * xm):.4g}")


def _sym_grid(U, du):
    n = max(1, int(math.ceil(U / du - 1e-9)))
    h = U / n
    k = np.arange(-n, n + 1)
    w = np.full(k.size, h)
    w[0] = w[-1] = 0.5 * h
    return k * h, w


def invert_rho(Psi_fn: Callable, L_hat: float, U: float, x_grid, u_grid_step: float = 0.05,
               d: int = 1, return_imag: bool = False):
    """``(2 pi)^-d int_{[-U,U]^d} exp(-iu.x) (Psi - L) du`` by the trapezoid rule."""
    if U <= 0:
        raise ValueError("U must be positive")
    x_grid = np.asarray(x_grid, dtype=float)
    _nyquist_check(u_grid_step, x_grid)
    u, w = _sym_grid(U, u_grid_step)
    if d == 1:
        g = (Psi_fn(u) - L_hat) * w
        val = np.exp(-1j * np.outer(x_grid, u)) @ g / (2.0 * math.pi)
    elif d == 2:
        A, B = np.meshgrid(u, u, indexing="ij")
        g = (Psi_fn(np.stack([A, B], axis=-1)) - L_hat) * np.outer(w, w)
        E = np.exp(-1j * np.outer(x_grid, u))
        val = E @ g @ E.T / (2.0 * math.pi) ** 2
    else:
        raise ValueError("dimension must be 1 or 2")
    re = np.real(val)
    imag = float(np.max(np.abs(np.imag(val)))) / max(float(np.max(np.abs(re))), 1e-300)
    return (re, imag) if return_imag else re


class GridPsi:
    """``Psi`` evaluated once on ``u_j = j du`` (``j >= 0``), extended by Hermitian symmetry.

    Off-grid points fall back to direct evaluation.
    """

    def __init__(self, Psi_fn: Callable, du: float, U_max: float):
        self.fn = Psi_fn
        self.du = du
        self.n = int(math.ceil(U_max / du - 1e-9))
        self.u = np.arange(self.n + 1) * du
        self.values = np.asarray(Psi_fn(self.u), dtype=complex)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        q = u / self.du
        k = np.rint(q)
        on = (np.abs(q - k) < 1e-9) & (np.abs(k) <= self.n)
        out = np.empty(u.shape, dtype=complex)
        if np.any(on):
            ki = np.abs(k[on]).astype(int)
            v = self.values[ki]
            out[on] = np.where(k[on] < 0, np.conj(v), v)
        if not np.all(on):
            out[~on] = self.fn(u[~on])
        return out

    def snap(self, U):
        k = min(self.n, max(1, int(round(U / self.du))))
        return k * self.du


def _tv2(y, dx):
    """``int |y''| dx`` with central differences."""
    if y.size < 3:
        return 0.0
    return float(np.sum(np.abs(np.diff(y, 2))) / dx)


def u_objective(Psi_fn: Callable, U: float, L_hat: float, config: EstimatorConfig):
    """Return ``(tail, roughness, total)`` of the cutoff criterion at ``U``.

    Tail: ``int_{U<|u|<U_max} |Psi(u) - Psi(U)|^2 du`` (trapezoid, step du).
    Roughness: ``int |rho''(x; U)| dx`` on the output grid.
    """
    x = config.x_grid
    u, w = _sym_grid(config.U_max, config.du)
    PU = Psi_fn(np.array([U]))[0]
    mask = np.abs(u) > U + 1e-12
    ww = w.copy()
    vals = np.abs(Psi_fn(u) - PU) ** 2
    tail = float(np.sum(vals[mask] * ww[mask]))
    rho = invert_rho(Psi_fn, L_hat, U, x, config.du)
    rough = _tv2(rho, config.dx)
    return tail, rough, tail + config.pi_reg * rough


def _limit(Psi_fn, U, config, d=1):
    if config.limit_mode == "boundary":
        pt = np.full((1,) if d == 1 else (1, d), U)
        return float(np.real(Psi_fn(pt)[0]))
    return limit_estimate(Psi_fn, U, config.limit_nodes, d)


def select_U(Psi_fn: Callable, config: EstimatorConfig, U_grid=None):
    """Minimize the cutoff criterion over a log-spaced grid in ``[1, U_max]``.

    Grid values are rounded to multiples of ``du``; ties go to the smaller U.
    Returns ``(U_hat, table)`` with ``table`` columns ``U, tail, roughness, objective``.
    """
    if U_grid is None:
        U_grid = np.geomspace(1.0, config.U_max, config.n_U)
    U_grid = np.asarray(U_grid, dtype=float)
    if U_grid.size == 0:
        raise ValueError("empty U search grid")
    rows = []
    for U in U_grid:
        L = _limit(Psi_fn, U, config)
        rows.append((U, *u_objective(Psi_fn, U, L, config)))
    table = np.array(rows)
    obj = table[:, 3]
    best = float(np.min(obj))
    tol = 1e-12 * max(abs(best), 1e-300)
    idx = int(np.flatnonzero(obj <= best + tol)[0])
    return float(table[idx, 0]), table


def theoretical_U(N, Lambda, kappa=1.5, r=0.4, q=1.0, d=1):
    """Asymptotic cutoff; ``None`` when the radicand is not positive."""
    if N < 3:
        raise ValueError("theoretical cutoff needs N >= 3")
    if Lambda <= 0:
        raise ValueError("Lambda must be positive")
    L = math.log(N)
    rad = r * L - ((kappa - 1.0) / 2.0 + 3.0 + d / 2.0 + q) * math.log(L)
    if rad <= 0:
        return None
    return math.sqrt(rad) / math.sqrt(Lambda)


# -- index and correction ----------------------------------------------------------------

def estimate_index(u, psi_s, U_hat, a_grid=None, min_points: int = 50):
    """Fit ``l0 + l1 u + l2 u^2 + l3 u^a`` to ``psi_s`` on ``(0, U_hat]`` for each ``a``.

    ``l0, l2, l3`` are real and ``l1`` imaginary, so the real and imaginary
    parts decouple.  Returns ``(alpha_tilde, a_grid, O)``; ``alpha_tilde`` is
    ``None`` when the objective does not depend on ``a`` (no jump signal).
    """
    if a_grid is None:
        a_grid = np.round(np.arange(1, 100) * 0.01, 10)
    u = np.asarray(u, dtype=float)
    y = np.asarray(psi_s, dtype=complex)
    m = (u > 0) & (u <= U_hat * (1 + 1e-12))
    if int(m.sum()) < min_points:
        raise ValueError(f"index fit needs >= {min_points} frequencies in (0, U]")
    uu, yy = u[m], y[m]
    order = np.argsort(uu)
    uu, yy = uu[order], yy[order]
    wts = np.gradient(uu) if uu.size > 1 else np.ones(1)
    l1 = np.sum(wts * uu * yy.imag) / np.sum(wts * uu * uu)
    r_im = float(np.sum(wts * (yy.imag - l1 * uu) ** 2))
    sw = np.sqrt(wts)
    keep, O = [], []
    for a in a_grid:
        A = np.column_stack([np.ones_like(uu), uu * uu, uu ** a]) * sw[:, None]
        if np.linalg.cond(A) > 1e12:
            continue
        coef, *_ = np.linalg.lstsq(A, yy.real * sw, rcond=None)
        res = yy.real * sw - A @ coef
        keep.append(a)
        O.append(float(res @ res) + r_im)
    a_kept = np.array(keep)
    O = np.array(O)
    if O.size == 0:
        return None, a_kept, O
    energy = float(np.sum(wts * np.abs(yy) ** 2))
    if float(O.max() - O.min()) <= 1e-14 * max(energy, 1e-300):
        return None, a_kept, O
    return float(a_kept[int(np.argmin(O))]), a_kept, O


def correct_rho(x_grid, rho_tilde, alpha_tilde, eps_grid=None, n_eps: int = 40, tv_tol: float = 0.05):
    """Replace ``rho`` on ``|x| <= eps`` by ``c (1 - sin x/x) |x|^-(1+alpha)``.

    ``c`` matches the symmetrized estimate at ``eps``; ``eps`` is the
    smallest candidate whose total variation of ``rho''`` is within a
    factor ``1 + tv_tol`` of the minimum.  Returns ``(rho_corrected, eps, c, status)``.
    """
    x = np.asarray(x_grid, dtype=float)
    r = np.asarray(rho_tilde, dtype=float)
    if alpha_tilde is None or not 0 < alpha_tilde < 1:
        return r.copy(), None, None, "no-index"
    dx = float(np.min(np.diff(x)))
    if eps_grid is None:
        eps_grid = np.geomspace(2 * dx, 1.0, n_eps)
    best = []
    for eps in eps_grid:
        re = 0.5 * (np.interp(eps, x, r) + np.interp(-eps, x, r))
        if re <= 0:
            continue
        c = re * eps ** (1 + alpha_tilde) / float(sinc_factor(eps))
        out = r.copy()
        m = np.abs(x) <= eps
        ax = np.abs(x[m])
        with np.errstate(divide="ignore", invalid="ignore"):
            model = c * sinc_factor(x[m]) * np.where(ax > 0, ax, 1.0) ** (-(1 + alpha_tilde))
        model = np.where(ax > 0, model, 0.0 if alpha_tilde < 1 else np.inf)
        out[m] = model
        best.append((_tv2(out, dx), float(eps), c, out))
    if not best:
        return r.copy(), None, None, "unavailable"
    tv_min = min(b[0] for b in best)
    for tv, eps, c, out in sorted(best, key=lambda b: b[1]):
        if tv <= (1.0 + tv_tol) * tv_min:
            return out, eps, c, "ok"


# -- composite -------------------------------------------------------------------------

def run_spectral_pipeline(psi_s_fn: Callable, config: EstimatorConfig = EstimatorConfig(), d: int = 1,
                          meta: dict | None = None) -> SpectralEstimate:
    """Transform, cutoff, limit, inversion, index fit and correction."""
    if hasattr(psi_s_fn, "transform"):
        Psi = psi_s_fn.transform
    else:
        Psi = lambda u: transform_psi(psi_s_fn, u, config.transform_nodes, d)
    x = config.x_grid
    _nyquist_check(config.du, x)
    if d == 2:
        if config.U == "auto":
            raise ValueError("data-driven cutoff is one-dimensional; give a numeric U for d = 2")
        U = float(config.U)
        L = _limit(Psi, U, config, d)
        rho, imag = invert_rho(Psi, L, U, x, config.du, d=2, return_imag=True)
        return SpectralEstimate(d=2, u=np.empty(0), Psi_hat=np.empty(0), L_hat=L, x=x,
                                rho_tilde=rho, U_used=U, imag_residue=imag, meta=dict(meta or {}))
    grid = GridPsi(Psi, config.du, config.U_max)
    table = None
    if config.U == "auto":
        Us = np.unique([grid.snap(U) for U in np.geomspace(1.0, config.U_max, config.n_U)])
        U, table = select_U(grid, config, Us)
    else:
        U = float(config.U)
    L = _limit(grid, U, config)
    rho, imag = invert_rho(grid, L, U, x, config.du, return_imag=True)
    est = SpectralEstimate(d=1, u=grid.u, Psi_hat=grid.values, L_hat=L, x=x, rho_tilde=rho,
                           U_used=U, imag_residue=imag, U_table=table, meta=dict(meta or {}))
    n = max(config.index_points, int(math.ceil(U / config.du)))
    ui = np.linspace(0.0, U, n + 1)[1:]
    alpha, a_grid, O = estimate_index(ui, psi_s_fn(ui), U)
    est.alpha_tilde, est.a_grid, est.O_curve = alpha, a_grid, O
    if config.correct:
        rc, eps, c, status = correct_rho(x, rho, alpha, n_eps=config.eps_points)
        est.rho_corrected, est.epsilon, est.c_eps, est.correction_status = rc, eps, c, status
    return est
