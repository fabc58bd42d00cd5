"""Regular affine processes: characteristics, Riccati solver and c.f.

State convention: ``x = (x_1..x_m, x_{m+1}..x_d)`` with the first ``m``
components non-negative.  ``beta1[j, i]`` is the coefficient of ``x_j`` in
the drift of component ``i``, so that

    F_1j(z) = (alpha1[j] z, z) + sum_i z_i beta1[j, i] - gamma1[j].

The conditional characteristic function is
``phi(u|s,x) = exp(psi0(u,s) + x . psi1(u,s))`` where ``psi1' = F_1(psi1)``,
``psi1(u,0) = iu`` and ``psi0' = F_0(psi1)``, ``psi0(u,0) = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .levy import LevyMeasureSpec

MAX_DIM = 2


class RiccatiError(RuntimeError):
    """Raised when the Riccati integration fails before the requested time."""

    def __init__(self, message, last_valid_time):
        super().__init__(f"{message} (last valid time {last_valid_time:g})")
        self.last_valid_time = last_valid_time


@dataclass(frozen=True)
class AffineCharacteristics:
    """Admissible tuple ``(alpha, beta, gamma, nu)`` with ``nu^(1) = 0``.

    ``nu0`` acts on the full state when ``nu0.dim == d``; a one-dimensional
    measure in ``d = 2`` acts on component ``jump_component`` only.
    """

    d: int
    m: int
    alpha0: np.ndarray
    alpha1: np.ndarray
    beta0: np.ndarray
    beta1: np.ndarray
    gamma0: float = 0.0
    gamma1: np.ndarray | None = None
    nu0: LevyMeasureSpec = field(default_factory=LevyMeasureSpec)
    jump_component: int = -1

    def __post_init__(self):
        d, m = self.d, self.m
        if d < 1 or d > MAX_DIM:
            raise ValueError(f"dimension d={d} not supported (1 <= d <= {MAX_DIM})")
        if not 0 <= m <= d:
            raise ValueError("need 0 <= m <= d")
        a0 = np.asarray(self.alpha0, dtype=float).reshape(d, d)
        a1 = np.asarray(self.alpha1, dtype=float).reshape(d, d, d)
        b0 = np.asarray(self.beta0, dtype=float).reshape(d)
        b1 = np.asarray(self.beta1, dtype=float).reshape(d, d)
        g1 = np.zeros(d) if self.gamma1 is None else np.asarray(self.gamma1, dtype=float).reshape(d)
        for name, val in (("alpha0", a0), ("alpha1", a1), ("beta0", b0), ("beta1", b1), ("gamma1", g1)):
            object.__setattr__(self, name, val)
        jc = self.jump_component % d
        object.__setattr__(self, "jump_component", jc)

        if not np.allclose(a0, a0.T, atol=1e-14):
            raise ValueError("alpha0 must be symmetric")
        if np.min(np.linalg.eigvalsh(a0)) < -1e-12:
            raise ValueError("alpha0 must be positive semi-definite")
        mask = np.zeros((d, d), dtype=bool)
        mask[m:, m:] = True
        if np.any(a0[~mask] != 0):
            raise ValueError("alpha0 must vanish outside the (m+1..d) block")
        for j in range(d):
            if j >= m:
                if np.any(a1[j] != 0):
                    raise ValueError(f"alpha1[{j}] must vanish for j > m")
                if g1[j] != 0:
                    raise ValueError(f"gamma1[{j}] must vanish for j > m")
            else:
                allowed = mask.copy()
                allowed[j, j] = True
                if np.any(a1[j][~allowed] != 0):
                    raise ValueError(f"alpha1[{j}] has entries outside its admissible pattern")
                if not np.allclose(a1[j], a1[j].T):
                    raise ValueError(f"alpha1[{j}] must be symmetric")
        if np.any(b1[m:, :m] != 0):
            raise ValueError("drift of positive components cannot depend on the real-valued ones")
        if self.gamma0 < 0 or np.any(g1 < 0):
            raise ValueError("killing rates must be non-negative")
        if self.nu0.dim not in (1, d):
            raise ValueError("nu0 dimension must be 1 or d")

    # -- generators ----------------------------------------------------------
    def _jump_arg(self, z):
        if self.nu0.dim == self.d and self.d > 1:
            return z
        return z[..., self.jump_component]

    def F0(self, z):
        z = np.asarray(z, dtype=complex)
        quad = np.einsum("...i,ij,...j->...", z, self.alpha0, z)
        return quad + z @ self.beta0 - self.gamma0 + self.nu0.exponent(self._jump_arg(z))

    def F1(self, z):
        z = np.asarray(z, dtype=complex)
        quad = np.einsum("...i,jik,...k->...j", z, self.alpha1, z)
        lin = z @ self.beta1.T
        return quad + lin - self.gamma1

    def grad_F0(self, z):
        z = np.asarray(z, dtype=complex)
        g = 2.0 * z @ self.alpha0 + self.beta0
        if self.nu0.kind != "none":
            if self.nu0.dim != 1:
                raise NotImplementedError("gradient of a 2-d jump exponent")
            jc = self.jump_component
            g = g.copy()
            g[..., jc] = g[..., jc] + self.nu0.exponent_derivative(z[..., jc])
        return g

    def grad_F1(self, z):
        """Array ``[..., j, i] = dF_1j / dz_i``."""
        z = np.asarray(z, dtype=complex)
        return 2.0 * np.einsum("jik,...k->...ji", self.alpha1, z) + self.beta1


def chi_truncation(u):
    """Componentwise ``(1 ^ |u_k|) sign(u_k)`` (zero at zero)."""
    return np.clip(np.asarray(u, dtype=float), -1.0, 1.0)


def eval_F0(z, chars: AffineCharacteristics):
    return chars.F0(z)


def eval_F1(z, j: int, chars: AffineCharacteristics):
    """``F_1j`` with a 1-based component index ``j``."""
    if not 1 <= j <= chars.d:
        raise IndexError(f"component index {j} outside 1..{chars.d}")
    return chars.F1(z)[..., j - 1]


def _as_freq(u, d):
    u = np.asarray(u, dtype=float)
    if d == 1 and (u.ndim == 0 or u.shape[-1] != 1):
        u = u[..., None]
    if u.shape[-1] != d:
        raise ValueError(f"frequency must have trailing dimension {d}")
    return u


def _rk4(chars, psi1_init, s, n):
    h = s / n
    p0 = np.zeros(psi1_init.shape[:-1], dtype=complex)
    p1 = psi1_init.copy()
    # non-finite values are caught below, so overflow warnings are noise
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(n):
            k1 = chars.F1(p1); q1 = chars.F0(p1)
            y = p1 + 0.5 * h * k1
            k2 = chars.F1(y); q2 = chars.F0(y)
            y = p1 + 0.5 * h * k2
            k3 = chars.F1(y); q3 = chars.F0(y)
            y = p1 + h * k3
            k4 = chars.F1(y); q4 = chars.F0(y)
            p1 = p1 + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            p0 = p0 + h / 6.0 * (q1 + 2 * q2 + 2 * q3 + q4)
            if not (np.all(np.isfinite(p1)) and np.all(np.isfinite(p0))):
                raise RiccatiError("Riccati solution blew up", step * h)
    return p0, p1


def riccati_solve(u, s: float, chars: AffineCharacteristics, rtol: float = 1e-10,
                  max_steps: int = 2**16):
    """Solve the generalized Riccati system up to time ``s``.

    Classical RK4 with step halving until two successive solutions agree to
    ``rtol`` (relative, floored at 1).  ``u`` may be a batch of frequencies
    with trailing axis ``d`` (or plain scalars when ``d = 1``).
    Returns ``(psi0, psi1)``.
    """
    if s < 0:
        raise ValueError("time must be non-negative")
    u = _as_freq(u, chars.d)
    init = 1j * u.astype(complex)
    if s == 0:
        return np.zeros(u.shape[:-1], dtype=complex), init
    n = max(4, int(math.ceil(s / 0.05)))
    prev = _rk4(chars, init, s, n)
    while True:
        n *= 2
        cur = _rk4(chars, init, s, n)
        err = max(
            np.max(np.abs(cur[0] - prev[0]) / np.maximum(1.0, np.abs(cur[0])), initial=0.0),
            np.max(np.abs(cur[1] - prev[1]) / np.maximum(1.0, np.abs(cur[1])), initial=0.0),
        )
        if err < rtol:
            return cur
        if n >= max_steps:
            raise RiccatiError(f"no convergence to rtol={rtol:g} with {n} steps", 0.0)
        prev = cur


def cond_cf(u, s: float, x, chars: AffineCharacteristics):
    """``phi(u|s,x) = E[exp(i u.X(s)) | X(0) = x]``."""
    x = np.asarray(x, dtype=float).reshape(chars.d)
    if np.any(x[: chars.m] < 0):
        raise ValueError("state outside the domain R_+^m x R^(d-m)")
    psi0, psi1 = riccati_solve(u, s, chars)
    return np.exp(psi0 + psi1 @ x)


def psi_time_derivative(u, s: float, x, chars: AffineCharacteristics):
    """``d/ds psi(u|s,x) = F_0(psi1) + x . F_1(psi1)``."""
    x = np.asarray(x, dtype=float).reshape(chars.d)
    _, psi1 = riccati_solve(u, s, chars)
    return chars.F0(psi1) + chars.F1(psi1) @ x


def cf_time_derivative(u, s: float, x, chars: AffineCharacteristics, order: int = 1):
    """``d^l phi(u|s,x) / ds^l`` for ``l`` in {1, 2}.

    The second derivative differentiates ``(d_s psi) phi`` analytically:
    ``d_s^2 phi = ((d_s psi)^2 + d_s^2 psi) phi`` with
    ``d_s^2 psi = (grad F_0 + sum_j x_j grad F_1j)(psi1) . F_1(psi1)``.
    """
    if order not in (1, 2):
        raise ValueError(f"unsupported derivative order {order}")
    if chars.nu0.moment_order < order - 1:
        raise ValueError(f"derivative of order {order} needs a finite moment of order "
                         f"{order - 1} of nu beyond the unit ball")
    x = np.asarray(x, dtype=float).reshape(chars.d)
    psi0, psi1 = riccati_solve(u, s, chars)
    phi = np.exp(psi0 + psi1 @ x)
    f1 = chars.F1(psi1)
    dpsi = chars.F0(psi1) + f1 @ x
    if order == 1:
        return dpsi * phi
    grad = chars.grad_F0(psi1) + np.einsum("j,...ji->...i", x, chars.grad_F1(psi1))
    d2psi = np.sum(grad * f1, axis=-1)
    return (dpsi * dpsi + d2psi) * phi


# -- model constructors ------------------------------------------------------

def levy_characteristics(sigma: float = 0.0, mu: float = 0.0,
                         jumps: LevyMeasureSpec | None = None) -> AffineCharacteristics:
    """One-dimensional Lévy process ``mu t + sigma W_t + jumps``."""
    return AffineCharacteristics(
        d=1, m=0, alpha0=[[0.5 * sigma * sigma]], alpha1=np.zeros((1, 1, 1)),
        beta0=[mu], beta1=[[0.0]], nu0=jumps or LevyMeasureSpec())


def ou_characteristics(kappa: float, sigma: float) -> AffineCharacteristics:
    """``dX = -kappa X dt + sigma dW``."""
    return AffineCharacteristics(
        d=1, m=0, alpha0=[[0.5 * sigma * sigma]], alpha1=np.zeros((1, 1, 1)),
        beta0=[0.0], beta1=[[-kappa]])


def bates_characteristics(lam: float, theta: float, zeta: float,
                          jumps: LevyMeasureSpec | None = None) -> AffineCharacteristics:
    """Bates-type model on the state ``(V, X)``.

    ``dX = -V/2 dt + sqrt(V) dW^S + dZ``,
    ``dV = lam (theta - V) dt + zeta sqrt(V) dW^V`` with independent Brownian
    motions; ``Z`` has Lévy measure ``jumps`` acting on ``X``.
    """
    alpha1 = np.zeros((2, 2, 2))
    alpha1[0] = [[0.5 * zeta * zeta, 0.0], [0.0, 0.5]]
    beta1 = np.array([[-lam, -0.5], [0.0, 0.0]])
    return AffineCharacteristics(
        d=2, m=1, alpha0=np.zeros((2, 2)), alpha1=alpha1,
        beta0=[lam * theta, 0.0], beta1=beta1,
        nu0=jumps or LevyMeasureSpec(), jump_component=1)


# -- weight profiles ---------------------------------------------------------

@dataclass(frozen=True)
class SubmatrixBounds:
    A_block: np.ndarray
    B_block: np.ndarray
    Lambda: float
    kappa: float = 1.5
    R: float = math.inf


def _lam_max(mat):
    if mat.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(mat))))


def submatrix_bounds(chars: AffineCharacteristics, T: float, x=None,
                     kappa: float = 1.5, R: float = math.inf, n_s: int = 201) -> SubmatrixBounds:
    """Class bound ``Lambda`` from the real-valued diffusion and drift blocks.

    With ``x`` given, the diffusion block is the state-dependent
    ``alpha0 + sum_j x_j alpha1[j]`` at ``x`` (the pure ``alpha0`` block
    vanishes for Heston-type models).
    """
    m, d = chars.m, chars.d
    a = chars.alpha0.copy()
    if x is not None:
        x = np.asarray(x, dtype=float).reshape(d)
        a = a + np.einsum("j,jkl->kl", x, chars.alpha1)
    A = a[m:, m:]
    B = chars.beta1[m:, m:]
    lam_a = _lam_max(A)
    ss = np.linspace(0.0, T, n_s)
    e2 = np.array([_lam_max(expm(t * B)) ** 2 if B.size else 0.0 for t in ss])
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (e2[1:] + e2[:-1]) * np.diff(ss))])
    Lam = float(np.max(np.maximum(lam_a * integral, lam_a * e2)))
    return SubmatrixBounds(A, B, Lam, kappa, R)


def weight_profiles(bounds: SubmatrixBounds, d: int = 1, safety: float = 1.0
                    ) -> tuple[Callable, Callable]:
    """``rho0(v) = exp(-L d v^2)`` and ``rho1(v) = L d (1 + v^2)``, ``L = safety * Lambda``."""
    lam = safety * bounds.Lambda
    if lam <= 0:
        raise ValueError("weight profiles need Lambda > 0")

    def rho0(v):
        v = np.asarray(v, dtype=float)
        # floored so the clamp stays strictly positive after underflow
        return np.maximum(np.exp(-lam * d * v * v), np.finfo(float).tiny)

    def rho1(v):
        v = np.asarray(v, dtype=float)
        return lam * d * (1.0 + v * v)

    return rho0, rho1


def validate_profiles(chars: AffineCharacteristics, profiles, x, T: float,
                      v_grid, n_s: int = 11, index: int | None = None) -> dict:
    """Check ``rho0 <= |phi|`` and ``|d_s psi| <= rho1`` on a grid.

    Returns the worst margins (negative means violated) over the sup-norm
    sphere ``||u|| = v``: both signs in 1-d, the square boundary in 2-d, or
    both signs along coordinate ``index`` when given.
    """
    rho0, rho1 = profiles
    v_grid = np.asarray(v_grid, dtype=float)
    x = np.asarray(x, dtype=float).reshape(chars.d)
    if index is not None:
        dirs = np.zeros((2, chars.d))
        dirs[0, index], dirs[1, index] = 1.0, -1.0
    elif chars.d == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        t = np.linspace(-1, 1, 9)
        dirs = np.vstack([np.column_stack([np.ones_like(t), t]), np.column_stack([-np.ones_like(t), t]),
                          np.column_stack([t, np.ones_like(t)]), np.column_stack([t, -np.ones_like(t)])])
    u = v_grid[:, None, None] * dirs[None, :, :]
    m0, m1 = np.inf, np.inf
    for s in np.linspace(0.0, T, n_s):
        psi0, psi1 = riccati_solve(u, s, chars)
        phi = np.abs(np.exp(psi0 + psi1 @ x))
        dpsi = np.abs(chars.F0(psi1) + chars.F1(psi1) @ x)
        m0 = min(m0, float(np.min(phi - rho0(v_grid)[:, None])))
        m1 = min(m1, float(np.min(rho1(v_grid)[:, None] - dpsi)))
    return {"rho0_margin": m0, "rho1_margin": m1, "ok": m0 >= -1e-12 and m1 >= -1e-12}


SAFETY_LADDER = (1.0, 1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0)


def calibrate_safety(chars: AffineCharacteristics, bounds: SubmatrixBounds, x, T: float, v_grid,
                     index: int | None = None, ladder=SAFETY_LADDER, n_s: int = 11) -> float:
    """Smallest factor on ``ladder`` for which the profiles validate; raises if none does."""
    for f in ladder:
        prof = weight_profiles(bounds, d=1 if index is not None else chars.d, safety=f)
        if validate_profiles(chars, prof, x, T, v_grid, n_s, index)["ok"]:
            return float(f)
    raise ValueError(f"weight profiles do not validate for any safety factor up to {ladder[-1]}")
