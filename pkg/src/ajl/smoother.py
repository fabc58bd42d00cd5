"""Local-linear estimation of a conditional c.f. and its time derivative.

Records ``(delta_n, X_n)`` with ``X_n`` the state after lag ``delta_n`` are
regressed in ``delta`` around ``s`` with kernel weights.  The intercept is
``phi(u|s,x)`` and the slope is ``d/ds phi(u|s,x)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

from .sim import IidPairs, ObservationSet, RandomDesign, _atomic_write


class NoDataError(ValueError):
    """No lag falls inside the kernel window."""


def epanechnikov(z):
    z = np.asarray(z, dtype=float)
    return np.where(np.abs(z) <= 1.0, 0.75 * (1.0 - z * z), 0.0)


def uniform_kernel(z):
    z = np.asarray(z, dtype=float)
    return np.where(np.abs(z) <= 1.0, 0.5, 0.0)


KERNELS = {"epanechnikov": epanechnikov, "uniform": uniform_kernel}


def bandwidth_rule(N, r=0.2) -> float:
    """``h = (log(N)^(1+r) / N)^(1/5)``."""
    if N < 2:
        raise ValueError("bandwidth rule needs N >= 2")
    if r <= 0:
        raise ValueError("r must be positive")
    return (math.log(N) ** (1.0 + r) / N) ** 0.2


def sup_weight(v):
    """``min(1, v^-4)`` on the max-norm of ``u``."""
    v = np.abs(np.asarray(v, dtype=float))
    with np.errstate(divide="ignore"):
        return np.where(v <= 1.0, 1.0, 1.0 / np.maximum(v, 1.0) ** 4)


@dataclass(frozen=True)
class SmootherConfig:
    s: float = 0.0
    h: float | None = None  # None -> bandwidth_rule(N, r)
    kernel: str = "epanechnikov"
    gamma0: float | None = None  # None -> half the smallest eigenvalue of the design reference
    r: float = 0.2

    def __post_init__(self):
        if self.s < 0:
            raise ValueError("evaluation time s must be >= 0")
        if self.h is not None and self.h <= 0:
            raise ValueError("bandwidth h must be positive")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.gamma0 is not None and self.gamma0 <= 0:
            raise ValueError("gamma0 must be positive")
        if self.r <= 0:
            raise ValueError("r must be positive")

    def bandwidth(self, N: int) -> float:
        return self.h if self.h is not None else bandwidth_rule(N, self.r)


@dataclass(frozen=True)
class SmootherState:
    h: float
    s: float
    S: np.ndarray  # S_{N,0..2}
    Gamma: np.ndarray
    GammaBar: np.ndarray | None
    gamma0: float
    lambda_min: float
    truncated: bool
    tau0: np.ndarray = field(repr=False)
    tau1: np.ndarray = field(repr=False)


def _lags(obs: ObservationSet) -> np.ndarray:
    return np.asarray(obs.delta, dtype=float)


def kernel_moments(design, s: float, h: float, kernel: str = "epanechnikov") -> np.ndarray:
    """``mu_l(s) = int z^l K(z) p(s + h z) dz`` for ``l = 0, 1, 2``."""
    if not hasattr(design, "pdf"):
        raise ValueError("design has no lag density")
    K = KERNELS[kernel]
    # integrate only over the part of [-1, 1] where p is nonzero
    lo = max(-1.0, (0.0 - s) / h)
    hi = min(1.0, (design.T - s) / h)
    if hi <= lo:
        return np.zeros(3)
    out = []
    for l in range(3):
        f = lambda z, l=l: z ** l * float(K(z)) * float(design.pdf(s + h * z))
        out.append(integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-12)[0])
    return np.array(out)


def gamma_matrices(obs: ObservationSet, config: SmootherConfig) -> SmootherState:
    """Design matrices, eigenvalue check and local-linear weights at ``config.s``."""
    t = _lags(obs)
    N = t.size
    h = config.bandwidth(N)
    s = config.s
    dt = t - s
    k = KERNELS[config.kernel](dt / h)
    S = np.array([np.sum(k), np.sum(k * dt), np.sum(k * dt * dt)])
    Gamma = np.array([[S[0] / h, S[1] / h ** 2], [S[1] / h ** 2, S[2] / h ** 3]]) / N
    GammaBar = None
    if isinstance(obs.design, RandomDesign):
        mu = kernel_moments(obs.design, s, h, config.kernel)
        GammaBar = np.array([[mu[0], mu[1]], [mu[1], mu[2]]])
    gamma0 = config.gamma0
    if gamma0 is None:
        if GammaBar is None:
            raise ValueError("gamma0 must be given when the design has no lag density")
        gamma0 = 0.5 * float(np.linalg.eigvalsh(GammaBar)[0])
        if gamma0 <= 0:
            raise ValueError("design reference matrix is not positive definite at s")
    lam = float(np.linalg.eigvalsh(Gamma)[0])
    truncated = bool(lam <= gamma0 / 2.0)
    # local-linear weights; denominators coincide with sum_k b_{0,k} = S0 S2 - S1^2
    b0 = k * (S[2] - dt * S[1])
    b1 = k * (dt * S[0] - S[1])
    den = S[0] * S[2] - S[1] ** 2
    if truncated or den <= 0:
        tau0 = np.zeros(N)
        tau1 = np.zeros(N)
    else:
        tau0 = b0 / den
        tau1 = b1 / den
    return SmootherState(h=h, s=s, S=S, Gamma=Gamma, GammaBar=GammaBar, gamma0=gamma0,
                         lambda_min=lam, truncated=truncated, tau0=tau0, tau1=tau1)


def _as_u(u, d: int) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if d == 1 and (u.ndim == 0 or u.shape[-1] != 1):
        u = u[..., None]
    if u.shape[-1] != d:
        raise ValueError(f"frequency dimension {u.shape[-1]} does not match state dimension {d}")
    return u


def _exp_iux(u: np.ndarray, X: np.ndarray) -> np.ndarray:
    t = u.reshape(-1, u.shape[-1]) @ X.T
    return np.cos(t) + 1j * np.sin(t)


def _window_check(obs: ObservationSet, state: SmootherState):
    if state.S[0] <= 0:
        raise NoDataError(f"no lag inside the kernel window [{state.s - state.h:g}, {state.s + state.h:g}]")


def local_linear_fit(obs: ObservationSet, u, config: SmootherConfig, state: SmootherState | None = None):
    """Return ``(phi_hat, phi_s_hat, state)`` at frequency ``u`` (scalar or d-vector)."""
    if state is None:
        state = gamma_matrices(obs, config)
    _window_check(obs, state)
    uu = _as_u(u, obs.d)
    e = _exp_iux(uu, obs.x_end)
    phi = e @ state.tau0
    phis = e @ state.tau1
    shape = uu.shape[:-1]
    return phi.reshape(shape)[()], phis.reshape(shape)[()], state


@dataclass
class SmoothedCF:
    u_grid: np.ndarray
    phi_hat: np.ndarray
    phi_s_hat: np.ndarray
    state: SmootherState
    config: SmootherConfig
    X: np.ndarray = field(repr=False)

    weight = staticmethod(sup_weight)

    def evaluate(self, u):
        """``(phi_hat, phi_s_hat)`` at arbitrary frequencies, same weights."""
        uu = _as_u(u, self.X.shape[1])
        shape = uu.shape[:-1]
        out0 = np.empty(int(np.prod(shape, dtype=int)), dtype=complex)
        out1 = np.empty_like(out0)
        flat = uu.reshape(-1, uu.shape[-1])
        step = max(1, 2_000_000 // max(1, self.X.shape[0]))
        for i in range(0, flat.shape[0], step):
            e = _exp_iux(flat[i:i + step], self.X)
            out0[i:i + step] = e @ self.state.tau0
            out1[i:i + step] = e @ self.state.tau1
        return out0.reshape(shape)[()], out1.reshape(shape)[()]

    def weighted_errors(self, phi_true, phi_s_true):
        """Weighted sup-errors of both estimates against oracle values on ``u_grid``."""
        w = sup_weight(np.max(np.abs(self.u_grid.reshape(len(self.phi_hat), -1)), axis=1))
        e0 = float(np.max(w * np.abs(self.phi_hat - phi_true)))
        e1 = float(np.max(w * np.abs(self.phi_s_hat - phi_s_true)))
        return e0, e1


def smoothed_cf_grid(obs: ObservationSet, u_grid, config: SmootherConfig) -> SmoothedCF:
    """Local-linear fits on a frequency grid sharing one design state."""
    u_grid = np.asarray(u_grid, dtype=float)
    if u_grid.size == 0:
        raise ValueError("u_grid is empty")
    state = gamma_matrices(obs, config)
    _window_check(obs, state)
    out = SmoothedCF(u_grid=u_grid, phi_hat=np.empty(0), phi_s_hat=np.empty(0),
                     state=state, config=config, X=np.asarray(obs.x_end, dtype=float))
    out.phi_hat, out.phi_s_hat = (np.atleast_1d(a) for a in out.evaluate(u_grid))
    return out


def fd_cf_derivative(obs: ObservationSet, u):
    """Forward difference ``(N Delta)^-1 sum [exp(iuX(Delta)) - exp(iuX(0))]``.

    Biased by ``O(Delta)`` as an estimate of the time derivative at 0.
    """
    if not isinstance(obs.design, IidPairs):
        raise ValueError("finite-difference derivative needs an iid-pairs design")
    uu = _as_u(u, obs.d)
    shape = uu.shape[:-1]
    diff = _exp_iux(uu, obs.x_end) - _exp_iux(uu, obs.x_start)
    out = diff.sum(axis=1) / (obs.N * obs.design.Delta)
    return out.reshape(shape)[()]


# -- persistence -----------------------------------------------------------------

def save_smoothed_cf(cf: SmoothedCF, csv_path) -> tuple[Path, Path]:
    csv_path = Path(csv_path)
    u = cf.u_grid.reshape(len(cf.phi_hat), -1)
    d = u.shape[1]
    head = [f"u_{k + 1}" for k in range(d)] + ["re_phi", "im_phi", "re_phis", "im_phis"]
    lines = [",".join(head)]
    for i in range(len(cf.phi_hat)):
        vals = [*u[i], cf.phi_hat[i].real, cf.phi_hat[i].imag, cf.phi_s_hat[i].real, cf.phi_s_hat[i].imag]
        lines.append(",".join(repr(float(v)) for v in vals))
    _atomic_write(csv_path, "\n".join(lines) + "\n")
    meta = {"h": cf.state.h, "s": cf.state.s, "kernel": cf.config.kernel,
            "gamma0": cf.state.gamma0, "lambda_min": cf.state.lambda_min,
            "truncated": cf.state.truncated}
    side = csv_path.with_suffix(".json")
    _atomic_write(side, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return csv_path, side


def load_smoothed_table(csv_path):
    """Read a saved grid back as ``(u, phi_hat, phi_s_hat, meta)``."""
    csv_path = Path(csv_path)
    arr = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    u = arr[:, :-4]
    phi = arr[:, -4] + 1j * arr[:, -3]
    phis = arr[:, -2] + 1j * arr[:, -1]
    return u, phi, phis, meta
