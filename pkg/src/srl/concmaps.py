"""Concentration maps between planar profiles and sphere functions.

B_delta sends a pair (phi+, phi-) on R^{N-1} to the sphere function equal to

    (1 + xi^2)^{N/4} delta^{-(N-1)/2} phi^{+-}(xi / delta)

at the hemisphere point (xi, +-1) / sqrt(1 + xi^2).  It is unitary.  The
rescaled extension operators

    T_delta psi(x) = (2pi)^{-(N-1)/2} int psi_hat(xi)
        exp(i(xi.x' z1(delta|xi|) - xi^2 x_N z2(delta|xi|) / 2))
        (1 + delta^2 xi^2)^{-N/4} d xi

interpolate between the sphere (delta > 0) and the free Schrodinger flow
(delta = 0), and for f = B_delta(psi+_hat, psi-_hat)

    delta^{-(N-1)/2} f_check(x'/delta, x_N/delta^2)
        = (2pi)^{-1/2} (e^{i x_N/delta^2} T_delta psi+(x)
                        + e^{-i x_N/delta^2} T_delta psi-(x', -x_N)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.stats import special_ortho_group

from .extension import extend
from .geometry import (
    GridError,
    ProfileFunction,
    SphereFunction,
    SphereGrid,
    gauss_legendre,
    interpolate,
    make_profile,
)

ZETA_SWITCH = 1e-4
EQUATOR_TOL = 1e-14

Profile = Union[ProfileFunction, Callable]


def zeta(k):
    """(z1(k), z2(k)) with z1 = (1+k^2)^{-1/2}, z2 = 2(1 - z1)/k^2.

    Below k = 1e-4 z2 switches to its Taylor series 1 - 3k^2/4 + 5k^4/8.
    """
    k_arr = np.asarray(k, dtype=float)
    if np.any(k_arr < 0):
        raise ValueError("zeta needs k >= 0")
    k2 = k_arr * k_arr
    z1 = 1.0 / np.sqrt(1.0 + k2)
    small = k_arr < ZETA_SWITCH
    with np.errstate(divide="ignore", invalid="ignore"):
        # 2(1 - z1)/k^2 = 2 / (sqrt(1+k^2) (1 + sqrt(1+k^2))) avoids cancellation
        root = np.sqrt(1.0 + k2)
        z2 = np.where(small, 1 - 0.75 * k2 + 0.625 * k2 * k2, 2.0 / (root * (1 + root)))
    if np.ndim(z1) == 0:
        return float(z1), float(z2)
    return z1, z2


@dataclass(frozen=True)
class ConcentrationFrame:
    """Rotation R, scale delta and modulation a of a concentration map."""

    R: np.ndarray
    delta: float
    a: np.ndarray = field(default=None)

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        N = R.shape[0]
        if R.shape != (N, N) or not np.allclose(R.T @ R, np.eye(N), atol=1e-12, rtol=0):
            raise ValueError("R must be an orthogonal matrix")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        a = np.zeros(N) if self.a is None else np.asarray(self.a, dtype=float)
        if a.shape != (N,):
            raise ValueError("modulation vector has the wrong dimension")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "a", a)

    @property
    def N(self) -> int:
        return self.R.shape[0]

    @classmethod
    def identity(cls, N: int, delta: float):
        return cls(np.eye(N), delta)


def random_rotation(N: int, seed: int) -> np.ndarray:
    return special_ortho_group.rvs(N, random_state=seed)


def _eval_profile(phi: Profile | None, pts: np.ndarray) -> np.ndarray:
    if phi is None:
        return np.zeros(len(pts), dtype=complex)
    if isinstance(phi, ProfileFunction):
        return phi.evaluate(pts)
    return np.asarray(phi(pts), dtype=complex)


def b_map(phi_plus: Profile | None, phi_minus: Profile | None, frame: ConcentrationFrame,
          grid: SphereGrid) -> SphereFunction:
    """e^{i a.omega} B_{R,delta}(phi+, phi-) sampled on ``grid``.

    Profiles may be ProfileFunctions (band-limited interpolation) or
    vectorised callables of (M, N-1) points.
    """
    if grid.N != frame.N:
        raise GridError("frame and grid dimensions differ")
    N, delta = grid.N, frame.delta
    w = grid.nodes @ frame.R  # rows are R^{-1} omega
    wn = w[:, -1]
    if np.any(np.abs(wn) < EQUATOR_TOL):
        raise GridError("a grid node lies on the cutting equator")
    xi = w[:, :-1] / np.abs(wn)[:, None]
    amp = (1 + np.sum(xi**2, axis=1)) ** (N / 4) * delta ** (-(N - 1) / 2)
    vals = np.zeros(grid.size, dtype=complex)
    up = wn > 0
    vals[up] = _eval_profile(phi_plus, xi[up] / delta)
    vals[~up] = _eval_profile(phi_minus, xi[~up] / delta)
    vals *= amp * np.exp(1j * grid.nodes @ frame.a)
    return SphereFunction(grid, vals)


def b_inverse(f: SphereFunction, frame: ConcentrationFrame, spacing: float = 0.25,
              half_width: float = 8.0):
    """B_{R,delta}^{-1}(e^{-ia.omega} f) sampled on a symmetric lattice.

    Values between sphere nodes come from spectral interpolation.
    """
    N, delta = f.grid.N, frame.delta
    d = N - 1
    base = make_profile(d, spacing, half_width)
    eta = np.stack([m.ravel() for m in base.mesh()], axis=1)
    xi = delta * eta
    s = 1 + np.sum(xi**2, axis=1)
    out = []
    for sign in (1.0, -1.0):
        local = np.concatenate([xi, np.full((len(xi), 1), sign)], axis=1) / np.sqrt(s)[:, None]
        omega = local @ frame.R.T
        vals = interpolate(f, omega) * np.exp(-1j * omega @ frame.a)
        vals = vals * delta ** (d / 2) * s ** (-N / 4)
        out.append(base.with_values(vals.reshape(base.shape)))
    return out[0], out[1]


# --- rescaled extension operators -------------------------------------------


def _freq_points(psi: ProfileFunction):
    mesh = np.meshgrid(*psi.freq_axes(), indexing="ij")
    xi = np.stack([m.ravel() for m in mesh], axis=1)
    cell = np.prod([2 * np.pi / (n * psi.spacing) for n in psi.shape])
    return xi, cell


def t_delta(psi: ProfileFunction, delta: float, x, multiplier: Callable | None = None) -> np.ndarray:
    """T_delta psi at points x (shape (N,) or (M, N)), summed over the FFT lattice.

    ``multiplier`` (a function of |xi|) is applied to psi_hat first.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    d = psi.d
    if x.shape[1] != d + 1:
        raise GridError("points must have N = d + 1 coordinates")
    N = d + 1
    xi, cell = _freq_points(psi)
    F = psi.fourier().ravel()
    k = np.sqrt(np.sum(xi**2, axis=1))
    if multiplier is not None:
        F = F * multiplier(k)
    keep = np.abs(F) > 0
    xi, F, k = xi[keep], F[keep], k[keep]
    z1, z2 = zeta(delta * k)
    amp = F * (1 + (delta * k) ** 2) ** (-N / 4) * cell * (2 * np.pi) ** (-d / 2)
    out = np.empty(len(x), dtype=complex)
    chunk = max(1, 4_000_000 // max(len(F), 1))
    for s in range(0, len(x), chunk):
        xs = x[s : s + chunk]
        phase = (xs[:, :d] @ xi.T) * z1[None, :] - 0.5 * xs[:, d : d + 1] * (k**2 * z2)[None, :]
        out[s : s + chunk] = np.exp(1j * phase) @ amp
    return complex(out[0]) if single else out


def bt_identity_residual(psi_plus: ProfileFunction, psi_minus: ProfileFunction | None,
                         delta: float, grid: SphereGrid, points: np.ndarray) -> float:
    """Max |lhs - rhs| of the sphere/plane rescaling identity at ``points``.

    The sphere function is f = B_delta(psi+_hat, psi-_hat) with the
    transforms evaluated exactly from the lattice samples.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    N = grid.N
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    hat_p = lambda xi: psi_plus.fourier_at(xi)  # noqa: E731
    hat_m = None if psi_minus is None else (lambda xi: psi_minus.fourier_at(xi))
    f = b_map(hat_p, hat_m, ConcentrationFrame.identity(N, delta), grid)
    y = pts.copy()
    y[:, :-1] /= delta
    y[:, -1] /= delta**2
    lhs = delta ** (-(N - 1) / 2) * extend(f, y)
    ph = np.exp(1j * pts[:, -1] / delta**2)
    rhs = ph * t_delta(psi_plus, delta, pts)
    if psi_minus is not None:
        flipped = pts.copy()
        flipped[:, -1] *= -1
        rhs = rhs + np.conj(ph) * t_delta(psi_minus, delta, flipped)
    rhs = rhs / math.sqrt(2 * math.pi)
    return float(np.max(np.abs(lhs - rhs)))


def smoothing_multiplier(delta: float):
    """(|xi|^2 / (delta^2 |xi|^2 + 1))^{1/4}, the quarter-derivative gain."""
    return lambda k: (k * k / (delta * delta * k * k + 1)) ** 0.25


def local_smoothing_ratio(a: Callable | None, psi: ProfileFunction, delta: float,
                          n_rho: int = 96, n_sigma: int = 64, box: float = 6.0,
                          n_box: int = 48) -> float:
    """int a(x') |T_delta m(D) psi|^2 dx / ||psi||^2 over all of R^N.

    The x_N integral is done exactly by Plancherel after the radial change
    of variables tau = p(rho) = (1 - z1(delta rho)) / delta^2:

        int |T g(x', x_N)|^2 dx_N = (2pi)^{1-d} int_0^oo rho^{2(d-1)} / p'(rho)
            (1 + delta^2 rho^2)^{-N/2} |int_{S^{d-1}} g_hat(rho s)
            e^{i rho z1 s.x'} ds|^2 d rho.

    ``a`` defaults to exp(-|x'|^2); x' is integrated by Gauss-Legendre on
    [-box, box]^d.
    """
    if a is None:
        a = lambda xp: np.exp(-np.sum(xp**2, axis=-1))  # noqa: E731
    d = psi.d
    N = d + 1
    norm2 = psi.norm() ** 2
    if norm2 == 0:
        raise ValueError("zero profile")
    # radial range from the lattice Nyquist frequency
    rho_max = math.pi / psi.spacing
    rho, w_rho = gauss_legendre(n_rho, 0.0, rho_max)
    if d == 1:
        sig = np.array([[1.0], [-1.0]])
        w_sig = np.array([1.0, 1.0])
    elif d == 2:
        th = 2 * np.pi * np.arange(n_sigma) / n_sigma
        sig = np.stack([np.cos(th), np.sin(th)], axis=1)
        w_sig = np.full(n_sigma, 2 * np.pi / n_sigma)
    else:
        raise GridError("local smoothing ratio implemented for d in {1, 2}")
    xb, wb = gauss_legendre(n_box, -box, box)
    mesh = np.meshgrid(*([xb] * d), indexing="ij")
    xp = np.stack([m.ravel() for m in mesh], axis=1)
    wx = np.ones(len(xp))
    for ax in range(d):
        wm = np.meshgrid(*([wb] * d), indexing="ij")[ax].ravel()
        wx = wx * wm
    wx = wx * a(xp)
    m = smoothing_multiplier(delta)(rho)
    z1, _ = zeta(delta * rho)
    dp = rho * (1 + (delta * rho) ** 2) ** (-1.5)
    radial = rho ** (2 * (d - 1)) / dp * (1 + (delta * rho) ** 2) ** (-N / 2) * m**2
    total = 0.0
    for i in range(n_rho):
        ghat = psi.fourier_at(rho[i] * sig) * w_sig
        inner = np.exp(1j * rho[i] * z1[i] * (xp @ sig.T)) @ ghat
        total += w_rho[i] * radial[i] * float(np.sum(wx * np.abs(inner) ** 2))
    return (2 * np.pi) ** (1 - d) * total / norm2


def weak_limit_probe(psi_sequence, delta_sequence, box: float = 2.0, n_box: int = 16) -> list:
    """||T_{delta_n} psi_n||_{L^2(K)} for K = [-box, box]^N."""
    if len(psi_sequence) != len(delta_sequence):
        raise ValueError("sequences must have equal length")
    out = []
    for psi, delta in zip(psi_sequence, delta_sequence):
        N = psi.d + 1
        xb, wb = gauss_legendre(n_box, -box, box)
        mesh = np.meshgrid(*([xb] * N), indexing="ij")
        wmesh = np.meshgrid(*([wb] * N), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        w = np.prod([m.ravel() for m in wmesh], axis=0)
        vals = t_delta(psi, delta, pts)
        out.append(math.sqrt(float(np.sum(w * np.abs(vals) ** 2))))
    return out
