"""Two-profile functional for a pair of fields oscillating against each other.

For a pair (f, g) the limit of int |f + e^{i lambda x_N} g|^q as lambda -> oo
is the phase average

    Phi_q(f, g) = (1/2pi) int int_{-pi}^{pi} |f + e^{i theta} g|^q d theta dx
                = int (|f|^2 + |g|^2)^{q/2} phi(2|f||g| / (|f|^2 + |g|^2)) dx,

    phi(t) = (1/pi) int_0^pi (1 + t cos theta)^{q/2} d theta,

and Phi_q(f, g) <= c(q) (||f||_q^2 + ||g||_q^2)^{q/2} with c(q) = phi(1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .geometry import GridError, ProfileFunction
from .strichartz import PARABOLIC, Dispersion, modulus_energy, prefactor, strichartz_exponent

N_GL = 128


_GL_THETA = None


def _gl_theta():
    global _GL_THETA
    if _GL_THETA is None:
        x, w = np.polynomial.legendre.leggauss(N_GL)
        _GL_THETA = (np.pi / 2 * (x + 1), w / 2)
    return _GL_THETA


def phi_of_t(t, q: float):
    """(1/pi) int_0^pi (1 + t cos theta)^{q/2} d theta, vectorised in t.

    For even integer q the integrand is a polynomial in cos theta and the
    average is summed exactly from the moments of cos^{2k}.  Otherwise
    Gauss-Legendre in theta is used; at t = 1 the integrand vanishes like
    (pi - theta)^q at the end point, which Gauss-Legendre tolerates far
    better than the periodic trapezoid rule.
    """
    if q < 2:
        raise ValueError("q must be >= 2")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > 1):
        raise ValueError("t must lie in [0, 1]")
    m = q / 2
    if m == int(m):
        m = int(m)
        out = np.zeros_like(t_arr)
        for k in range(m // 2 + 1):
            # (1/pi) int_0^pi cos^{2k} = binom(2k, k) / 4^k
            mom = math.comb(2 * k, k) / 4**k
            out = out + math.comb(m, 2 * k) * mom * t_arr ** (2 * k)
    else:
        th, w = _gl_theta()
        base = np.maximum(1 + t_arr[..., None] * np.cos(th), 0.0)
        out = base**m @ w
    return float(out) if np.ndim(out) == 0 else out


def c_constant(q: float) -> float:
    """2^{q/2} Gamma((q+1)/2) / (sqrt(pi) Gamma((q+2)/2))."""
    if q < 2:
        raise ValueError("q must be >= 2")
    return math.exp(
        (q / 2) * math.log(2) + gammaln((q + 1) / 2) - gammaln((q + 2) / 2) - 0.5 * math.log(math.pi)
    )


@dataclass(frozen=True)
class TwoProfileInput:
    """Pair of sampled fields sharing quadrature weights.

    ``f`` and ``g`` are arrays of field values; ``weights`` are the
    quadrature weights of the common grid (a SpaceGrid's weights, or the
    cell volume of a profile lattice).
    """

    f: np.ndarray
    g: np.ndarray
    weights: np.ndarray
    q: float

    def __post_init__(self):
        f = np.asarray(self.f, dtype=complex)
        g = np.asarray(self.g, dtype=complex)
        w = np.broadcast_to(np.asarray(self.weights, dtype=float), f.shape)
        if f.shape != g.shape:
            raise GridError("f and g must live on the same grid")
        if self.q < 2:
            raise ValueError("q must be >= 2")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_profiles(cls, f: ProfileFunction, g: ProfileFunction, q: float):
        if f.shape != g.shape or f.spacing != g.spacing or f.offsets != g.offsets:
            raise GridError("profiles must share a lattice")
        return cls(f.values, g.values, f.spacing**f.d, q)

    def lq_norm_q(self, which: str) -> float:
        v = self.f if which == "f" else self.g
        return float(np.sum(self.weights * np.abs(v) ** self.q))


def pair_density(a: np.ndarray, b: np.ndarray, q: float) -> np.ndarray:
    """Phase average of |a + e^{i theta} b|^q from the moduli |a|, |b|."""
    a, b = np.abs(a), np.abs(b)
    s = a * a + b * b
    out = np.zeros_like(s)
    nz = s > 0
    alpha = np.minimum(2 * a[nz] * b[nz] / s[nz], 1.0)
    chunk = max(1, 4_000_000 // N_GL)
    vals = np.empty(alpha.size)
    for i in range(0, alpha.size, chunk):
        vals[i : i + chunk] = phi_of_t(alpha[i : i + chunk], q)
    out[nz] = s[nz] ** (q / 2) * vals
    return out


def phi_q_functional(inp: TwoProfileInput, lam: float | None = None, positions=None) -> float:
    """Phi_q(f, g) by the phase average.

    With ``lam`` set (and ``positions`` giving x_N per sample) the finite
    oscillatory integral int |f + e^{i lam x_N} g|^q is returned instead, for
    watching the lambda -> oo convergence.
    """
    if lam is not None:
        if positions is None:
            raise ValueError("lambda probe needs the x_N coordinate of every sample")
        xn = np.broadcast_to(np.asarray(positions, dtype=float), inp.f.shape)
        dens = np.abs(inp.f + np.exp(1j * lam * xn) * inp.g) ** inp.q
        return float(np.sum(inp.weights * dens))
    return float(np.sum(inp.weights * pair_density(inp.f, inp.g, inp.q)))


def two_profile_inequality_residual(inp: TwoProfileInput) -> float:
    """c(q) (||f||_q^2 + ||g||_q^2)^{q/2} - Phi_q(f, g)."""
    q = inp.q
    nf = inp.lq_norm_q("f") ** (2 / q)
    ng = inp.lq_norm_q("g") ** (2 / q)
    return c_constant(q) * (nf + ng) ** (q / 2) - phi_q_functional(inp)


def tilde_strichartz_quotient(
    psi_plus: ProfileFunction,
    psi_minus: ProfileFunction | None,
    d: int | None = None,
    disp: Dispersion = PARABOLIC,
    n_time: int = 24,
    pad: float = 2.0,
) -> float:
    """Two-profile Strichartz quotient.

    (2pi)^{-(d+2)/d} Phi_q(e^{it Delta/2} psi+, e^{-it Delta/2} psi-)
    / (||psi+||^2 + ||psi-||^2)^{q/2} over space-time.
    """
    d = psi_plus.d if d is None else d
    q = strichartz_exponent(d)
    n2 = psi_plus.norm() ** 2 + (psi_minus.norm() ** 2 if psi_minus is not None else 0.0)
    if n2 == 0:
        raise ValueError("both profiles vanish")
    if psi_minus is None:
        E, _ = modulus_energy(psi_plus, None, lambda a, b: a**q, disp, n_time, pad=pad)
    else:
        E, _ = modulus_energy(
            psi_plus, psi_minus, lambda a, b: pair_density(a, b, q), disp, n_time, pad=pad
        )
    return prefactor(d) * E / n2 ** (q / 2)
