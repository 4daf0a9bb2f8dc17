"""The extension operator f -> f_check and the Stein-Tomas quotient.

    f_check(x) = (2 pi)^{-N/2} int_{S^{N-1}} exp(i x.omega) f(omega) d omega

Evaluation on a SpaceGrid uses the shared azimuthal structure of sphere and
space grids: for every radius the azimuthal sum is a circular convolution,
done with FFTs.  This is an exact reorganisation of the direct quadrature sum.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .geometry import (
    GridError,
    SpaceGrid,
    SphereFunction,
    SphereGrid,
    stein_tomas_exponent,
)

TRUSTED_TAIL = 0.1


def _prefactor(N: int) -> float:
    return (2 * math.pi) ** (-N / 2)


def extend(f: SphereFunction, x) -> complex | np.ndarray:
    """f_check at one point (shape (N,)) or many points (shape (M, N))."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("extension point must be finite")
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    grid = f.grid
    wf = grid.weights * f.values
    out = np.empty(len(pts), dtype=complex)
    chunk = max(1, 2_000_000 // grid.size)
    for s in range(0, len(pts), chunk):
        phase = pts[s : s + chunk] @ grid.nodes.T
        out[s : s + chunk] = np.exp(1j * phase) @ wf
    out *= _prefactor(grid.N)
    return complex(out[0]) if single else out


def extend_adjoint(F: np.ndarray, points: np.ndarray, weights: np.ndarray, grid: SphereGrid) -> SphereFunction:
    """(2 pi)^{-N/2} sum_k W_k exp(-i x_k.omega) F_k at the sphere nodes."""
    F = np.asarray(F, dtype=complex).ravel()
    wF = np.asarray(weights).ravel() * F
    out = np.zeros(grid.size, dtype=complex)
    chunk = max(1, 2_000_000 // grid.size)
    for s in range(0, len(F), chunk):
        phase = points[s : s + chunk] @ grid.nodes.T
        out += wF[s : s + chunk] @ np.exp(-1j * phase)
    return SphereFunction(grid, out * _prefactor(grid.N))


class ExtensionOperator:
    """Extension from a SphereGrid to a SpaceGrid and its adjoint.

    Both grids must share the azimuthal node count (and offset); the kernel
    transforms are cached per radius when they fit in ``cache_bytes``.
    """

    def __init__(self, sphere: SphereGrid, space: SpaceGrid, cache_bytes: float = 4e8):
        if sphere.N != space.N:
            raise GridError("sphere and space grids have different dimensions")
        ang = space.angular
        if ang.n_phi != sphere.n_phi or abs(ang._phi0 - sphere._phi0) > 1e-15:
            raise GridError("sphere and space angular grids must share azimuths")
        self.sphere = sphere
        self.space = space
        self.N = sphere.N
        self.m = sphere.n_phi
        if self.N == 2:
            self._ts = np.array([0.0])
            self._ss = np.array([1.0])
            self._tn = np.array([0.0])
            self._sn = np.array([1.0])
        else:
            self._ts = sphere.cos_theta
            self._ss = np.sqrt(1 - self._ts**2)
            self._tn = ang.cos_theta
            self._sn = np.sqrt(1 - self._tn**2)
        # per-row sphere weight (theta weight times azimuth step)
        self._row_w = sphere.weights[:: sphere.n_phi]
        per_r = len(self._tn) * len(self._ts) * self.m * 16
        self._cache = {} if per_r * len(space.radii) <= cache_bytes else None

    def _kernel_hat(self, i_r: int) -> np.ndarray:
        if self._cache is not None and i_r in self._cache:
            return self._cache[i_r]
        r = self.space.radii[i_r]
        dphi = np.arange(self.m) * (2 * np.pi / self.m)
        if self.N == 2:
            K = np.exp(1j * r * np.cos(dphi))[None, None, :]
        else:
            a = np.outer(self._tn, self._ts)[:, :, None]
            b = np.outer(self._sn, self._ss)[:, :, None]
            K = np.exp(1j * r * (a + b * np.cos(dphi)[None, None, :]))
        Kh = np.fft.fft(K, axis=-1)
        if self._cache is not None:
            self._cache[i_r] = Kh
        return Kh

    def apply(self, f: SphereFunction) -> np.ndarray:
        """f_check on the space grid, shape (n_radii, n_angular)."""
        if f.grid is not self.sphere:
            from .geometry import _check_same

            _check_same(f.grid, self.sphere)
        n_ts = len(self._ts)
        vals = f.values.reshape(n_ts, self.m) * self._row_w[:, None]
        fh = np.fft.fft(vals, axis=-1)
        out = np.empty((len(self.space.radii), len(self._tn), self.m), dtype=complex)
        for i_r in range(len(self.space.radii)):
            Kh = self._kernel_hat(i_r)
            out[i_r] = np.fft.ifft(np.einsum("abk,bk->ak", Kh, fh), axis=-1)
        return out.reshape(len(self.space.radii), -1) * _prefactor(self.N)

    def adjoint(self, F: np.ndarray, weights: np.ndarray | None = None) -> SphereFunction:
        """Adjoint of ``apply`` for the space weights (or ``weights``)."""
        if weights is None:
            weights = self.space.weights
        nr = len(self.space.radii)
        G = (np.asarray(weights).ravel() * np.asarray(F).ravel()).reshape(nr, len(self._tn), self.m)
        acc = np.zeros((len(self._ts), self.m), dtype=complex)
        Gh = np.fft.fft(G, axis=-1)
        for i_r in range(nr):
            Kh = self._kernel_hat(i_r)
            acc += np.einsum("abk,ak->bk", np.conj(Kh), Gh[i_r])
        out = np.fft.ifft(acc, axis=-1)
        return SphereFunction(self.sphere, out.ravel() * _prefactor(self.N))


def _q_value(N: int, q) -> float:
    if q is None:
        q = stein_tomas_exponent(N)
    return float(Fraction(q)) if isinstance(q, (Fraction, int)) else float(q)


def lq_norm_q(f: SphereFunction, space: SpaceGrid, q=None, op: ExtensionOperator | None = None):
    """int_{R^N} |f_check|^q dx with the power-law tail model.

    Returns (value, tail_fraction).
    """
    qv = _q_value(f.grid.N, q)
    if qv < 2:
        raise ValueError("q must be >= 2")
    if op is None:
        op = ExtensionOperator(f.grid, space)
    u = op.apply(f)
    return energy_from_values(u, space, qv)


def energy_from_values(u: np.ndarray, space: SpaceGrid, q: float):
    dens = np.abs(u.ravel()) ** q
    inner = float(np.sum(space.weights * dens))
    total = float(np.sum(space.tail_weights(q) * dens))
    tail = total - inner
    frac = tail / total if total > 0 else 0.0
    return total, frac


@dataclass(frozen=True)
class QuotientReport:
    numerator: float
    tail_fraction: float
    l2_norm: float
    quotient: float

    @property
    def trusted(self) -> bool:
        return self.tail_fraction < TRUSTED_TAIL

    def to_dict(self) -> dict:
        return {
            "quotient": self.quotient,
            "numerator": self.numerator,
            "l2_norm": self.l2_norm,
            "tail_fraction": self.tail_fraction,
            "trusted": self.trusted,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def stein_tomas_quotient(f: SphereFunction, space: SpaceGrid, op: ExtensionOperator | None = None) -> QuotientReport:
    norm = f.norm()
    if norm == 0:
        raise ValueError("zero-norm input")
    q = _q_value(f.grid.N, None)
    num, frac = lq_norm_q(f, space, op=op)
    return QuotientReport(num, frac, norm, num / norm**q)
