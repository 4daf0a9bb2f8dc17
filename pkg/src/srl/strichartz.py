"""Schrodinger-type propagators and Strichartz quotients.

    S[psi] = (2 pi)^{-(d+2)/d} int int |u(t,x)|^q dx dt / ||psi||^q,   q = 2 + 4/d,

with u(t) = exp(-i t P(D)) psi for a dispersion P.  For the parabolic kind
P(xi) = |xi|^2 / 2 and u(t) = e^{it Delta/2} psi.

Parabolic quotients avoid any time truncation: time is mapped to
s = arctan t, and for |t| beyond a switch time the far-field identity

    |u(t, t xi)| = |t|^{-d/2} |F[psi e^{i|y|^2/(2t)}](xi)|

gives the slices, so the s-integrand stays smooth up to s = +-pi/2.
Other dispersions are propagated on a zero-padded box up to T_max with a
t^{-2} tail model (the decay rate of the slice energy for any elliptic
phase).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import GridError, ProfileFunction, composite_gauss_legendre

T_MAX = 40.0
TRUSTED_TAIL = 0.1
SUPPORT_TOL = 1e-10


class SupportError(ValueError):
    """Frequency support of a profile lies outside the dispersion's domain."""


@dataclass(frozen=True)
class Dispersion:
    """Dispersion relation P(xi) used in the multiplier exp(-i t P(xi)).

    kind is ``parabolic`` (|xi|^2/2), ``perturbed`` (T(|xi|^2) with
    T(E) = 1 - sqrt(1 - E), valid for |xi| <= radius <= 1) or ``custom``
    (``phase`` maps an array of frequency vectors (..., d) to reals).
    """

    kind: str = "parabolic"
    radius: float = math.inf
    phase: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("parabolic", "perturbed", "custom"):
            raise ValueError(f"unknown dispersion kind {self.kind!r}")
        if self.kind == "perturbed":
            r = 1.0 if math.isinf(self.radius) else self.radius
            if not 0 < r <= 1:
                raise ValueError("perturbed dispersion needs 0 < radius <= 1")
            object.__setattr__(self, "radius", r)
        if self.kind == "custom":
            if self.phase is None:
                raise ValueError("custom dispersion needs a phase function")
            if not 0 < self.radius <= 1:
                raise ValueError("custom dispersion needs a support radius in (0, 1]")

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        """P at frequency vectors; ``xi`` has shape (..., d)."""
        xi = np.asarray(xi, dtype=float)
        if self.kind == "custom":
            return np.asarray(self.phase(xi), dtype=float)
        E = np.sum(xi**2, axis=-1)
        if self.kind == "parabolic":
            return E / 2
        return perturbed_T(np.minimum(E, 1.0))

    def group_speed(self) -> float:
        """Upper bound for |grad P| on the support."""
        if self.kind == "perturbed":
            r = min(self.radius, 0.999)
            return r / math.sqrt(1 - r * r)
        if self.kind == "custom":
            return 4.0 * self.radius
        return math.inf


PARABOLIC = Dispersion("parabolic")


def perturbed_T(E):
    """T(E) = 1 - sqrt(1 - E) = E / (1 + sqrt(1 - E)), stable near E = 0."""
    E = np.asarray(E, dtype=float)
    return E / (1 + np.sqrt(1 - E))


def _freq_mesh(psi: ProfileFunction) -> np.ndarray:
    return np.stack(np.meshgrid(*psi.freq_axes(), indexing="ij"), axis=-1)


def check_support(psi: ProfileFunction, disp: Dispersion) -> None:
    if disp.kind == "parabolic":
        return
    F = np.abs(psi.fourier())
    k = np.sqrt(np.sum(_freq_mesh(psi) ** 2, axis=-1))
    peak = F.max()
    if peak > 0 and np.any(F[k > disp.radius] > SUPPORT_TOL * peak):
        raise SupportError(
            f"profile has frequency content beyond |xi| = {disp.radius}"
        )


def propagate(psi: ProfileFunction, t: float, disp: Dispersion = PARABOLIC) -> ProfileFunction:
    """exp(-i t P(D)) psi on the (periodic) profile lattice."""
    check_support(psi, disp)
    if t == 0:
        return psi
    F = psi.fourier() * np.exp(-1j * t * disp(_freq_mesh(psi)))
    return psi.from_fourier(F)


def pad_profile(psi: ProfileFunction, factor: float) -> ProfileFunction:
    """Zero-pad symmetrically so every side grows by ``factor``."""
    if factor <= 1:
        return psi
    new_shape = [int(math.ceil(n * factor)) for n in psi.shape]
    new_shape = [m + (m - n) % 2 for m, n in zip(new_shape, psi.shape)]
    vals = np.zeros(new_shape, dtype=complex)
    lo = [(m - n) // 2 for m, n in zip(new_shape, psi.shape)]
    vals[tuple(slice(a, a + n) for a, n in zip(lo, psi.shape))] = psi.values
    offsets = [o - a for o, a in zip(psi.offsets, lo)]
    return ProfileFunction(psi.d, psi.spacing, offsets, vals)


def far_field(psi: ProfileFunction, t: float):
    """(xi lattice cell volume, |F[psi e^{i|y|^2/(2t)}]| on the FFT lattice).

    |u(t, t xi)| = |t|^{-d/2} times the returned modulus.
    """
    r2 = sum(x**2 for x in psi.mesh())
    chirped = psi.with_values(psi.values * np.exp(1j * r2 / (2 * t)))
    F = chirped.fourier()
    dxi = np.prod([2 * np.pi / (n * psi.spacing) for n in psi.shape])
    return dxi, np.abs(F)


def _support_radii(psi: ProfileFunction, tol: float = 1e-13):
    """(max |y| where psi is non-negligible, max |xi| where psi_hat is)."""
    a = np.abs(psi.values)
    r = np.sqrt(sum(x**2 for x in psi.mesh()))
    Y = float(r[a > tol * a.max()].max()) if a.max() > 0 else 0.0
    F = np.abs(psi.fourier())
    k = np.sqrt(np.sum(_freq_mesh(psi) ** 2, axis=-1))
    K = float(k[F > tol * F.max()].max()) if F.max() > 0 else 0.0
    return Y, K


def _parabolic_slices(psi: ProfileFunction, n_s: int, T_max: float, pad: float):
    """Yield (weight, cell volume, |u| array, beyond-T_max flag) per time node.

    Gauss-Legendre panels in s = arctan t, split at |t| = t_s and |t| = T_max.
    Slices with |t| <= t_s are propagated directly, the rest use the far
    field.  The chirp exp(i|y|^2/2t) is only resolved on the lattice when
    |y|/t < pi/h over the support of psi, which fixes t_s; the padding then
    grows until the direct slices do not wrap around.
    """
    h = psi.spacing
    Y, K = _support_radii(psi)
    t_s = max(1.0, 1.25 * h * Y / math.pi)
    half = max(-o for o in psi.offsets) * h
    pad = max(pad, 1.1 * (Y + K * t_s) / half)
    big = pad_profile(psi, pad)
    T_max = max(T_max, 2 * t_s)
    sa, sb = math.atan(t_s), math.atan(T_max)
    edges = np.array([-math.pi / 2, -sb, -sa, 0.0, sa, sb, math.pi / 2])
    s, w = composite_gauss_legendre(edges, n_s)
    h = big.spacing
    for si, wi in zip(s, w):
        t = math.tan(si)
        jac = 1.0 / math.cos(si) ** 2
        tail = abs(t) > T_max
        if abs(t) <= t_s:
            u = propagate(big, t)
            yield wi * jac, h**psi.d, np.abs(u.values), tail
        else:
            dxi, A = far_field(big, t)
            # dx = |t|^d dxi and |u| = |t|^{-d/2} A
            yield wi * jac, dxi * abs(t) ** psi.d, A * abs(t) ** (-psi.d / 2), tail


def _box_window(psi: ProfileFunction, T_max: float) -> float:
    """T_max stretched to 40 dispersion times 1/K^2 for narrow frequency support."""
    _, K = _support_radii(psi)
    return max(T_max, 40.0 / max(K, 1e-3) ** 2) if K < 1 else T_max


def _box_slices(psi: ProfileFunction, disp: Dispersion, n_t: int, T_max: float):
    speed = disp.group_speed()
    half = max(abs(o) for o in psi.offsets) * psi.spacing
    big = pad_profile(psi, 1 + 2 * speed * T_max / max(half, 1e-12) / 2 + 0.25)
    n_panels = 16
    edges = np.linspace(0.0, T_max, n_panels + 1)
    t, w = composite_gauss_legendre(edges, n_t)
    t = np.concatenate([-t[::-1], t])
    w = np.concatenate([w[::-1], w])
    F0 = big.fourier()
    P = disp(_freq_mesh(big))
    h = big.spacing
    for ti, wi in zip(t, w):
        u = big.from_fourier(F0 * np.exp(-1j * ti * P))
        yield ti, wi, h**psi.d, np.abs(u.values)


def _tail_from_window(times, energies, T_max):
    """Amplitude A of A t^{-2} fitted on [T_max/2, T_max]; returns int_T^inf."""
    times, energies = np.asarray(times), np.asarray(energies)
    sel = times >= T_max / 2
    if not np.any(sel):
        return 0.0
    A = float(np.mean(energies[sel] * times[sel] ** 2))
    return A / T_max


@dataclass(frozen=True)
class StrichartzReport:
    d: int
    dispersion: str
    spacetime_energy: float
    l2_norm: float
    quotient: float
    tail_fraction: float

    @property
    def trusted(self) -> bool:
        return self.tail_fraction < TRUSTED_TAIL

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "dispersion": self.dispersion,
            "quotient": self.quotient,
            "tail_fraction": self.tail_fraction,
            "trusted": self.trusted,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def strichartz_exponent(d: int) -> float:
    return 2 + 4 / d


def prefactor(d: int) -> float:
    return (2 * math.pi) ** (-(d + 2) / d)


def spacetime_energy(psi: ProfileFunction, disp: Dispersion = PARABOLIC, q: float | None = None,
                     n_time: int = 24, T_max: float = T_MAX, pad: float = 2.0):
    """(int int |u|^q dx dt, fraction of it from |t| > T_max)."""
    d = psi.d
    q = strichartz_exponent(d) if q is None else q
    return modulus_energy(psi, None, lambda a, b: a**q, disp, n_time, T_max, pad)


def modulus_energy(psi_plus, psi_minus, density, disp=PARABOLIC, n_time=24, T_max=T_MAX, pad=2.0):
    """Space-time integral of density(|u+|, |u-|).

    u+ = exp(-itP(D)) psi_plus and u- = exp(+itP(D)) psi_minus (the
    counter-propagating partner); ``psi_minus`` may be None.  Returns
    (value, tail fraction).
    """
    if psi_minus is not None and (
        psi_minus.shape != psi_plus.shape
        or psi_minus.spacing != psi_plus.spacing
        or psi_minus.offsets != psi_plus.offsets
    ):
        raise GridError("both profiles must share one lattice")
    T_max = _box_window(psi_plus, T_max)
    if disp.kind == "parabolic":
        total = 0.0
        tail = 0.0
        plus = _parabolic_slices(psi_plus, n_time, T_max, pad)
        minus = None
        if psi_minus is not None:
            minus = _parabolic_slices(psi_minus.conj(), n_time, T_max, pad)
        for sl in plus:
            w, cell, A, is_tail = sl
            if minus is not None:
                # e^{-it Delta/2} m = conj(e^{it Delta/2} conj(m)): same modulus
                B = next(minus)[2]
            else:
                B = np.zeros_like(A)
            val = w * cell * float(np.sum(density(A, B)))
            total += val
            if is_tail:
                tail += val
        return total, (tail / total if total > 0 else 0.0)
    check_support(psi_plus, disp)
    slices = list(_box_slices(psi_plus, disp, n_time, T_max))
    if psi_minus is not None:
        check_support(psi_minus, disp)
        # exp(+itP) psi_minus at t is the forward evolution at -t
        back = {ti: A for ti, _, _, A in _box_slices(psi_minus, disp, n_time, T_max)}
    t_arr = np.array([sl[0] for sl in slices])
    e_arr = np.empty(len(slices))
    body = 0.0
    for k, (ti, wi, cell, A) in enumerate(slices):
        B = back[-ti] if psi_minus is not None else np.zeros_like(A)
        e_arr[k] = cell * float(np.sum(density(A, B)))
        body += wi * e_arr[k]
    pos = t_arr > 0
    tail = _tail_from_window(t_arr[pos], e_arr[pos], T_max) + _tail_from_window(
        -t_arr[~pos], e_arr[~pos], T_max
    )
    total = body + tail
    return total, (tail / total if total > 0 else 0.0)


def strichartz_quotient(psi: ProfileFunction, d: int | None = None, disp: Dispersion = PARABOLIC,
                        n_time: int = 24, T_max: float = T_MAX, pad: float = 2.0) -> StrichartzReport:
    d = psi.d if d is None else d
    if d != psi.d:
        raise GridError("profile dimension does not match d")
    norm = psi.norm()
    if norm == 0:
        raise ValueError("zero-norm profile")
    q = strichartz_exponent(d)
    E, frac = spacetime_energy(psi, disp, q, n_time, T_max, pad)
    return StrichartzReport(d, disp.kind, E, norm, prefactor(d) * E / norm**q, frac)


def gaussian_strichartz_constant(d: int) -> float:
    """Quotient of exp(-|x|^2/2): (2pi)^{-(d+2)/d} (2pi/q)^{d/2} pi pi^{-dq/4}."""
    if d < 1:
        raise ValueError("d must be >= 1")
    q = strichartz_exponent(d)
    return prefactor(d) * (2 * math.pi / q) ** (d / 2) * math.pi * math.pi ** (-d * q / 4)


def gaussian_integral(s: complex, x, order: int = 0, d: int | None = None) -> complex:
    """int_{R^d} exp(i x.eta - s|eta|^2/2) |eta|^order d eta, order in {0, 2, 4}."""
    s = complex(s)
    if s.real <= 0:
        raise ValueError("need Re s > 0")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if d is None:
        d = x.size
    if x.size == 1 and d > 1:
        x = np.concatenate([x, np.zeros(d - 1)])
    if x.size != d:
        raise ValueError("x must have d components")
    rho = float(x @ x)
    g0 = (2 * np.pi / s) ** (d / 2) * np.exp(-rho / (2 * s))
    if order == 0:
        return complex(g0)
    if order == 2:
        return complex((d / s - rho / s**2) * g0)
    if order == 4:
        return complex((rho**2 / s**4 - (2 * d + 4) * rho / s**3 + d * (d + 2) / s**2) * g0)
    raise ValueError("order must be 0, 2 or 4")
