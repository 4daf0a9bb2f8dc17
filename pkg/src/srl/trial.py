"""Gaussian-type trial functions on the sphere and their epsilon^2 expansions.

    g_eps(omega) = chi(omega_N) exp(-(1 - omega_N) / eps^2)       (one pole)
    f_eps(omega) = g_eps(omega) + g_eps(-omega)                      (both poles)

In the rescaled variables x = (eps y', eps^2 y_N) the extension of g_eps is
e^{i x_N/eps^2} phi_eps(x) up to the factor eps^d, with

    phi_eps(x) = (2pi)^{-N/2} int exp(i x'.eta - p(eta)(1 + i x_N)) A(eta) d eta,
    p = eps^{-2}(1 - w),  A = chi(w)/w,  w = sqrt(1 - eps^2 |eta|^2).

All L^q masses are computed from phi_eps.  phi_eps is radial in x', so it
is a one-dimensional cosine (d = 1) or Bessel (d = 2) transform in |eta|.
Slice energies E(t) = int |phi_eps(x', t)|^q dx' are integrated over
|t| <= T_max, and the rest uses u = 1/t: G(u) = t^2 E(t) is smooth at u = 0
with the stationary-phase value

    G(0) = (2pi)^{-q/2} int B^q det(p'')^{1 - q/2} d eta,  B = A e^{-p},
    det p'' = w^{-(d+2)},

so the tail is an interpolation between G(0) and the computed window.
"""

from __future__ import annotations

import csv
import functools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import j0, spherical_jn

from .geometry import SphereFunction, SphereGrid, composite_gauss_legendre, gauss_legendre, sphere_area
from .strichartz import gaussian_strichartz_constant
from .twoprofile import c_constant

T_MAX = 40.0
EPS_MAX = 0.5
B_FLOOR = 38.0  # e^{-38} ~ 3e-17: frequencies beyond are dropped
TIME_EDGES = (0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 20.0, 25.0, 30.0, 35.0, 40.0)


@dataclass(frozen=True)
class Cutoff:
    """C-infinity ramp: 0 on (-oo, lo], 1 on [hi, oo)."""

    lo: float = 0.25
    hi: float = 0.5

    def __post_init__(self):
        if not 0 < self.lo < self.hi < 1:
            raise ValueError("need 0 < lo < hi < 1")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        x = np.clip((s - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        out = np.zeros_like(x)
        mid = (x > 0) & (x < 1)
        xm = x[mid]
        a = np.exp(-1.0 / xm)
        b = np.exp(-1.0 / (1.0 - xm))
        out[mid] = a / (a + b)
        out[x >= 1] = 1.0
        return float(out) if out.ndim == 0 else out


def _check_eps(eps: float):
    if not eps > 0:
        raise ValueError("eps must be positive")
    if eps > EPS_MAX:
        warnings.warn(f"eps = {eps} is outside the expansion regime (<= {EPS_MAX})", stacklevel=3)


def g_eps(eps: float, grid: SphereGrid, cutoff: Cutoff = Cutoff()) -> SphereFunction:
    _check_eps(eps)
    wn = grid.nodes[:, -1]
    return SphereFunction(grid, cutoff(wn) * np.exp(-(1 - wn) / eps**2))


def f_eps(eps: float, grid: SphereGrid, cutoff: Cutoff = Cutoff()) -> SphereFunction:
    _check_eps(eps)
    wn = grid.nodes[:, -1]
    vals = cutoff(wn) * np.exp(-(1 - wn) / eps**2) + cutoff(-wn) * np.exp(-(1 + wn) / eps**2)
    return SphereFunction(grid, vals)


# --- radial profile in rescaled variables -----------------------------------


@dataclass
class RadialProfile:
    """Radial data of phi_eps for one (eps, d, cutoff)."""

    eps: float
    d: int
    cutoff: Cutoff = field(default_factory=Cutoff)

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("trial profiles support d in {1, 2}")
        eps, lo = self.eps, self.cutoff.lo
        rho_support = math.sqrt(1 - lo * lo) / eps
        w_floor = 1 - B_FLOOR * eps * eps
        rho_floor = math.sqrt(1 - w_floor * w_floor) / eps if w_floor > lo else rho_support
        self.rho_max = min(rho_support, rho_floor)
        w = math.sqrt(max(1 - (eps * self.rho_max) ** 2, 0.0))
        self.v_max = self.rho_max / max(w, lo)

    @property
    def q(self) -> float:
        return 2 + 4 / self.d

    def w(self, rho):
        return np.sqrt(np.maximum(1 - (self.eps * rho) ** 2, 0.0))

    def p(self, rho):
        w = self.w(rho)
        return rho * rho / (1 + w)

    def amplitude(self, rho):
        """A(rho) = chi(w)/w."""
        w = self.w(rho)
        out = np.zeros_like(w)
        pos = w > 0
        out[pos] = self.cutoff(w[pos]) / w[pos]
        return out

    def B(self, rho):
        return self.amplitude(rho) * np.exp(-self.p(rho))

    def rho_edges(self, n_panels: int, ramp_panels: int = 8) -> np.ndarray:
        """Panel edges on [0, rho_max] with separate panels across the cutoff ramp.

        chi(w) is C-infinity but not analytic at the ramp ends, so a panel
        straddling them converges slowly; aligning the edges restores
        spectral accuracy.
        """
        rho_hi = math.sqrt(1 - self.cutoff.hi**2) / self.eps
        if rho_hi >= self.rho_max:
            return np.linspace(0.0, self.rho_max, n_panels + 1)
        main = np.linspace(0.0, rho_hi, max(1, n_panels) + 1)
        return np.concatenate([main, np.linspace(rho_hi, self.rho_max, ramp_panels + 1)[1:]])

    def rho_rule(self, phase_slope: float, min_nodes: int = 96):
        """Gauss-Legendre rule on [0, rho_max] resolving exp(i phase_slope rho)."""
        n = int(min_nodes + 1.3 * self.rho_max * phase_slope / math.pi)
        panels = max(1, math.ceil(n / 16))
        return composite_gauss_legendre(self.rho_edges(panels, max(8, panels // 4)), 16)

    def kernel(self, r, rho):
        """Rows map B(rho) e^{-itp} samples (times rho weights) to phi(r, t)."""
        if self.d == 1:
            return np.cos(np.outer(r, rho)) / math.pi
        return j0(np.outer(r, rho)) * rho[None, :] * (2 * math.pi) ** (-0.5)

    def evaluate(self, r, t):
        """phi_eps at radii r (|x'|) and x_N = t."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        rho, wr = self.rho_rule(float(np.max(r)) + abs(t) * self.v_max)
        vec = self.B(rho) * np.exp(-1j * t * self.p(rho)) * wr
        return self.kernel(r, rho) @ vec

    def slice_rule(self, t: float, n_r: int):
        """Radial nodes/weights (including the x' measure) for the slice at t."""
        r_max = 12.0 + abs(t) * self.v_max
        r, w = gauss_legendre(n_r, 0.0, r_max)
        if self.d == 1:
            return r, 2 * w  # x' over R, phi even in x'
        return r, 2 * math.pi * r * w

    def slice(self, t: float, n_r: int = 256):
        r, w = self.slice_rule(t, n_r)
        return r, w, self.evaluate(r, t)

    def scaled_l2(self, n: int = 400) -> float:
        """eps^{-d} ||g_eps||^2 = int e^{-2p} chi^2 / w d eta."""
        rho, wr = composite_gauss_legendre(self.rho_edges(n // 16), 16)
        w = self.w(rho)
        f = np.exp(-2 * self.p(rho)) * self.cutoff(w) ** 2 / w
        return sphere_area(self.d) * float(np.sum(wr * f * rho ** (self.d - 1)))

    def far_field_constant(self, n: int = 400) -> float:
        """lim t^2 E(t) by stationary phase."""
        q, d = self.q, self.d
        rho, wr = composite_gauss_legendre(self.rho_edges(n // 16), 16)
        w = self.w(rho)
        f = self.B(rho) ** q * w ** ((d + 2) * (q / 2 - 1)) * rho ** (d - 1)
        return (2 * math.pi) ** (-q / 2) * sphere_area(d) * float(np.sum(wr * f))


def phi_eps(x, eps: float, cutoff: Cutoff = Cutoff()):
    """phi_eps at x of shape (N,) or (M, N), N in {2, 3}."""
    _check_eps(eps)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    prof = RadialProfile(eps, x.shape[1] - 1, cutoff)
    r = np.sqrt(np.sum(x[:, :-1] ** 2, axis=1))
    out = np.array([prof.evaluate(ri, ti)[0] for ri, ti in zip(r, x[:, -1])])
    return complex(out[0]) if single else out


def phi_limit(x) -> np.ndarray:
    """eps -> 0 limit (2pi)^{-1/2} (1 + i x_N)^{-d/2} exp(-|x'|^2 / (2(1 + i x_N)))."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = x.shape[1] - 1
    s = 1 + 1j * x[:, -1]
    r2 = np.sum(x[:, :-1] ** 2, axis=1)
    return (2 * math.pi) ** -0.5 * s ** (-d / 2) * np.exp(-r2 / (2 * s))


def limit_lq_mass(d: int) -> float:
    """(2pi)^{-q/2} (2pi/q)^{d/2} pi."""
    q = 2 + 4 / d
    return (2 * math.pi) ** (-q / 2) * (2 * math.pi / q) ** (d / 2) * math.pi


# --- L^q masses --------------------------------------------------------------


def _time_rule(n_t: int, max_panel: float | None = None):
    edges = list(TIME_EDGES)
    if max_panel is not None:
        fine = [0.0]
        for a, b in zip(edges[:-1], edges[1:]):
            k = max(1, math.ceil((b - a) / max_panel))
            fine.extend(np.linspace(a, b, k + 1)[1:])
        edges = fine
    return composite_gauss_legendre(np.array(edges), n_t), np.array(edges)


def _tail_integral(t, G, G0, T):
    """int_0^{1/T} G(u) du from a cubic through (0, G0) and window samples."""
    sel = t >= T / 2
    u = 1.0 / t[sel]
    # constrained least squares: G(u) = G0 + c1 u + c2 u^2 + c3 u^3
    A = np.stack([u, u**2, u**3], axis=1)
    c, *_ = np.linalg.lstsq(A, G[sel] - G0, rcond=None)
    U = 1.0 / T
    return G0 * U + c[0] * U**2 / 2 + c[1] * U**3 / 3 + c[2] * U**4 / 4


@dataclass(frozen=True)
class LqMass:
    value: float
    tail_fraction: float
    direct: float | None = None  # antipodal mass with oscillating harmonics kept

    @property
    def trusted(self) -> bool:
        return self.tail_fraction < 0.1


@functools.lru_cache(maxsize=64)
def lq_mass(eps: float, d: int, cutoff: Cutoff = Cutoff(), n_t: int = 16, n_r: int = 256,
            harmonics: bool = False) -> LqMass:
    """int_{R^N} |phi_eps|^q dx (and optionally the direct antipodal mass).

    The direct antipodal mass is int |2 Re(e^{i x_N/eps^2} phi_eps)|^q dx.
    Results are memoised (all arguments are hashable and the computation
    is deterministic).

    For even q, |2 Re z|^q = sum_j binom(q, j) z^j conj(z)^{q-j}; the j = q/2
    term is the phase average and the others oscillate in x_N with frequency
    (2j - q)/eps^2.  Those are integrated by Filon quadrature (Legendre
    interpolation on each time panel, exact moments against the carrier).
    """
    prof = RadialProfile(eps, d, cutoff)
    q = prof.q
    qi = int(round(q))
    if harmonics and abs(q - qi) > 1e-12:
        raise ValueError("harmonic expansion needs an even integer q")
    (t, wt), edges = _time_rule(n_t, 1.0 if harmonics else None)
    E = np.empty(len(t))
    H = np.zeros((qi + 1, len(t)), dtype=complex) if harmonics else None
    for k, tk in enumerate(t):
        r, w, phi = prof.slice(tk, n_r)
        a = np.abs(phi)
        E[k] = float(np.sum(w * a**q))
        if harmonics:
            for j in range(qi + 1):
                H[j, k] = np.sum(w * phi**j * np.conj(phi) ** (qi - j))
    body = float(np.sum(wt * E))
    G0 = prof.far_field_constant()
    tail = _tail_integral(t, t**2 * E, G0, T_MAX)
    total = 2 * (body + tail)  # E(-t) = E(t)
    direct = None
    if harmonics:
        direct = 0.0
        for j in range(qi + 1):
            kfreq = (2 * j - qi) / eps**2
            if j == qi // 2:
                I = total / 2  # same as the averaged term on t >= 0
            else:
                I = _filon(H[j], t, edges, n_t, kfreq)
            # H_j(-t) = conj(H_j(t)) so the full line gives 2 Re
            direct += math.comb(qi, j) * 2 * float(np.real(I))
    return LqMass(total, 2 * tail / total, direct)


def _filon(h, t, edges, n, k):
    """int_0^{T} e^{ikt} h(t) dt plus the leading end-point tail term."""
    x, _ = np.polynomial.legendre.leggauss(n)
    _, wx = np.polynomial.legendre.leggauss(n)
    V = np.polynomial.legendre.legvander(x, n - 1)  # P_m at nodes
    total = 0.0 + 0.0j
    for p in range(len(edges) - 1):
        a, b = edges[p], edges[p + 1]
        L = b - a
        c = 0.5 * (a + b)
        vals = h[p * n : (p + 1) * n]
        coef = (V * wx[:, None]).T @ vals * (2 * np.arange(n) + 1) / 2
        om = k * L / 2
        mom = np.array([2 * (1j**m) * spherical_jn(m, om) for m in range(n)])
        total += (L / 2) * np.exp(1j * k * c) * np.sum(coef * mom)
    T = edges[-1]
    total += -h[-1] * np.exp(1j * k * T) / (1j * k)
    return total


# --- quotients and sweeps ---------------------------------------------------


def single_bump_log_quotient(eps: float, N: int, cutoff: Cutoff = Cutoff(), **kw):
    """log(int |g_eps_check|^q / ||g_eps||^q), returned with the tail fraction."""
    d = N - 1
    q = 2 + 4 / d
    m = lq_mass(eps, d, cutoff, **kw)
    l2 = RadialProfile(eps, d, cutoff).scaled_l2()
    return math.log(m.value) - (q / 2) * math.log(l2), m.tail_fraction


def antipodal_log_quotient(eps: float, N: int, cutoff: Cutoff = Cutoff(), route: str = "average", **kw):
    """log of the f_eps quotient.

    route="average" uses the phase average (exactly c(q) times the single
    bump quotient); route="direct" keeps the oscillating harmonics.
    """
    d = N - 1
    q = 2 + 4 / d
    l2 = RadialProfile(eps, d, cutoff).scaled_l2()
    if route == "average":
        lq, frac = single_bump_log_quotient(eps, N, cutoff, **kw)
        return math.log(c_constant(q)) + lq, frac
    if route != "direct":
        raise ValueError("route must be 'average' or 'direct'")
    m = lq_mass(eps, d, cutoff, harmonics=True, **kw)
    # ||f||^q = 2^{q/2} ||g||^q and f_check rescales to 2 Re(...)
    return math.log(m.direct) - (q / 2) * math.log(2 * l2), m.tail_fraction


@dataclass
class ExpansionFit:
    eps2_values: list
    values: list
    intercept: float
    slope: float
    residual: float
    curvature: float = 0.0
    max_tail_fraction: float = 0.0

    @property
    def trusted(self) -> bool:
        return self.residual <= 0.1 * abs(self.slope) and self.max_tail_fraction < 0.1

    def to_dict(self) -> dict:
        return {
            "eps2_values": list(map(float, self.eps2_values)),
            "values": list(map(float, self.values)),
            "intercept": self.intercept,
            "slope": self.slope,
            "curvature": self.curvature,
            "residual": self.residual,
            "max_tail_fraction": self.max_tail_fraction,
            "trusted": self.trusted,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["eps2", "log_quotient"])
            for e2, v in zip(self.eps2_values, self.values):
                wr.writerow([repr(float(e2)), repr(float(v))])


def fit_expansion(eps2, values, order: int = 2, tails=None) -> ExpansionFit:
    """Least-squares polynomial fit in eps^2 (order 1 = line, 2 = with eps^4 term).

    The residual is the RMS misfit of the fit.
    """
    eps2 = np.asarray(eps2, dtype=float)
    vals = np.asarray(values, dtype=float)
    if len(eps2) < 4:
        raise ValueError("need at least 4 sweep points")
    if np.any(np.diff(eps2) >= 0):
        raise ValueError("eps^2 values must decrease strictly")
    coef = np.polynomial.polynomial.polyfit(eps2, vals, order)
    fit = np.polynomial.polynomial.polyval(eps2, coef)
    res = float(np.sqrt(np.mean((fit - vals) ** 2)))
    return ExpansionFit(
        list(eps2),
        list(vals),
        float(coef[0]),
        float(coef[1]),
        res,
        float(coef[2]) if order >= 2 else 0.0,
        float(max(tails)) if tails is not None else 0.0,
    )


def _sweep(fn, eps_list, N, order, **kw):
    eps_list = sorted(eps_list, reverse=True)
    if len(eps_list) < 4:
        raise ValueError("need at least 4 sweep points")
    if any(not 0 < e <= 0.35 for e in eps_list):
        raise ValueError("sweep eps must lie in (0, 0.35]")
    vals, tails = [], []
    for e in eps_list:
        v, tf = fn(e, N, **kw)
        vals.append(v)
        tails.append(tf)
    return fit_expansion([e * e for e in eps_list], vals, order, tails)


def single_bump_sweep(eps_list, N: int, order: int = 2, **kw) -> ExpansionFit:
    """Fit log quotient(g_eps) = intercept + slope eps^2 (+ curvature eps^4)."""
    return _sweep(single_bump_log_quotient, eps_list, N, order, **kw)


def antipodal_sweep(eps_list, N: int, order: int = 2, **kw) -> ExpansionFit:
    """Same fit for f_eps via the phase average."""
    return _sweep(antipodal_log_quotient, eps_list, N, order, **kw)


def derivative_ratio(eps_list, d: int, **kw) -> float:
    """Slope in eps^2 of int |phi_eps|^q divided by its eps -> 0 limit."""
    L0 = limit_lq_mass(d)
    eps_list = sorted(eps_list, reverse=True)
    vals = [lq_mass(e, d, **kw).value / L0 for e in eps_list]
    coef = np.polynomial.polynomial.polyfit([e * e for e in eps_list], vals, 2)
    return float(coef[1])


@dataclass(frozen=True)
class GapCertificate:
    N: int
    eps: float
    quotient: float
    threshold: float
    tail_fraction: float

    @property
    def margin(self) -> float:
        return self.quotient - self.threshold

    @property
    def passed(self) -> bool:
        return self.margin > 0

    @property
    def trusted(self) -> bool:
        return self.tail_fraction < 0.1

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "eps": self.eps,
            "quotient": self.quotient,
            "threshold": self.threshold,
            "margin": self.margin,
            "pass": self.passed,
            "trusted": self.trusted,
        }


def gap_certificate(N: int, eps: float, route: str = "average", **kw) -> GapCertificate:
    """quotient(f_eps) against c(q) S_{N-1}^G."""
    if N not in (2, 3):
        raise ValueError("N must be 2 or 3")
    q = 2 * (N + 1) / (N - 1)
    lq, frac = antipodal_log_quotient(eps, N, route=route, **kw)
    thr = c_constant(q) * gaussian_strichartz_constant(N - 1)
    return GapCertificate(N, eps, math.exp(lq), thr, frac)


def extension_lq_norm(eps: float, N: int, cutoff: Cutoff = Cutoff(), **kw) -> float:
    """||g_eps_check||_{L^q(R^N)} from the rescaled mass.

    g_eps_check(y) = eps^d e^{i y_N} phi_eps(eps y', eps^2 y_N), hence
    int |g_eps_check|^q = eps^{dq - d - 2} int |phi_eps|^q.
    """
    d = N - 1
    q = 2 + 4 / d
    m = lq_mass(eps, d, cutoff, **kw).value
    return (eps ** (d * q - d - 2) * m) ** (1 / q)
