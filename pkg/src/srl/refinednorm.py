"""Dyadic caps on the sphere and the refined Stein-Tomas norm.

The refined norm of f is

    sup_alpha sup_Q |Q|^{-1/2} || (1_{L_alpha(Q)} chi_alpha f)^check ||_inf

where chi_alpha is a smooth partition of unity subordinate to caps
{theta_alpha . omega > sqrt(1 - eps_cap^2)} and L_alpha(Q) lifts a dyadic
cube Q in theta_alpha's tangent coordinates onto the cap.

Each piece has frequencies in a small patch, so after removing the patch
centre its transform varies slowly: on the scale 1/eps_cap across the cap
and 1/eps_cap^2 along theta_alpha.  The sup over x is taken on an
anisotropic lattice adapted to those scales inside |x| <= X_BOX, then
polished by BFGS.

Also here: the cap-to-profile identity for the perturbed dispersion
T(E) = 1 - sqrt(1 - E), and the dyadic inequalities behind the refinement
(bilinear ratios in rescaled variables, q*, and dyadic L^1 sums).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .extension import _prefactor, extend, lq_norm_q
from .geometry import (
    GridError,
    ProfileFunction,
    SpaceGrid,
    SphereFunction,
    SphereGrid,
    gauss_legendre,
    interpolate,
)
from .strichartz import PARABOLIC, Dispersion, SupportError, perturbed_T

X_BOX = 64.0
COVER_MARGIN = 0.8
# tangent-frame twist so cube boundaries avoid the grid's meridians
TWIST = 0.1234


@dataclass(frozen=True, order=True)
class DyadicCube:
    """2^level * (corner + [0, 1)^n)."""

    level: int
    corner: tuple

    def __post_init__(self):
        object.__setattr__(self, "corner", tuple(int(k) for k in self.corner))

    @property
    def side(self) -> float:
        return 2.0**self.level

    @property
    def dim(self) -> int:
        return len(self.corner)

    @property
    def volume(self) -> float:
        return self.side**self.dim

    def lower(self) -> np.ndarray:
        return self.side * np.array(self.corner, dtype=float)

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        k = np.floor(pts / self.side).astype(int)
        return np.all(k == np.array(self.corner), axis=1)

    def parent(self) -> "DyadicCube":
        return DyadicCube(self.level + 1, tuple(k // 2 for k in self.corner))

    def distance_to_origin(self) -> float:
        lo = self.lower()
        hi = lo + self.side
        nearest = np.clip(0.0, lo, hi)
        return float(np.linalg.norm(nearest))

    def to_dict(self) -> dict:
        return {"level": self.level, "corner": list(self.corner)}


def related(Q: DyadicCube, Qp: DyadicCube) -> bool:
    """Same side, closures disjoint, parents adjacent (closures meet)."""
    if Q.level != Qp.level or Q.dim != Qp.dim:
        return False
    k, kp = np.array(Q.corner), np.array(Qp.corner)
    if np.max(np.abs(k - kp)) < 2:
        return False
    p, pp = np.array(Q.parent().corner), np.array(Qp.parent().corner)
    return bool(np.max(np.abs(p - pp)) <= 1)


def rotation_to(theta: np.ndarray) -> np.ndarray:
    """Proper rotation taking the north pole to ``theta``."""
    theta = np.asarray(theta, dtype=float)
    theta = theta / np.linalg.norm(theta)
    N = theta.size
    e = np.zeros(N)
    e[-1] = 1.0
    c = float(theta @ e)
    if c < -1 + 1e-12:
        R = np.eye(N)
        R[-1, -1] = -1.0
        R[-2, -2] = -1.0
        return R
    K = np.outer(theta, e) - np.outer(e, theta)
    return np.eye(N) + K + K @ K / (1 + c)


def _bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    m = s < 1
    out[m] = np.exp(-1.0 / (1.0 - s[m] ** 2))
    return out


def _candidate_directions(N: int, rho: float) -> np.ndarray:
    n = int(math.ceil(6 * math.pi / rho))
    if N == 2:
        ang = 2 * math.pi * np.arange(n) / n
        return np.stack([np.sin(ang), np.cos(ang)], axis=1)
    ct, _ = gauss_legendre(n // 2)
    pts = []
    for c in ct[::-1]:
        s = math.sqrt(1 - c * c)
        m = max(1, int(round(n * s)))
        ph = 2 * math.pi * np.arange(m) / m
        pts.append(np.stack([s * np.cos(ph), s * np.sin(ph), np.full(m, c)], axis=1))
    return np.concatenate([np.array([[0.0, 0.0, 1.0]])] + pts)


@dataclass(frozen=True, eq=False)
class CapAtlas:
    """Caps C(theta_alpha) with rotations R_alpha and a smooth partition of unity."""

    N: int
    eps_cap: float
    directions: np.ndarray
    rotations: np.ndarray

    def __post_init__(self):
        if not 0 < self.eps_cap < 1:
            raise ValueError("eps_cap must lie in (0, 1)")

    @property
    def size(self) -> int:
        return len(self.directions)

    @property
    def radius(self) -> float:
        """Geodesic radius of each cap."""
        return math.asin(self.eps_cap)

    @classmethod
    def build(cls, N: int, eps_cap: float = 0.3) -> "CapAtlas":
        """Greedy covering: candidates in a fixed order, north pole first.

        A candidate becomes a centre when no chosen centre lies within
        COVER_MARGIN * radius; the candidate set is dense enough that every
        point ends up within that distance of a centre.
        """
        if N not in (2, 3):
            raise ValueError("N must be 2 or 3")
        rho = math.asin(eps_cap)
        cos_lim = math.cos(COVER_MARGIN * rho)
        dirs = []
        for c in _candidate_directions(N, rho):
            if not dirs or np.max(np.array(dirs) @ c) < cos_lim:
                dirs.append(c)
        dirs = np.array(dirs)
        twist = np.eye(N)
        if N == 3:
            c, s = math.cos(TWIST), math.sin(TWIST)
            twist[:2, :2] = [[c, -s], [s, c]]
        rots = np.array([rotation_to(t) @ twist for t in dirs])
        return cls(N, eps_cap, dirs, rots)

    def rotated(self, R: np.ndarray) -> "CapAtlas":
        return CapAtlas(self.N, self.eps_cap, self.directions @ R.T, np.einsum("ij,ajk->aik", R, self.rotations))

    def bumps(self, points: np.ndarray) -> np.ndarray:
        """Unnormalised bumps, shape (A, M)."""
        cosang = np.clip(self.directions @ points.T, -1.0, 1.0)
        return _bump(np.arccos(cosang) / self.radius)

    def partition(self, grid: SphereGrid) -> np.ndarray:
        """chi_alpha at the grid nodes, shape (A, M); rows sum to one."""
        if grid.N != self.N:
            raise GridError("atlas and grid dimensions differ")
        b = self.bumps(grid.nodes)
        tot = b.sum(axis=0)
        if np.any(tot <= 0):
            raise GridError("caps do not cover every grid node")
        return b / tot

    def local_coords(self, alpha: int, points: np.ndarray) -> np.ndarray:
        """R_alpha^T omega: tangent coordinates first, omega . theta last."""
        return points @ self.rotations[alpha]


@dataclass(frozen=True)
class LiftedRegion:
    cube: DyadicCube
    alpha: int

    def contains(self, points: np.ndarray, atlas: CapAtlas) -> np.ndarray:
        loc = atlas.local_coords(self.alpha, np.atleast_2d(points))
        return self.cube.contains(loc[:, :-1]) & (loc[:, -1] > 0)


# --- sup of a small-patch transform ----------------------------------------


def _patch_sup(coef: np.ndarray, nu: np.ndarray, box: float = X_BOX):
    """max_{|y| <= box} |sum_k coef_k exp(i y . nu_k)| and its location.

    Returns (value, y, sampling_bound) where sampling_bound bounds the sup
    over the box by first-order Taylor from the nearest lattice sample.
    """
    mass = float(np.sum(np.abs(coef)))
    if len(coef) == 1:
        return mass, np.zeros(nu.shape[1]), mass
    c = 0.5 * (nu.max(axis=0) + nu.min(axis=0))
    eta = nu - c
    b = np.max(np.abs(eta), axis=0)
    axes, spacing = [], []
    for bi in b:
        s = box if bi == 0 else min(math.pi / (4 * bi), box)
        n = int(math.ceil(box / s))
        axes.append(s * np.arange(-n, n + 1))
        spacing.append(s)
    mats = [np.exp(1j * np.outer(a, eta[:, i])) for i, a in enumerate(axes)]
    if len(axes) == 2:
        G = np.einsum("ak,bk,k->ab", mats[0], mats[1], coef, optimize=True)
    else:
        G = np.einsum("ak,bk,ck,k->abc", mats[0], mats[1], mats[2], coef, optimize=True)
    mesh = np.meshgrid(*axes, indexing="ij")
    inside = sum(m**2 for m in mesh) <= box * box
    mag = np.where(inside, np.abs(G), -1.0)
    flat = mag.ravel()
    best = float(flat.max())
    corr = mass * sum(bi * si / 2 for bi, si in zip(b, spacing))
    bound = min(mass, best + corr)
    order = np.argsort(-flat, kind="stable")[:3]

    def obj(y):
        e = np.exp(1j * (eta @ y)) * coef
        v = e.sum()
        dv = (1j * eta.T * e).sum(axis=1)
        return -(abs(v) ** 2), -2 * np.real(np.conj(v) * dv)

    y_best = np.array([m.ravel()[order[0]] for m in mesh])
    for idx in order:
        y0 = np.array([m.ravel()[idx] for m in mesh])
        res = minimize(obj, y0, jac=True, method="BFGS", options={"gtol": 1e-12})
        if np.all(np.isfinite(res.x)) and np.linalg.norm(res.x) <= box:
            val = math.sqrt(max(-res.fun, 0.0))
            if val > best + 1e-15:
                best, y_best = val, res.x
    return best, y_best, max(bound, best)


@dataclass
class RefinedNormReport:
    value: float
    alpha: int
    cube: DyadicCube
    x_argmax: np.ndarray
    resolution_floor_hit: bool
    l1_bound: float
    sampling_bound: float
    levels: tuple

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "alpha": self.alpha,
            "cube": self.cube.to_dict(),
            "x_argmax": list(map(float, self.x_argmax)),
            "resolution_floor_hit": self.resolution_floor_hit,
            "l1_bound": self.l1_bound,
            "sampling_bound": self.sampling_bound,
            "levels": list(self.levels),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def grid_spacing(grid: SphereGrid) -> float:
    if grid.N == 2:
        return 2 * math.pi / grid.size
    return math.pi / grid.n_theta


def level_window(grid: SphereGrid, eps_cap: float) -> tuple:
    """Levels j in [log2(spacing) + 1, log2(2 eps_cap)], at least one."""
    j_max = math.floor(math.log2(2 * eps_cap))
    j_min = math.ceil(math.log2(grid_spacing(grid)) + 1)
    return min(j_min, j_max), j_max


def _pieces(f: SphereFunction, atlas: CapAtlas, chi: np.ndarray, j_min: int, j_max: int):
    """Yield (key, scale, coef, local nodes) for every nonzero lifted piece."""
    grid = f.grid
    pref = _prefactor(grid.N)
    for alpha in range(atlas.size):
        sel = np.where(chi[alpha] > 0)[0]
        if sel.size == 0:
            continue
        coef_all = pref * grid.weights[sel] * chi[alpha, sel] * f.values[sel]
        loc = atlas.local_coords(alpha, grid.nodes[sel])
        keep = loc[:, -1] > 0
        coef_all, loc = coef_all[keep], loc[keep]
        for j in range(j_min, j_max + 1):
            keys = np.floor(loc[:, :-1] / 2.0**j).astype(int)
            groups = {}
            for i, k in enumerate(map(tuple, keys)):
                groups.setdefault(k, []).append(i)
            for k in sorted(groups):
                cube = DyadicCube(j, k)
                if cube.distance_to_origin() >= atlas.eps_cap:
                    continue
                idx = np.array(groups[k])
                if np.any(coef_all[idx]):
                    yield (alpha, j, k), cube.volume**-0.5, coef_all[idx], loc[idx]


def refined_norm(f: SphereFunction, atlas: CapAtlas, box: float = X_BOX) -> RefinedNormReport:
    """Refined norm with argmax (alpha, cube, x); ties go to the smallest key.

    Pieces are visited in decreasing order of their L^1 bound and skipped
    once that bound falls below the best value found, which cannot change
    the result.
    """
    grid = f.grid
    chi = atlas.partition(grid)
    j_min, j_max = level_window(grid, atlas.eps_cap)
    pieces = []
    l1_bound = 0.0
    for key, scale, coef, nu in _pieces(f, atlas, chi, j_min, j_max):
        b = scale * float(np.sum(np.abs(coef)))
        l1_bound = max(l1_bound, b)
        pieces.append((-b, key, scale, coef, nu))
    pieces.sort(key=lambda p: (p[0], p[1]))
    best = None
    samp_bound = 0.0
    for neg_b, key, scale, coef, nu in pieces:
        if best is not None and -neg_b < best[0]:
            break
        val, y, bound = _patch_sup(coef, nu, box)
        val *= scale
        samp_bound = max(samp_bound, scale * bound)
        if best is None or val > best[0] or (val == best[0] and key < best[1]):
            best = (val, key, atlas.rotations[key[0]] @ y)
    if best is None:
        zero = DyadicCube(j_max, (0,) * (grid.N - 1))
        return RefinedNormReport(0.0, 0, zero, np.zeros(grid.N), False, 0.0, 0.0, (j_min, j_max))
    val, (alpha, j, k), x = best
    # every skipped piece is bounded by the best value itself
    samp_bound = max(samp_bound, val)
    return RefinedNormReport(
        val, alpha, DyadicCube(j, k), x, j == j_min, l1_bound, samp_bound, (j_min, j_max)
    )


def refined_upper_constant(grid: SphereGrid, atlas: CapAtlas) -> float:
    """C_N = (2pi)^{-N/2} sup_{alpha,Q} |Q|^{-1/2} ||1_L chi_alpha||_2 (quadrature norms)."""
    chi = atlas.partition(grid)
    j_min, j_max = level_window(grid, atlas.eps_cap)
    best = 0.0
    for alpha in range(atlas.size):
        sel = np.where(chi[alpha] > 0)[0]
        loc = atlas.local_coords(alpha, grid.nodes[sel])
        for j in range(j_min, j_max + 1):
            keys = np.floor(loc[:, :-1] / 2.0**j).astype(int)
            for k in set(map(tuple, keys)):
                m = np.all(keys == np.array(k), axis=1) & (loc[:, -1] > 0)
                if not m.any():
                    continue
                cube = DyadicCube(j, k)
                if cube.distance_to_origin() >= atlas.eps_cap:
                    continue
                n2 = float(np.sum(grid.weights[sel[m]] * chi[alpha, sel[m]] ** 2))
                best = max(best, math.sqrt(n2 / cube.volume))
    return _prefactor(grid.N) * best


def refined_inequality_profile(family, atlas: CapAtlas, sigma_trial: float, space: SpaceGrid | None = None,
                               lq_norms=None) -> list:
    """Implied constants ||f_check||_q / (refined^{1-sigma} ||f||^sigma).

    ``lq_norms`` may supply ||f_check||_q for members whose extension does
    not fit the space grid; otherwise it is computed on ``space``.
    """
    if not 0 < sigma_trial < 1:
        raise ValueError("sigma_trial must lie in (0, 1)")
    out = []
    for i, f in enumerate(family):
        nf = f.norm()
        if nf == 0:
            raise ValueError("zero function in family")
        N = f.grid.N
        q = 2 * (N + 1) / (N - 1)
        if lq_norms is not None and lq_norms[i] is not None:
            lq = lq_norms[i]
        else:
            if space is None:
                raise ValueError("need a space grid or precomputed L^q norms")
            lq = lq_norm_q(f, space)[0] ** (1 / q)
        r = refined_norm(f, atlas).value
        out.append(lq / (r ** (1 - sigma_trial) * nf**sigma_trial))
    return out


# --- cap-to-profile identity ------------------------------------------------


def cap_profile_identity_residual(f: SphereFunction, points, eps_cap: float = 0.3,
                                  rotation: np.ndarray | None = None, n_xi: int = 64,
                                  support_tol: float = 1e-12) -> float:
    """Max |f_check(x) - (2pi)^{-1/2} e^{i s} (e^{-i s T(-Delta)} psi)(y')| over ``points``.

    Here (y', s) = R^T x and psi_hat(xi) = f(R(xi, sqrt(1 - xi^2))) / sqrt(1 - xi^2).
    The left side is the sphere quadrature; the right side is a tensor
    Gauss-Legendre rule in the flat variable xi with f interpolated
    spectrally, so the two sides share no quadrature.
    """
    grid = f.grid
    N = grid.N
    R = np.eye(N) if rotation is None else np.asarray(rotation, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    peak = float(np.max(np.abs(f.values))) if f.values.size else 0.0
    if peak == 0:
        return 0.0
    loc = grid.nodes @ R
    outside = loc[:, -1] <= math.sqrt(1 - eps_cap**2)
    if np.any(np.abs(f.values[outside]) > support_tol * peak):
        raise SupportError("f is not supported in the cap")
    lhs = extend(f, pts)
    d = N - 1
    g, w = gauss_legendre(n_xi, -eps_cap, eps_cap)
    if d == 1:
        xi = g[:, None]
        wx = w
    else:
        X, Y = np.meshgrid(g, g, indexing="ij")
        xi = np.stack([X.ravel(), Y.ravel()], axis=1)
        wx = np.outer(w, w).ravel()
    E = np.sum(xi**2, axis=1)
    m = E < eps_cap**2
    xi, wx, E = xi[m], wx[m], E[m]
    root = np.sqrt(1 - E)
    omega = np.concatenate([xi, root[:, None]], axis=1) @ R.T
    psi_hat = interpolate(f, omega) / root
    y = pts @ R
    phase = np.exp(1j * (y[:, :-1] @ xi.T) - 1j * np.outer(y[:, -1], perturbed_T(E)))
    rhs = (2 * math.pi) ** -0.5 * np.exp(1j * y[:, -1]) * (2 * math.pi) ** (-d / 2) * (phase @ (wx * psi_hat))
    return float(np.max(np.abs(lhs - rhs)))


# --- dyadic inequalities ----------------------------------------------------


def q_star(q: float) -> float:
    """min(q/2, (q/2)')."""
    if q <= 2:
        raise ValueError("q must exceed 2")
    h = q / 2
    return min(h, h / (h - 1))


def _phase_gradient(disp: Dispersion, xi: np.ndarray) -> np.ndarray:
    if disp.kind == "parabolic":
        return xi.copy()
    if disp.kind == "perturbed":
        return xi / math.sqrt(1 - float(xi @ xi))
    h = 1e-6
    g = np.zeros_like(xi)
    for i in range(xi.size):
        e = np.zeros_like(xi)
        e[i] = h
        g[i] = (disp(xi + e) - disp(xi - e)) / (2 * h)
    return g


@dataclass(frozen=True)
class BilinearResult:
    ratio: float
    tail_fraction: float


def bilinear_ratio(psi: ProfileFunction, Q: DyadicCube, Qp: DyadicCube, p: float, d: int | None = None,
                   disp: Dispersion = PARABOLIC, eps: float = 0.5, m: int = 32, tau_max: float | None = None,
                   n_tau: int = 16, details: bool = False):
    """||Psi_Q Psi_Q'||_{L^p_{t,x}} / (|Q|^{1 - (d+2)/(pd)} ||psi_Q|| ||psi_Q'||).

    Evaluated after the exact rescaling xi = delta (k + eta), t = tau / delta^2
    with the phase Phi_{delta,k}(eta) = delta^{-2}[Phi(delta(k + eta))
    - Phi(delta k) - delta grad Phi(delta k) . eta], which turns the ratio into
    ||T u_Q T u_Q'||_p / (||u_Q|| ||u_Q'||) for unit cubes.  Cube interiors
    are sampled at m midpoints per side; the x period is 2 pi m, and the
    default time window |tau| <= 2m keeps both packets inside one period.
    """
    d = psi.d if d is None else d
    tau_max = 2.0 * m if tau_max is None else tau_max
    if not related(Q, Qp):
        raise ValueError("cubes are not related (same side, disjoint, adjacent parents)")
    if Q.dim != d:
        raise ValueError("cube dimension differs from d")
    if not (d + 3) / (d + 1) < p < (d + 2) / d:
        raise ValueError(f"p must lie in ((d+3)/(d+1), (d+2)/d) = ({(d + 3) / (d + 1)}, {(d + 2) / d})")
    F = np.abs(psi.fourier())
    kmesh = np.sqrt(sum(x**2 for x in np.meshgrid(*psi.freq_axes(), indexing="ij")))
    if F.max() > 0 and np.any(F[kmesh > eps] > 1e-10 * F.max()):
        raise SupportError(f"psi_hat is not supported in |xi| <= {eps}")
    delta = Q.side
    k = np.array(Q.corner, dtype=float)
    off = np.array(Qp.corner) - np.array(Q.corner)
    lo = np.minimum(0, off)
    span = np.maximum(off, 0) - lo + 1
    n = [1 << int(math.ceil(math.log2(2 * m * (s + 1)))) for s in span]
    # eta lattice: spacing 1/m, midpoints
    axes = [(lo[i] + (np.arange(n[i]) + 0.5) / m) for i in range(d)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    cell = np.floor(mesh).astype(int)
    inQ = np.all(cell == 0, axis=-1)
    inQp = np.all(cell == off, axis=-1)
    xi = delta * (k + mesh)
    flat = xi.reshape(-1, d)
    psi_hat = psi.fourier_at(flat).reshape(mesh.shape[:-1])
    u = delta ** (d / 2) * psi_hat
    uQ, uQp = np.where(inQ, u, 0), np.where(inQp, u, 0)
    dv = m ** (-d)
    nQ = math.sqrt(dv * float(np.sum(np.abs(uQ) ** 2)))
    nQp = math.sqrt(dv * float(np.sum(np.abs(uQp) ** 2)))
    if nQ == 0 or nQp == 0:
        raise ValueError("psi_Q or psi_Q' vanishes; ratio undefined")
    # subtracting an affine function of eta only translates |Psi| in x; the
    # gradient is taken at the midpoint of the pair so both packets stay
    # near the middle of the periodic box
    mid = 0.5 * (1 + off)
    base = delta * (k + mid)
    grad = _phase_gradient(disp, base)
    phi0 = float(disp(base[None, :])[0])
    Phi = (disp(flat).reshape(mesh.shape[:-1]) - phi0 - delta * ((mesh - mid) @ grad)) / delta**2
    # x lattice from the FFT: period 2 pi m per axis
    dx = [2 * math.pi * m / ni for ni in n]
    cellx = float(np.prod(dx))
    scale = dv * (2 * math.pi) ** (-d / 2) * float(np.prod(n))

    def field(v, tau):
        return np.fft.ifftn(v * np.exp(-1j * tau * Phi)) * scale

    edges = np.concatenate([-np.geomspace(tau_max, 0.25, 7), [0.0], np.geomspace(0.25, tau_max, 7)])
    edges = np.unique(np.concatenate([[-tau_max], edges, [tau_max]]))
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        t, w = gauss_legendre(n_tau, a, b)
        nodes.append(t)
        weights.append(w)
    taus, wts = np.concatenate(nodes), np.concatenate(weights)
    E = np.array([cellx * float(np.sum(np.abs(field(uQ, t) * field(uQp, t)) ** p)) for t in taus])
    total = float(np.sum(wts * E))
    outer = np.abs(taus) >= tau_max / 2
    tail = float(np.sum(wts[outer] * E[outer])) / total if total > 0 else 0.0
    ratio = total ** (1 / p) / (nQ * nQp)
    return BilinearResult(ratio, tail) if details else ratio


def dyadic_sum_ratio(f: ProfileFunction, mu: float, nu: float, levels: tuple | None = None,
                     support_tol: float = 1e-14) -> float:
    """(sum_Q |Q|^{-nu/mu'} ||f||_{L^1(Q)}^nu)^{1/nu} / ||f||_{L^mu}.

    Cubes are assigned lattice samples by floor(x / 2^j); levels run from
    the first side above twice the spacing to eight times the support
    diameter, where both ends of the sum have decayed geometrically.
    """
    if not 1 < mu < nu:
        raise ValueError("need 1 < mu < nu")
    d = f.d
    a = np.abs(f.values)
    peak = a.max()
    if peak == 0:
        raise ValueError("f vanishes")
    mask = a > support_tol * peak
    pts = np.stack([m[mask] for m in f.mesh()], axis=1)
    vals = a[mask] * f.spacing**d
    if levels is None:
        diam = float(np.max(np.ptp(pts, axis=0))) + f.spacing
        levels = (math.floor(math.log2(f.spacing)) + 1, math.ceil(math.log2(diam)) + 3)
    mu_p = mu / (mu - 1)
    total = 0.0
    for j in range(levels[0], levels[1] + 1):
        side = 2.0**j
        keys = np.floor(pts / side).astype(np.int64)
        _, inv = np.unique(keys, axis=0, return_inverse=True)
        l1 = np.bincount(inv.ravel(), weights=vals)
        total += side ** (-d * nu / mu_p) * float(np.sum(l1**nu))
    return total ** (1 / nu) / f.lp_norm(mu)
