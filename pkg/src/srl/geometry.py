"""Grids, quadrature rules and function containers.

Sphere grids are product rules: uniform nodes on the circle for N=2 and
Gauss-Legendre in the polar cosine times uniform azimuth for N=3.  The
azimuthal structure is kept (``n_theta``, ``n_phi``) so that the extension
operator can exploit it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    """Invalid grid construction or mismatched grids."""


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere in R^N."""
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


def gauss_legendre(n: int, a: float = -1.0, b: float = 1.0):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def composite_gauss_legendre(edges, order: int):
    """Panel-composite Gauss-Legendre rule on consecutive intervals."""
    x0, w0 = np.polynomial.legendre.leggauss(order)
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1, None], edges[1:, None]
    x = 0.5 * (b - a) * x0 + 0.5 * (b + a)
    w = 0.5 * (b - a) * w0
    return x.ravel(), np.broadcast_to(w, x.shape).ravel().copy()


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Quadrature nodes and weights for surface measure on S^{N-1}.

    Nodes are stored flat, ordered theta-major (``n_theta`` rows of
    ``n_phi`` azimuths).  For N=2 there is a single row.
    """

    N: int
    nodes: np.ndarray
    weights: np.ndarray
    n_theta: int
    n_phi: int
    resolution: int
    kind: str = "sphere"

    def __post_init__(self):
        norms = np.linalg.norm(self.nodes, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise GridError("sphere nodes must be unit vectors")
        if np.any(self.weights <= 0):
            raise GridError("sphere weights must be positive")
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def cos_theta(self) -> np.ndarray:
        """Polar cosines of the rows (N=3) or None for the circle."""
        if self.N == 2:
            return None
        return self.nodes[:: self.n_phi, 2].copy()

    @property
    def phi(self) -> np.ndarray:
        return np.arange(self.n_phi) * (2 * np.pi / self.n_phi) + self._phi0

    @property
    def _phi0(self) -> float:
        # circle nodes are shifted by half a step so none sits on omega_N = 0
        return np.pi / self.n_phi if self.N == 2 else 0.0

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "N": self.N,
                "nodes": self.nodes.tolist(),
                "weights": self.weights.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SphereGrid":
        doc = json.loads(text)
        if doc.get("kind") != "sphere":
            raise GridError(f"not a sphere grid document: {doc.get('kind')!r}")
        nodes = np.asarray(doc["nodes"], dtype=float)
        weights = np.asarray(doc["weights"], dtype=float)
        N = int(doc["N"])
        # recover the product structure from the node layout
        if N == 2:
            n_theta, n_phi = 1, len(weights)
        else:
            n_phi = int(np.argmax(np.abs(np.diff(nodes[:, 2])) > 1e-14)) + 1
            n_theta = len(weights) // n_phi
        return cls(N, nodes, weights, n_theta, n_phi, resolution=n_theta if N == 3 else n_phi)


def make_sphere_grid(N: int, resolution: int) -> SphereGrid:
    """Product quadrature on S^{N-1}.

    N=2: ``resolution`` equally weighted nodes on the circle, offset by half a
    step so that no node lies on omega_2 = 0.
    N=3: ``resolution`` Gauss-Legendre nodes in cos(theta) times
    ``2*resolution`` uniform azimuths.  Even resolutions keep nodes off the
    equator.
    """
    if N not in (2, 3):
        raise GridError(f"sphere grids support N in {{2, 3}}, got N={N}")
    if resolution < 8:
        raise GridError(f"resolution must be >= 8, got {resolution}")
    if N == 2:
        n = resolution
        phi = (np.arange(n) + 0.5) * (2 * np.pi / n)
        nodes = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        weights = np.full(n, 2 * np.pi / n)
        return SphereGrid(2, nodes, weights, 1, n, resolution)
    t, wt = gauss_legendre(resolution)
    n_phi = 2 * resolution
    phi = np.arange(n_phi) * (2 * np.pi / n_phi)
    st = np.sqrt(1.0 - t**2)
    nodes = np.stack(
        [
            np.outer(st, np.cos(phi)).ravel(),
            np.outer(st, np.sin(phi)).ravel(),
            np.repeat(t, n_phi),
        ],
        axis=1,
    )
    nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
    weights = np.repeat(wt, n_phi) * (2 * np.pi / n_phi)
    return SphereGrid(3, nodes, weights, resolution, n_phi, resolution)


@dataclass(frozen=True, eq=False)
class SphereFunction:
    grid: SphereGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.grid.size,):
            raise GridError(
                f"expected {self.grid.size} values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise GridError("sphere function values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, grid: SphereGrid, fn) -> "SphereFunction":
        return cls(grid, fn(grid.nodes))

    def norm(self) -> float:
        return math.sqrt(inner_product(self, self).real)

    def __mul__(self, c):
        if isinstance(c, SphereFunction):
            _check_same(self.grid, c.grid)
            return SphereFunction(self.grid, self.values * c.values)
        return SphereFunction(self.grid, self.values * c)

    __rmul__ = __mul__

    def __add__(self, other: "SphereFunction"):
        _check_same(self.grid, other.grid)
        return SphereFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "SphereFunction"):
        _check_same(self.grid, other.grid)
        return SphereFunction(self.grid, self.values - other.values)

    def modulate(self, a) -> "SphereFunction":
        """Multiply by exp(i a.omega); translates the extension by -a."""
        a = np.asarray(a, dtype=float)
        return SphereFunction(self.grid, self.values * np.exp(1j * self.grid.nodes @ a))

    def normalized(self) -> "SphereFunction":
        n = self.norm()
        if n == 0:
            raise GridError("cannot normalize the zero function")
        return SphereFunction(self.grid, self.values / n)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "sphere_function",
                "grid": json.loads(self.grid.to_json()),
                "real": self.values.real.tolist(),
                "imag": self.values.imag.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SphereFunction":
        doc = json.loads(text)
        grid = SphereGrid.from_json(json.dumps(doc["grid"]))
        return cls(grid, np.asarray(doc["real"]) + 1j * np.asarray(doc["imag"]))


def _check_same(g1, g2):
    if g1 is not g2 and not (
        g1.N == g2.N
        and g1.nodes.shape == g2.nodes.shape
        and np.array_equal(g1.nodes, g2.nodes)
        and np.array_equal(g1.weights, g2.weights)
    ):
        raise GridError("functions live on different grids")


def inner_product(f: SphereFunction, g: SphereFunction) -> complex:
    """sum_j w_j conj(f_j) g_j, conjugate-linear in the first slot."""
    _check_same(f.grid, g.grid)
    return complex(np.sum(f.grid.weights * np.conj(f.values) * g.values))


# --- interpolation on the sphere -------------------------------------------


def _trig_interp_matrix(n: int, phi0: float, phi: np.ndarray) -> np.ndarray:
    """Rows evaluate the trigonometric interpolant of n equispaced samples."""
    k = np.fft.fftfreq(n, 1.0 / n)
    # symmetric treatment of the Nyquist mode keeps real data real
    nodes = phi0 + np.arange(n) * (2 * np.pi / n)
    d = phi[:, None] - nodes[None, :]
    E = np.exp(1j * d[..., None] * k[None, None, :])
    if n % 2 == 0:
        ny = n // 2
        idx = np.where(k == -ny)[0][0]
        E[..., idx] = np.cos(ny * d)
    return (E.sum(axis=-1) / n).real


def _bary_weights(x: np.ndarray) -> np.ndarray:
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    # log-scale product avoids overflow for a few hundred nodes
    sign = np.prod(np.sign(diff), axis=1)
    logabs = np.sum(np.log(np.abs(diff)), axis=1)
    w = sign * np.exp(-(logabs - logabs.max()))
    return w


def _bary_matrix(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    w = _bary_weights(x)
    d = t[:, None] - x[None, :]
    exact = np.abs(d) < 1e-15
    d[exact] = 1.0
    M = w[None, :] / d
    M /= M.sum(axis=1, keepdims=True)
    rows = np.where(exact.any(axis=1))[0]
    for r in rows:
        M[r] = exact[r].astype(float)
    return M


def interpolate(f: SphereFunction, points: np.ndarray) -> np.ndarray:
    """Spectral interpolation of a sphere function at arbitrary unit vectors.

    Circle: trigonometric interpolation.  S^2: azimuthal Fourier modes, then
    barycentric interpolation in cos(theta) of each mode after removing the
    sin(theta)^(|m| mod 2) factor that makes odd modes non-polynomial.
    """
    grid = f.grid
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if grid.N == 2:
        phi = np.arctan2(points[:, 1], points[:, 0])
        M = _trig_interp_matrix(grid.n_phi, grid._phi0, phi)
        return M @ f.values
    vals = f.values.reshape(grid.n_theta, grid.n_phi)
    n_phi = grid.n_phi
    coeff = np.fft.fft(vals, axis=1) / n_phi  # mode m along axis 1
    m = np.fft.fftfreq(n_phi, 1.0 / n_phi).astype(int)
    t_nodes = grid.cos_theta
    s_nodes = np.sqrt(1 - t_nodes**2)
    t = np.clip(points[:, 2], -1.0, 1.0)
    s = np.sqrt(np.maximum(1 - t**2, 0.0))
    phi = np.arctan2(points[:, 1], points[:, 0])
    B = _bary_matrix(t_nodes, t)
    odd = (np.abs(m) % 2) == 1
    c_even = B @ coeff[:, ~odd]
    c_odd = (B @ (coeff[:, odd] / s_nodes[:, None])) * s[:, None]
    out = np.zeros(len(t), dtype=complex)
    m_even, m_odd = m[~odd], m[odd]
    if n_phi % 2 == 0:
        # split the Nyquist mode into cos form
        ny = n_phi // 2
        w_even = np.exp(1j * np.outer(phi, m_even))
        nyq = m_even == -ny if ny % 2 == 0 else None
        if nyq is not None and nyq.any():
            w_even[:, nyq] = np.cos(ny * phi)[:, None]
        w_odd = np.exp(1j * np.outer(phi, m_odd))
        nyq_o = m_odd == -ny if ny % 2 == 1 else None
        if nyq_o is not None and nyq_o.any():
            w_odd[:, nyq_o] = np.cos(ny * phi)[:, None]
    else:
        w_even = np.exp(1j * np.outer(phi, m_even))
        w_odd = np.exp(1j * np.outer(phi, m_odd))
    out += np.sum(c_even * w_even, axis=1)
    out += np.sum(c_odd * w_odd, axis=1)
    return out


# --- profile functions on R^d ----------------------------------------------


@dataclass(frozen=True, eq=False)
class ProfileFunction:
    """Complex samples on the lattice spacing * (offsets + index) in R^d."""

    d: int
    spacing: float
    offsets: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.ndim != self.d or values.size == 0:
            raise GridError("profile values must be a nonempty d-dimensional array")
        if self.spacing <= 0:
            raise GridError("spacing must be positive")
        if not np.all(np.isfinite(values)):
            raise GridError("profile values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "offsets", tuple(int(o) for o in self.offsets))

    @property
    def shape(self):
        return self.values.shape

    def axes(self):
        return [self.spacing * (o + np.arange(n)) for o, n in zip(self.offsets, self.shape)]

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def norm(self) -> float:
        return math.sqrt(self.spacing**self.d * float(np.sum(np.abs(self.values) ** 2)))

    def lp_norm(self, p: float) -> float:
        return (self.spacing**self.d * float(np.sum(np.abs(self.values) ** p))) ** (1 / p)

    def with_values(self, values) -> "ProfileFunction":
        return ProfileFunction(self.d, self.spacing, self.offsets, values)

    def conj(self) -> "ProfileFunction":
        return self.with_values(np.conj(self.values))

    # Fourier side ---------------------------------------------------------
    def freq_axes(self):
        """Frequencies matching numpy's FFT ordering along each axis."""
        return [2 * np.pi * np.fft.fftfreq(n, self.spacing) for n in self.shape]

    def fourier(self) -> np.ndarray:
        """Unitary-normalized transform psi_hat(xi) on the FFT frequency lattice.

        psi_hat(xi) = (2 pi)^{-d/2} h^d sum_k psi(x_k) exp(-i xi.x_k).
        """
        h = self.spacing
        F = np.fft.fftn(self.values)
        for ax, (o, xi) in enumerate(zip(self.offsets, self.freq_axes())):
            shape = [1] * self.d
            shape[ax] = -1
            F = F * np.exp(-1j * xi * h * o).reshape(shape)
        return F * (h / math.sqrt(2 * math.pi)) ** self.d

    def from_fourier(self, F: np.ndarray) -> "ProfileFunction":
        h = self.spacing
        G = np.asarray(F, dtype=complex)
        for ax, (o, xi) in enumerate(zip(self.offsets, self.freq_axes())):
            shape = [1] * self.d
            shape[ax] = -1
            G = G * np.exp(1j * xi * h * o).reshape(shape)
        vals = np.fft.ifftn(G) / (h / math.sqrt(2 * math.pi)) ** self.d
        return self.with_values(vals)

    def fourier_at(self, xi: np.ndarray) -> np.ndarray:
        """Transform of the lattice samples at arbitrary frequencies (direct sum).

        The lattice sum is periodic in each frequency; only the central cell
        |xi_i| <= pi / spacing is kept and everything outside is set to zero,
        matching the band-limited reading of the samples.
        """
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        h = self.spacing
        out = self.values
        # separable contraction, one axis at a time
        mats = [
            np.exp(-1j * np.outer(xi[:, ax], x)) for ax, x in enumerate(self.axes())
        ]
        if self.d == 1:
            res = mats[0] @ out
        elif self.d == 2:
            res = np.einsum("mj,jk,mk->m", mats[0], out, mats[1], optimize=True)
        else:
            res = np.array(
                [
                    _contract_point(out, [m[i] for m in mats])
                    for i in range(xi.shape[0])
                ]
            )
        inside = np.all(np.abs(xi) <= np.pi / h, axis=1)
        return np.where(inside, res, 0.0) * (h / math.sqrt(2 * math.pi)) ** self.d

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Band-limited (trigonometric) interpolation at arbitrary points."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        mats = []
        for ax, (o, n) in enumerate(zip(self.offsets, self.shape)):
            u = x[:, ax] / self.spacing - o
            mats.append(_periodic_sinc_rows(u, n))
        if self.d == 1:
            return mats[0] @ self.values
        if self.d == 2:
            return np.einsum("mj,jk,mk->m", mats[0], self.values, mats[1], optimize=True)
        return np.array(
            [_contract_point(self.values, [m[i] for m in mats]) for i in range(x.shape[0])]
        )


def _contract_point(arr, vecs):
    out = arr
    for v in vecs:
        out = np.tensordot(v, out, axes=([0], [0]))
    return out


def _periodic_sinc_rows(u: np.ndarray, n: int) -> np.ndarray:
    """Periodic sinc weights for evaluating an n-point trigonometric interpolant.

    ``u`` is the position in lattice units relative to the first sample.
    Points outside the box get zero weight (the profile is treated as
    vanishing there rather than periodic).
    """
    j = np.arange(n)
    t = u[:, None] - j[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        if n % 2 == 1:
            W = np.sin(np.pi * t) / (n * np.sin(np.pi * t / n))
        else:
            W = np.sin(np.pi * t) / (n * np.tan(np.pi * t / n))
    near = np.abs(np.sin(np.pi * t / n)) < 1e-14
    W[near] = 1.0
    outside = (u < -0.5) | (u > n - 0.5)
    W[outside] = 0.0
    return W


def make_profile(d: int, spacing: float, half_width: float, fn=None) -> ProfileFunction:
    """Symmetric lattice covering [-half_width, half_width]^d."""
    if d < 1 or d > 4:
        raise GridError("profile dimension must be in 1..4")
    n = int(math.ceil(half_width / spacing))
    offsets = (-n,) * d
    shape = (2 * n,) * d
    axes = [spacing * (-n + np.arange(2 * n))] * d
    if fn is None:
        values = np.zeros(shape, dtype=complex)
    else:
        mesh = np.meshgrid(*axes, indexing="ij")
        values = fn(*mesh)
    return ProfileFunction(d, spacing, offsets, values)


def gaussian_profile(d: int, spacing: float = 0.25, half_width: float = 12.0) -> ProfileFunction:
    """psi_G(x) = exp(-|x|^2/2)."""
    return make_profile(d, spacing, half_width, lambda *xs: np.exp(-0.5 * sum(x**2 for x in xs)))


# --- space grids over R^N --------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpaceGrid:
    """Radial x angular quadrature on the ball of radius R_max.

    ``tail_exponent`` is the decay rate assumed for |u(x)| beyond R_max; the
    contribution of |x| > R_max to int |u|^q is modelled as
    A * int_{R_max}^inf r^{N-1-q*tail_exponent} dr with A fitted on the outer
    panels (``tail_start`` onwards).
    """

    N: int
    radii: np.ndarray
    radial_weights: np.ndarray  # includes r^{N-1}
    angular: SphereGrid
    tail_exponent: float
    R_max: float
    tail_start: float

    @property
    def points(self) -> np.ndarray:
        return (self.radii[:, None, None] * self.angular.nodes[None, :, :]).reshape(
            -1, self.N
        )

    @property
    def weights(self) -> np.ndarray:
        return np.outer(self.radial_weights, self.angular.weights).ravel()

    def _tail_extra(self, q: float) -> np.ndarray:
        """Extra radial weights realising the tail model.

        The amplitude A of D(r) = A r^{-q*tail_exponent} (D the angular integral
        of |u|^q) is a smooth-bump-weighted average of D(r) r^{q*tail_exponent}
        over [tail_start, R_max]; the bump suppresses oscillation bias.
        """
        e = self.N - 1 - q * self.tail_exponent
        if e >= -1:
            raise GridError("divergent tail: need q * tail_exponent > N")
        tail = self.R_max ** (e + 1) / (-(e + 1))
        r = self.radii
        gl = self.radial_weights / r ** (self.N - 1)
        s = (r - self.tail_start) / (self.R_max - self.tail_start)
        b = np.zeros_like(r)
        inside = (s > 0) & (s < 1)
        si = s[inside]
        b[inside] = np.exp(-1.0 / (si * (1 - si)))
        return tail * b * gl * r ** (q * self.tail_exponent) / np.sum(b * gl)

    def tail_weights(self, q: float) -> np.ndarray:
        """Per-point weights such that sum W |u|^q includes the tail model."""
        radial = self.radial_weights + self._tail_extra(q)
        return np.outer(radial, self.angular.weights).ravel()

    def integrate(self, values: np.ndarray) -> float:
        """Plain quadrature over the ball (no tail model)."""
        return float(np.sum(self.weights * np.asarray(values).ravel()))

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "space",
                "N": self.N,
                "nodes": self.points.tolist(),
                "weights": self.weights.tolist(),
                "R_max": self.R_max,
                "tail_exponent": self.tail_exponent,
            }
        )


def make_space_grid(
    N: int,
    R_max: float,
    radial_nodes: int,
    angular_resolution: int,
    tail_exponent: float | None = None,
    q: float | None = None,
    panel_order: int = 8,
    tail_window: float = 0.5,
) -> SpaceGrid:
    """Build a SpaceGrid; ``radial_nodes`` is rounded up to whole panels."""
    if R_max <= 0:
        raise GridError("R_max must be positive")
    if tail_exponent is None:
        tail_exponent = (N - 1) / 2
    if tail_exponent <= 0:
        raise GridError("tail_exponent must be positive")
    if q is None:
        q = 2 * (N + 1) / (N - 1)
    if q * tail_exponent <= N:
        raise GridError(
            f"divergent tail: q*tail_exponent = {q * tail_exponent} <= N = {N}"
        )
    n_panels = max(1, int(math.ceil(radial_nodes / panel_order)))
    edges = np.linspace(0.0, R_max, n_panels + 1)
    r, w = composite_gauss_legendre(edges, panel_order)
    w = w * r ** (N - 1)
    start_panel = int(round((1 - tail_window) * n_panels))
    start_panel = min(max(start_panel, 0), n_panels - 1)
    angular = make_sphere_grid(N, angular_resolution)
    return SpaceGrid(N, r, w, angular, float(tail_exponent), float(R_max), float(edges[start_panel]))


def stein_tomas_exponent(N: int):
    """q = 2(N+1)/(N-1) as an exact fraction."""
    from fractions import Fraction

    return Fraction(2 * (N + 1), N - 1)
