"""Fixed-point ascent for the sphere extension quotient.

The update is f <- normalize(E*(W |Ef|^{q-2} Ef)), where W are the space
weights with the tail model folded in.  Because the discrete energy
sum W |Ef|^q is convex and 1-homogeneous in |.|^q, this step never lowers
it; a damping factor handles the rare cases where rounding says otherwise.

Modulations e^{ia.omega} translate f_check and leave the continuum quotient
unchanged, so iterates drift along that flat direction.  Each iterate is
re-centred (``gauge_fix``) so the peak of |f_check| sits at the origin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .extension import ExtensionOperator, _prefactor, _q_value, energy_from_values
from .geometry import (
    SpaceGrid,
    SphereFunction,
    SphereGrid,
    make_space_grid,
    make_sphere_grid,
)
from .strichartz import gaussian_strichartz_constant
from .twoprofile import c_constant

GUARD = 1e-9
STOP_TOL = 1e-9
EL_TOL = 1e-6
R3_EXACT = 1 / (4 * math.pi**2)


class AscentError(RuntimeError):
    """The monotonicity guard could not be restored by damping."""


@dataclass
class AscentTrace:
    quotients: list
    shifts: list
    final: SphereFunction
    converged: bool
    beta: float
    el_residual: float
    tail_fraction: float
    seed: int | None = None
    guard_trips: int = 0
    params: dict = field(default_factory=dict)

    @property
    def best(self) -> float:
        return self.quotients[-1]

    def to_dict(self) -> dict:
        return {
            "quotients": list(map(float, self.quotients)),
            "shifts": [list(map(float, a)) for a in self.shifts],
            "converged": self.converged,
            "beta": self.beta,
            "el_residual": self.el_residual,
            "tail_fraction": self.tail_fraction,
            "seed": self.seed,
            "guard_trips": self.guard_trips,
            "params": self.params,
            "final": json.loads(self.final.to_json()),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def default_space(grid: SphereGrid) -> SpaceGrid:
    """Space grid matched to a sphere grid (shared azimuths)."""
    if grid.N == 3:
        return make_space_grid(3, 20.0, 160, grid.resolution)
    return make_space_grid(2, 40.0, 320, grid.resolution)


def random_start(grid: SphereGrid, seed: int, kappa: float = 4.0) -> SphereFunction:
    """Complex Gaussian node values smoothed by one averaging pass.

    The averaging kernel is exp(kappa (omega.omega' - 1)), normalised so that
    constants are preserved.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)
    K = np.exp(kappa * (grid.nodes @ grid.nodes.T - 1.0))
    vals = (K @ (grid.weights * z)) / (K @ grid.weights)
    return SphereFunction(grid, vals).normalized()


def _peak(f: SphereFunction, u: np.ndarray, space: SpaceGrid) -> np.ndarray:
    """Location of max |f_check|: grid argmax, then a local BFGS polish."""
    mag = np.abs(u.ravel())
    k = int(np.argmax(mag))  # first index wins ties
    x0 = space.points[k]
    nodes = f.grid.nodes
    wf = f.grid.weights * f.values
    c = _prefactor(f.grid.N)

    def obj(x):
        e = np.exp(1j * (nodes @ x)) * wf
        v = c * e.sum()
        dv = c * (1j * nodes.T * e).sum(axis=1)
        return -(abs(v) ** 2), -2 * np.real(np.conj(v) * dv)

    res = minimize(obj, x0, jac=True, method="BFGS", options={"gtol": 1e-13})
    if not np.all(np.isfinite(res.x)) or -res.fun < mag[k] ** 2:
        return x0
    return res.x


def gauge_fix(f: SphereFunction, space: SpaceGrid | None = None, op: ExtensionOperator | None = None):
    """Return (e^{-ia.omega} f, a) with the peak of |f_check| moved to the origin.

    Since (e^{-ia.omega} f)_check(x) = f_check(x - a), ``a`` is minus the
    location of the peak.
    """
    if f.norm() == 0:
        raise ValueError("zero-norm input")
    if op is None:
        op = ExtensionOperator(f.grid, space or default_space(f.grid))
    x = _peak(f, op.apply(f), op.space)
    return f.modulate(x), -x


def el_map(f: SphereFunction, op: ExtensionOperator, W: np.ndarray, q: float) -> SphereFunction:
    """normalize(E*(W |Ef|^{q-2} Ef))."""
    u = op.apply(f)
    return op.adjoint(np.abs(u) ** (q - 2) * u, W).normalized()


def el_residual(f: SphereFunction, op: ExtensionOperator, q: float | None = None) -> float:
    """Fixed-point residual, measured after re-centring the image.

    The continuum map commutes with modulations, so comparing modulo the
    gauge removes the drift along the flat direction.
    """
    qv = _q_value(f.grid.N, q)
    W = op.space.tail_weights(qv)
    g = el_map(f.normalized(), op, W, qv)
    g, _ = gauge_fix(g, op=op)
    return (g - f.normalized()).norm()


def ascend(
    f0: SphereFunction,
    max_iters: int,
    space: SpaceGrid | None = None,
    op: ExtensionOperator | None = None,
    beta: float = 1.0,
    gauge: bool = True,
    tol: float = STOP_TOL,
    el_tol: float = EL_TOL,
    seed: int | None = None,
) -> AscentTrace:
    """Run the fixed-point ascent from ``f0``.

    Stops when the quotient increment is below ``tol`` and the fixed-point
    residual is below ``el_tol``, or after ``max_iters`` steps.
    """
    if f0.norm() == 0:
        raise ValueError("zero-norm input")
    if op is None:
        op = ExtensionOperator(f0.grid, space or default_space(f0.grid))
    space = op.space
    q = _q_value(f0.grid.N, None)
    W = space.tail_weights(q)

    def energy(u):
        return float(np.sum(W * np.abs(u.ravel()) ** q))

    f = f0.normalized()
    shifts = []
    if gauge:
        f, a = gauge_fix(f, op=op)
        shifts.append(a)
    u = op.apply(f)
    Q = energy(u)
    quotients = [Q]
    trips = 0
    converged = False
    res = math.inf
    for _ in range(max_iters):
        G = op.adjoint(np.abs(u) ** (q - 2) * u, W).normalized()
        while True:
            cand = G if beta == 1.0 else ((1 - beta) * f + beta * G).normalized()
            uc = op.apply(cand)
            Qc = energy(uc)
            if Qc >= Q - GUARD:
                break
            trips += 1
            beta /= 2
            if beta < 1 / 64:
                raise AscentError(
                    f"quotient fell from {Q:.12g} to {Qc:.12g} even with damping; "
                    "grid probably under-resolved"
                )
        a = np.zeros(f.grid.N)
        if gauge:
            x = _peak(cand, uc, space)
            gc = cand.modulate(x)
            ug = op.apply(gc)
            Qg = energy(ug)
            # only accept the re-centring when it keeps the trace monotone
            if Qg >= Q - GUARD:
                cand, uc, Qc, a = gc, ug, Qg, -x
        res = (cand - f).norm()
        dQ = Qc - Q
        f, u, Q = cand, uc, Qc
        quotients.append(Q)
        shifts.append(a)
        if abs(dQ) < tol and res < el_tol:
            converged = True
            break
    _, frac = energy_from_values(u, space, q)
    return AscentTrace(
        quotients=quotients,
        shifts=shifts,
        final=f,
        converged=converged,
        beta=beta,
        el_residual=float(res),
        tail_fraction=float(frac),
        seed=seed,
        guard_trips=trips,
        params={"max_iters": max_iters, "tol": tol, "el_tol": el_tol, "gauge": gauge},
    )


def multi_start(
    grid: SphereGrid,
    seeds,
    max_iters: int = 60,
    space: SpaceGrid | None = None,
    include_constant: bool = True,
):
    """Ascent from several random smooth starts (and optionally f = 1)."""
    op = ExtensionOperator(grid, space or default_space(grid))
    traces = []
    if include_constant:
        one = SphereFunction(grid, np.ones(grid.size))
        traces.append(ascend(one, max_iters, op=op))
    for s in seeds:
        traces.append(ascend(random_start(grid, s), max_iters, op=op, seed=int(s)))
    return traces


def gap_threshold(N: int) -> float:
    """c(q) S_{N-1}^G with q = 2(N+1)/(N-1)."""
    q = _q_value(N, None)
    return c_constant(q) * gaussian_strichartz_constant(N - 1)


@dataclass
class GapReport:
    N: int
    lower_bound: float
    threshold: float
    tail_fraction: float
    el_residual: float
    n_starts: int
    trusted: bool

    @property
    def margin(self) -> float:
        return self.lower_bound - self.threshold

    @property
    def ratio(self) -> float:
        return self.lower_bound / self.threshold

    def to_dict(self) -> dict:
        out = {
            "N": self.N,
            "lower_bound": self.lower_bound,
            "threshold": self.threshold,
            "margin": self.margin,
            "ratio": self.ratio,
            "tail_fraction": self.tail_fraction,
            "el_residual": self.el_residual,
            "n_starts": self.n_starts,
            "trusted": self.trusted,
        }
        if self.N == 3:
            out["benchmark"] = R3_EXACT
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def gap_report(N: int, resolution: int | None = None, seeds=range(8), max_iters: int = 60) -> GapReport:
    """Best ascent value against the two-profile threshold c(q) S_{N-1}^G."""
    if N not in (2, 3):
        raise ValueError("gap report supports N = 2 and N = 3")
    if resolution is None:
        resolution = 24 if N == 3 else 64
    grid = make_sphere_grid(N, resolution)
    traces = multi_start(grid, seeds, max_iters)
    best = max(traces, key=lambda t: t.best)
    return GapReport(
        N=N,
        lower_bound=best.best,
        threshold=gap_threshold(N),
        tail_fraction=best.tail_fraction,
        el_residual=best.el_residual,
        n_starts=len(traces),
        trusted=best.tail_fraction < 0.1,
    )
