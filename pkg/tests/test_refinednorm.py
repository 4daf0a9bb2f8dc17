import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srl import refinednorm as rn
from srl import search, trial
from srl.concmaps import ConcentrationFrame, b_map
from srl.geometry import GridError, SphereFunction, make_profile, make_sphere_grid
from srl.strichartz import Dispersion, SupportError


@pytest.fixture(scope="module")
def circle():
    g = make_sphere_grid(2, 256)
    return g, rn.CapAtlas.build(2, 0.3)


@pytest.fixture(scope="module")
def sphere():
    g = make_sphere_grid(3, 32)
    return g, rn.CapAtlas.build(3, 0.3)


def _band_limited(d, eps, seed, spacing=0.5, half_width=48.0):
    psi = make_profile(d, spacing, half_width)
    rng = np.random.default_rng(seed)
    k = np.sqrt(sum(x**2 for x in np.meshgrid(*psi.freq_axes(), indexing="ij")))
    bump = np.zeros_like(k)
    m = k < eps
    bump[m] = np.exp(-1 / (1 - (k[m] / eps) ** 2))
    F = (rng.standard_normal(psi.shape) + 1j * rng.standard_normal(psi.shape)) * bump
    return psi.from_fourier(F)


def _brute_sup(f, atlas, box=rn.X_BOX, h=None):
    """Independent refined norm: own cube grouping and plain x sampling, no
    local polishing.  Returns (sampled max, first-order upper bound).

    With ``h`` the x samples form a uniform lattice of that spacing; otherwise
    each piece gets its own lattice at twice the production density.
    """
    g = f.grid
    chi = atlas.partition(g)
    j_min, j_max = rn.level_window(g, atlas.eps_cap)
    pref = (2 * math.pi) ** (-g.N / 2)
    pieces = []
    for a in range(atlas.size):
        loc = g.nodes @ atlas.rotations[a]
        c = pref * g.weights * chi[a] * f.values
        ok = (chi[a] > 0) & (loc[:, -1] > 0) & (c != 0)
        for j in range(j_min, j_max + 1):
            s = 2.0**j
            keys = np.floor(loc[:, :-1] / s).astype(int)
            for k in {tuple(r) for r in keys[ok]}:
                lo = s * np.array(k)
                if np.linalg.norm(np.clip(0.0, lo, lo + s)) >= atlas.eps_cap:
                    continue
                sel = ok & np.all(keys == k, axis=1)
                pieces.append((s ** (-(g.N - 1) / 2), c[sel], loc[sel]))
    pieces.sort(key=lambda p: -p[0] * np.abs(p[1]).sum())
    best = upper = 0.0
    for scale, c, nu in pieces:
        mass = scale * np.abs(c).sum()
        if mass <= best:
            upper = max(upper, mass)
            break
        eta = nu - 0.5 * (nu.max(0) + nu.min(0))
        b = np.abs(eta).max(0)
        axes, steps = [], []
        for bi in b:
            hi = h if h is not None else (box if bi == 0 else min(math.pi / (8 * bi), box))
            axes.append(hi * np.arange(-math.ceil(box / hi), math.ceil(box / hi) + 1))
            steps.append(hi)
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], 1)
        pts = pts[np.sum(pts**2, 1) <= box * box]
        top = 0.0
        for chunk in np.array_split(pts, max(1, len(pts) // 20000)):
            top = max(top, scale * float(np.abs(np.exp(1j * chunk @ eta.T) @ c).max()))
        best = max(best, top)
        upper = max(upper, min(mass, top + mass * sum(bi * hi / 2 for bi, hi in zip(b, steps))))
    return best, max(upper, best)


# --- cubes and atlas ---------------------------------------------------------


def test_cube_basics():
    Q = rn.DyadicCube(-2, (1, -1))
    assert Q.side == 0.25 and Q.dim == 2 and Q.volume == 0.0625
    assert np.allclose(Q.lower(), [0.25, -0.25])
    assert Q.contains([[0.3, -0.1]])[0] and not Q.contains([[0.5, -0.1]])[0]
    assert Q.parent() == rn.DyadicCube(-1, (0, -1))
    assert Q.distance_to_origin() == pytest.approx(0.25)
    assert rn.DyadicCube(-2, (0, 0)).distance_to_origin() == 0.0
    assert rn.DyadicCube(3, [1.0, 2.0]).corner == (1, 2)


@given(st.integers(-6, 2), st.lists(st.integers(-20, 20), min_size=1, max_size=3))
def test_cube_contains_its_lower_corner_and_parent_contains_it(level, corner):
    Q = rn.DyadicCube(level, tuple(corner))
    x = Q.lower() + 0.5 * Q.side
    assert Q.contains(x)[0]
    assert Q.parent().contains(x)[0]
    assert Q.parent().side == 2 * Q.side


def test_related_cubes():
    Q = rn.DyadicCube(-3, (0,))
    assert rn.related(Q, rn.DyadicCube(-3, (2,)))
    assert rn.related(Q, rn.DyadicCube(-3, (3,)))
    assert not rn.related(Q, rn.DyadicCube(-3, (1,)))  # closures touch
    assert not rn.related(Q, rn.DyadicCube(-3, (4,)))  # parents apart
    assert not rn.related(Q, rn.DyadicCube(-4, (2,)))
    assert not rn.related(rn.DyadicCube(-3, (0, 0)), rn.DyadicCube(-3, (2,)))
    assert rn.related(rn.DyadicCube(-3, (0, 0)), rn.DyadicCube(-3, (-2, 1)))


@pytest.mark.parametrize("N,res", [(2, 256), (3, 32)])
def test_atlas_partition_of_unity(N, res):
    g = make_sphere_grid(N, res)
    A = rn.CapAtlas.build(N, 0.3)
    chi = A.partition(g)
    assert np.max(np.abs(chi.sum(axis=0) - 1)) < 1e-12
    assert np.all(chi >= 0)
    cosang = A.directions @ g.nodes.T
    assert np.all(chi[cosang <= math.cos(A.radius)] == 0)
    assert np.allclose(np.linalg.norm(A.directions, axis=1), 1)
    north = np.zeros(N)
    north[-1] = 1
    for t, R in zip(A.directions, A.rotations):
        assert np.allclose(R @ north, t)
        assert np.allclose(R.T @ R, np.eye(N), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0)


def test_atlas_validation():
    with pytest.raises(ValueError):
        rn.CapAtlas.build(4, 0.3)
    with pytest.raises(ValueError):
        rn.CapAtlas.build(3, 1.2)
    with pytest.raises(GridError):
        rn.CapAtlas.build(3, 0.3).partition(make_sphere_grid(2, 64))


def test_rotation_to_south_pole():
    R = rn.rotation_to(np.array([0.0, 0.0, -1.0]))
    assert np.allclose(R @ [0, 0, 1], [0, 0, -1])
    assert np.linalg.det(R) == pytest.approx(1.0)


def test_lifted_region_membership(sphere):
    g, A = sphere
    L = rn.LiftedRegion(rn.DyadicCube(-2, (0, 0)), 3)
    loc = A.local_coords(3, g.nodes)
    want = (loc[:, 0] >= 0) & (loc[:, 0] < 0.25) & (loc[:, 1] >= 0) & (loc[:, 1] < 0.25) & (loc[:, 2] > 0)
    assert np.array_equal(L.contains(g.nodes, A), want)
    assert want.any()


# --- refined norm ------------------------------------------------------------


def test_constant_function_matches_brute_force_on_the_sphere(sphere):
    g, A = sphere
    f = SphereFunction(g, np.ones(g.size))
    rep = rn.refined_norm(f, A)
    brute, upper = _brute_sup(f, A)
    assert rep.value == pytest.approx(brute, rel=1e-6)
    assert rep.value <= upper * (1 + 1e-12)
    assert rep.value <= rep.sampling_bound + 1e-15


@pytest.mark.parametrize("make", [
    lambda g: trial.g_eps(0.3, g),
    lambda g: search.random_start(g, 1),
    lambda g: SphereFunction(g, np.ones(g.size)).modulate([3.0, -2.0]),
])
def test_generic_functions_match_brute_force_on_the_circle(circle, make):
    g, A = circle
    f = make(g)
    rep = rn.refined_norm(f, A)
    # polishing can only raise the sampled value
    brute, upper = _brute_sup(f, A)
    assert brute * (1 - 1e-12) <= rep.value <= upper * (1 + 1e-12)
    dense, _ = _brute_sup(f, A, h=0.5)
    assert dense * (1 - 1e-12) <= rep.value <= dense * (1 + 1e-4)
    assert rep.value <= rep.sampling_bound * (1 + 1e-12)


def test_report_fields_and_json(sphere):
    import json

    g, A = sphere
    rep = rn.refined_norm(trial.g_eps(0.3, g), A)
    d = json.loads(rep.to_json())
    assert {"value", "alpha", "cube", "x_argmax", "resolution_floor_hit"} <= set(d)
    assert set(d["cube"]) == {"level", "corner"}
    assert len(d["x_argmax"]) == 3
    j_min, j_max = rep.levels
    assert j_min <= rep.cube.level <= j_max
    assert rep.resolution_floor_hit == (rep.cube.level == j_min)
    assert rep.value <= rep.l1_bound * (1 + 1e-12)


def test_zero_function_gives_zero(sphere):
    g, A = sphere
    rep = rn.refined_norm(SphereFunction(g, np.zeros(g.size)), A)
    assert rep.value == 0.0


@pytest.mark.parametrize("N,res", [(2, 256), (3, 32)])
def test_modulation_invariance(N, res):
    g = make_sphere_grid(N, res)
    A = rn.CapAtlas.build(N, 0.3)
    rng = np.random.default_rng(5)
    for f in (trial.g_eps(0.3, g), search.random_start(g, 2)):
        base = rn.refined_norm(f, A)
        a = rng.uniform(-4, 4, N)
        mod = rn.refined_norm(f.modulate(a), A)
        # the x box is fixed while modulation translates the transform
        assert mod.value == pytest.approx(base.value, rel=1e-6)
        assert mod.value <= base.sampling_bound * (1 + 1e-12)
        assert base.value <= mod.sampling_bound * (1 + 1e-12)


def test_chain_upper_bound(sphere, circle):
    for g, A in (sphere, circle):
        C = rn.refined_upper_constant(g, A)
        for seed in range(3):
            f = search.random_start(g, seed)
            assert rn.refined_norm(f, A).value <= C * f.norm() * (1 + 1e-12)
        for f in (SphereFunction(g, np.ones(g.size)), trial.g_eps(0.2, g)):
            assert rn.refined_norm(f, A).value <= C * f.norm() * (1 + 1e-12)


def test_rotation_covariance_exact_for_grid_symmetries(circle):
    g, A = circle
    f = search.random_start(g, 3)
    shift = 17
    ang = shift * 2 * math.pi / g.size
    R = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
    rotated = SphereFunction(g, np.roll(f.values, shift))  # f o R^{-1}
    assert np.allclose(g.nodes[shift], R @ g.nodes[0])
    a = rn.refined_norm(f, A).value
    b = rn.refined_norm(rotated, A.rotated(R)).value
    assert b == pytest.approx(a, rel=1e-9)


def test_rotation_covariance_azimuthal_on_the_sphere(sphere):
    g, A = sphere
    ang = 5 * 2 * math.pi / g.n_phi
    R = np.array([[math.cos(ang), -math.sin(ang), 0], [math.sin(ang), math.cos(ang), 0], [0, 0, 1]])

    def F(w):
        return np.exp(-(1 - w @ np.array([0.6, 0.0, 0.8])) / 0.09) * (1 + 0.5j * w[:, 0])

    f = SphereFunction.from_callable(g, F)
    fr = SphereFunction.from_callable(g, lambda w: F(w @ R))
    a = rn.refined_norm(f, A).value
    b = rn.refined_norm(fr, A.rotated(R)).value
    assert b == pytest.approx(a, rel=1e-8)


def test_rotation_covariance_generic(sphere):
    g, A = sphere
    R = rn.rotation_to(np.array([0.3, -0.5, 0.81]))

    def F(w):
        return np.exp(-(1 - w @ np.array([0.0, 0.6, 0.8])) / 0.09)

    f = SphereFunction.from_callable(g, F)
    fr = SphereFunction.from_callable(g, lambda w: F(w @ R))
    a = rn.refined_norm(f, A).value
    b = rn.refined_norm(fr, A.rotated(R)).value
    # off the grid's symmetry group the nodes inside each small cube change;
    # cubes at the finest level hold only a few nodes
    assert b == pytest.approx(a, rel=0.25)


def test_modulated_bump_sequence_is_constant(circle):
    g, A = circle
    base = trial.g_eps(0.2, g)
    vals = [rn.refined_norm(base.modulate([3.0 * n, -2.0 * n]), A).value for n in range(4)]
    assert max(vals) - min(vals) < 1e-8 * max(vals)


def test_spreading_weakly_null_sequence_decreases():
    g = make_sphere_grid(2, 1024)
    A = rn.CapAtlas.build(2, 0.3)
    frame = ConcentrationFrame.identity(2, 0.1)

    def spread(n):
        def phi(x):
            x = x[:, 0]
            return sum((-1) ** k * np.exp(-((x - 4.0 * k) ** 2)) for k in range(n)) / math.sqrt(n)
        return phi

    vals = []
    for n in (1, 2, 4, 8):
        f = b_map(spread(n), None, frame, g)
        vals.append(rn.refined_norm(f, A).value / f.norm())
    assert all(b < a for a, b in zip(vals, vals[1:]))


# --- implied constants -----------------------------------------------------


def test_g_eps_implied_constants_stay_in_a_band():
    g = make_sphere_grid(3, 64)
    A = rn.CapAtlas.build(3, 0.3)
    eps = (0.3, 0.2, 0.1)
    fam = [trial.g_eps(e, g) for e in eps]
    lq = [trial.extension_lq_norm(e, 3) for e in eps]
    c = rn.refined_inequality_profile(fam, A, 0.5, lq_norms=lq)
    assert all(np.isfinite(c)) and min(c) > 0
    assert max(c) / min(c) <= 5.0


def test_implied_constants_from_a_space_grid(circle):
    from srl.geometry import make_space_grid

    g, A = circle
    space = make_space_grid(2, 24.0, 96, g.resolution)
    fam = [SphereFunction(g, np.ones(g.size)), trial.g_eps(0.3, g), search.random_start(g, 0)]
    c = rn.refined_inequality_profile(fam, A, 0.5, space=space)
    assert all(np.isfinite(c)) and min(c) > 0


def test_implied_constants_reject_bad_input(circle):
    g, A = circle
    with pytest.raises(ValueError):
        rn.refined_inequality_profile([SphereFunction(g, np.zeros(g.size))], A, 0.5, lq_norms=[1.0])
    with pytest.raises(ValueError):
        rn.refined_inequality_profile([trial.g_eps(0.3, g)], A, 1.0, lq_norms=[1.0])
    with pytest.raises(ValueError):
        rn.refined_inequality_profile([trial.g_eps(0.3, g)], A, 0.5)


# --- cap-to-profile identity -------------------------------------------------


def _cap_bump(eps):
    def fn(w):
        s2 = (1 - w[:, -1] ** 2) / eps**2
        out = np.zeros(len(w), dtype=complex)
        m = (s2 < 1) & (w[:, -1] > 0)
        out[m] = np.exp(-1 / (1 - s2[m])) * (1 + 0.3j * w[m, 0] / eps)
        return out
    return fn


@pytest.fixture(scope="module")
def fine_sphere():
    return make_sphere_grid(3, 96)


def test_cap_profile_identity(fine_sphere):
    f = SphereFunction.from_callable(fine_sphere, _cap_bump(0.3))
    pts = np.random.default_rng(0).uniform(-5, 5, (200, 3))
    assert rn.cap_profile_identity_residual(f, pts, 0.3) <= 1e-6


def test_cap_profile_identity_on_the_circle():
    g = make_sphere_grid(2, 1024)
    f = SphereFunction.from_callable(g, _cap_bump(0.3))
    pts = np.random.default_rng(1).uniform(-8, 8, (200, 2))
    assert rn.cap_profile_identity_residual(f, pts, 0.3, n_xi=128) <= 1e-9


def test_cap_profile_identity_zero_function(fine_sphere):
    f = SphereFunction(fine_sphere, np.zeros(fine_sphere.size))
    assert rn.cap_profile_identity_residual(f, np.ones((3, 3)), 0.3) == 0.0


def test_cap_profile_identity_rotated_cap(fine_sphere):
    R = rn.rotation_to(np.array([0.48, 0.0, 0.877]))
    bump = _cap_bump(0.3)
    f = SphereFunction.from_callable(fine_sphere, lambda w: bump(w @ R))
    pts = np.random.default_rng(2).uniform(-5, 5, (100, 3))
    assert rn.cap_profile_identity_residual(f, pts, 0.3, rotation=R) <= 1e-6
    with pytest.raises(SupportError):
        rn.cap_profile_identity_residual(f, pts, 0.3)


# --- dyadic inequalities -----------------------------------------------------


def test_q_star_values():
    assert rn.q_star(4) == 2.0
    assert rn.q_star(6) == 1.5
    assert rn.q_star(10 / 3) == pytest.approx(5 / 3, abs=1e-15)
    with pytest.raises(ValueError):
        rn.q_star(2.0)


@given(st.floats(2.01, 50.0))
def test_q_star_is_at_most_two_and_self_dual(q):
    h = q / 2
    v = rn.q_star(q)
    assert 1 < v <= 2 + 1e-12
    assert v in (h, pytest.approx(h / (h - 1)))


@pytest.mark.parametrize("d,p", [(1, 2.5), (2, 1.9)])
def test_bilinear_ratio_band_over_scales(d, p):
    psi = _band_limited(d, 0.5, 3)
    vals = []
    for j in (-2, -3, -4):
        Q = rn.DyadicCube(j, (0,) * d)
        Qp = rn.DyadicCube(j, (2,) + (0,) * (d - 1))
        r = rn.bilinear_ratio(psi, Q, Qp, p, details=True)
        assert np.isfinite(r.ratio) and r.ratio > 0
        assert r.tail_fraction < 0.1
        vals.append(r.ratio)
    assert max(vals) / min(vals) <= 10.0


def test_bilinear_ratio_preconditions():
    psi = _band_limited(1, 0.5, 0)
    Q, Qp = rn.DyadicCube(-3, (0,)), rn.DyadicCube(-3, (2,))
    with pytest.raises(ValueError):
        rn.bilinear_ratio(psi, Q, Qp, 1.9)  # outside the open range for d = 1
    with pytest.raises(ValueError):
        rn.bilinear_ratio(psi, Q, rn.DyadicCube(-3, (1,)), 2.5)
    with pytest.raises(ValueError):
        rn.bilinear_ratio(psi, rn.DyadicCube(-3, (0, 0)), rn.DyadicCube(-3, (2, 0)), 2.5)
    with pytest.raises(SupportError):
        rn.bilinear_ratio(_band_limited(1, 1.5, 0, spacing=0.25), Q, Qp, 2.5)
    with pytest.raises(ValueError, match="vanishes"):
        rn.bilinear_ratio(psi.with_values(np.zeros(psi.shape)), Q, Qp, 2.5)


def test_bilinear_ratio_parabolic_vs_perturbed():
    psi = _band_limited(1, 0.1, 4)
    Q, Qp = rn.DyadicCube(-5, (0,)), rn.DyadicCube(-5, (2,))
    a = rn.bilinear_ratio(psi, Q, Qp, 2.5, eps=0.1)
    b = rn.bilinear_ratio(psi, Q, Qp, 2.5, disp=Dispersion("perturbed"), eps=0.1)
    assert 0.5 <= a / b <= 2.0


def test_dyadic_sum_ratio_bump_is_finite():
    f = make_profile(1, 0.02, 6, lambda x: np.where(np.abs(x) < 1, np.exp(-1 / (1 - np.minimum(x**2, 0.999999))), 0))
    r = rn.dyadic_sum_ratio(f, 4 / 3, 2.0)
    assert np.isfinite(r) and r > 0


def test_dyadic_sum_ratio_scaling_covariance():
    mu, nu = 4 / 3, 2.0
    vals = []
    for lam in (1, 2, 4):
        f = make_profile(1, 0.02 / lam, 6 / lam,
                         lambda x: lam ** (1 / mu) * np.exp(-((lam * x) ** 2)) * np.cos(3 * lam * x))
        vals.append(rn.dyadic_sum_ratio(f, mu, nu))
    assert max(vals) / min(vals) - 1 < 1e-3


def test_dyadic_sum_ratio_random_band():
    ratios = []
    for s in range(20):
        r = np.random.default_rng(1000 + s)
        c, w, k = r.uniform(-2, 2), r.uniform(0.3, 2.0), r.uniform(0, 6)
        f = make_profile(1, 0.02, 6, lambda x: np.exp(-((x - c) ** 2) / (2 * w**2)) * np.cos(k * x))
        ratios.append(rn.dyadic_sum_ratio(f, 4 / 3, 2.0))
    assert max(ratios) / min(ratios) <= 10.0


def test_dyadic_sum_ratio_preconditions():
    f = make_profile(1, 0.1, 4, lambda x: np.exp(-(x**2)))
    with pytest.raises(ValueError):
        rn.dyadic_sum_ratio(f, 2.0, 1.5)
    with pytest.raises(ValueError):
        rn.dyadic_sum_ratio(f, 1.0, 2.0)
    with pytest.raises(ValueError):
        rn.dyadic_sum_ratio(f.with_values(np.zeros(f.shape)), 4 / 3, 2.0)
