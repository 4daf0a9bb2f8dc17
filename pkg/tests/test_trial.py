import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from srl.extension import extend, lq_norm_q
from srl.geometry import make_space_grid, make_sphere_grid
from srl.strichartz import gaussian_strichartz_constant
from srl.trial import (
    Cutoff,
    RadialProfile,
    antipodal_log_quotient,
    antipodal_sweep,
    extension_lq_norm,
    f_eps,
    fit_expansion,
    g_eps,
    gap_certificate,
    limit_lq_mass,
    lq_mass,
    phi_eps,
    phi_limit,
    single_bump_log_quotient,
    single_bump_sweep,
)
from srl.twoprofile import c_constant

SWEEP = [math.sqrt(v) for v in (0.09, 0.06, 0.04, 0.02)]


# --- cutoff and trial functions ---------------------------------------------


def test_cutoff_shape():
    chi = Cutoff()
    s = np.linspace(-1, 1, 2001)
    v = chi(s)
    assert np.all(v[s <= chi.lo] == 0) and np.all(v[s >= chi.hi] == 1)
    assert np.all(np.diff(v) >= 0)
    assert chi(1.0) == 1.0 and chi(0.0) == 0.0
    # all derivatives vanish at the ends: the ramp is flat to high order
    h = 1e-3
    assert chi(chi.lo + h) < h**5
    assert 1 - chi(chi.hi - h) < h**5
    with pytest.raises(ValueError):
        Cutoff(0.5, 0.25)


def test_trial_function_validation():
    g = make_sphere_grid(3, 16)
    with pytest.raises(ValueError):
        g_eps(0.0, g)
    with pytest.warns(UserWarning):
        g_eps(0.7, g)


def test_f_eps_is_even_and_small_off_the_poles():
    g = make_sphere_grid(3, 32)
    f = f_eps(0.2, g).values.reshape(g.n_theta, g.n_phi)
    # the polar nodes are symmetric: row k mirrors row n-1-k with azimuth shifted by pi
    mirrored = np.roll(f[::-1], g.n_phi // 2, axis=1)
    assert np.max(np.abs(f - mirrored)) < 1e-14
    for eps in (0.3, 0.2, 0.1):
        vals = f_eps(eps, g).values
        band = np.abs(g.nodes[:, 2]) < 0.5
        assert np.max(np.abs(vals[band])) <= math.exp(-0.5 / eps**2)


# --- rescaled profile -------------------------------------------------------


def test_profile_matches_direct_sphere_extension():
    # independent oracle: brute-force sphere quadrature of g_eps_check
    eps = 0.3
    grid = make_sphere_grid(3, 192)
    g = g_eps(eps, grid)
    y = np.random.default_rng(0).uniform(-6, 6, (12, 3))
    direct = extend(g, y)
    x = np.stack([eps * y[:, 0], eps * y[:, 1], eps**2 * y[:, 2]], axis=1)
    rescaled = eps**2 * np.exp(1j * y[:, 2]) * phi_eps(x, eps)
    assert np.max(np.abs(direct - rescaled)) < 1e-10


def test_profile_matches_direct_circle_extension():
    eps = 0.25
    grid = make_sphere_grid(2, 512)
    g = g_eps(eps, grid)
    y = np.random.default_rng(1).uniform(-10, 10, (12, 2))
    x = np.stack([eps * y[:, 0], eps**2 * y[:, 1]], axis=1)
    rescaled = eps * np.exp(1j * y[:, 1]) * phi_eps(x, eps)
    assert np.max(np.abs(extend(g, y) - rescaled)) < 1e-12


def test_phi_eps_limit_at_origin():
    assert abs(phi_eps(np.zeros(3), 0.05) - (2 * math.pi) ** -0.5) < 2e-3


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-4, 4))
def test_phi_eps_close_to_limit_for_small_eps(a, b, t):
    x = np.array([a, b, t])
    assert abs(phi_eps(x, 0.02) - phi_limit(x)[0]) < 3e-3


def test_scaled_l2_expansions():
    # at eps = 0.3 the cutoff ramp removes ~2e-6 of the mass
    assert RadialProfile(0.3, 2).scaled_l2() == pytest.approx(math.pi, rel=1e-5)
    for eps in (0.2, 0.1):
        assert RadialProfile(eps, 2).scaled_l2() == pytest.approx(math.pi, rel=1e-12)
    for eps in (0.3, 0.2, 0.1):
        assert RadialProfile(eps, 1).scaled_l2() == pytest.approx(math.sqrt(math.pi) * (1 + eps**2 / 16),
                                                                  abs=2 * eps**4)


def test_scaled_l2_against_sphere_norm():
    eps = 0.3
    for N, res in ((2, 512), (3, 96)):
        g = g_eps(eps, make_sphere_grid(N, res))
        assert g.norm() ** 2 / eps ** (N - 1) == pytest.approx(RadialProfile(eps, N - 1).scaled_l2(), rel=1e-9)


def test_radial_profile_rejects_d3():
    with pytest.raises(ValueError):
        RadialProfile(0.2, 3)


# --- L^q masses -------------------------------------------------------------


def test_limit_mass_d2():
    m = lq_mass(0.05, 2)
    assert m.value == pytest.approx(limit_lq_mass(2), rel=1e-3)
    assert m.trusted


def test_limit_mass_d1():
    # the eps^2 correction at eps = 0.05 is 7 eps^2 / 16 ~ 1.1e-3; at eps = 0.03 it is 4e-4
    assert lq_mass(0.03, 1).value == pytest.approx(limit_lq_mass(1), rel=1e-3)


def test_lq_mass_grid_convergence():
    a = lq_mass(0.2, 2).value
    b = lq_mass(0.2, 2, n_t=24, n_r=384).value
    assert a == pytest.approx(b, rel=1e-10)


def test_extension_norm_against_space_quadrature():
    eps = 0.35
    # the bump spreads over ~1/eps^2 in y_N, so the box and azimuths must be large
    grid = make_sphere_grid(3, 64)
    space = make_space_grid(3, 120.0, 1200, 64)
    mass, _ = lq_norm_q(g_eps(eps, grid), space)
    assert extension_lq_norm(eps, 3) ** 4 == pytest.approx(mass, rel=1e-3)


# --- sweeps and certificates ------------------------------------------------


def test_fit_expansion_recovers_quadratic():
    e2 = np.array([0.09, 0.06, 0.04, 0.02])
    fit = fit_expansion(e2, 1.5 + 0.25 * e2 - 3 * e2**2)
    assert fit.intercept == pytest.approx(1.5, abs=1e-12)
    assert fit.slope == pytest.approx(0.25, abs=1e-10)
    assert fit.curvature == pytest.approx(-3, abs=1e-8)
    assert fit.residual < 1e-12
    with pytest.raises(ValueError):
        fit_expansion(e2[:3], e2[:3])
    with pytest.raises(ValueError):
        fit_expansion(e2[::-1], e2)


def test_sweep_validation():
    with pytest.raises(ValueError):
        single_bump_sweep([0.3, 0.2, 0.1], 3)
    with pytest.raises(ValueError):
        single_bump_sweep([0.5, 0.3, 0.2, 0.1], 3)


@pytest.mark.parametrize("N,slope_tol,icpt_tol", [(3, 0.03, 1e-3), (2, 0.05, 2e-3)])
def test_single_bump_sweep(N, slope_tol, icpt_tol, tmp_path):
    fit = single_bump_sweep(SWEEP, N)
    assert fit.slope == pytest.approx(0.25, abs=slope_tol)
    assert fit.intercept == pytest.approx(math.log(gaussian_strichartz_constant(N - 1)), abs=icpt_tol)
    assert fit.trusted
    path = tmp_path / "sweep.csv"
    fit.write_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["eps2", "log_quotient"]
    assert [float(r[0]) for r in rows[1:]] == pytest.approx([0.09, 0.06, 0.04, 0.02])


@pytest.mark.parametrize("N,slope_tol,icpt_tol", [(3, 0.05, 1e-3), (2, 0.07, 2e-3)])
def test_antipodal_sweep(N, slope_tol, icpt_tol):
    q = 2 * (N + 1) / (N - 1)
    fit = antipodal_sweep(SWEEP, N)
    target = c_constant(q) * gaussian_strichartz_constant(N - 1)
    assert fit.slope == pytest.approx(0.25, abs=slope_tol)
    assert fit.intercept == pytest.approx(math.log(target), abs=icpt_tol)


@pytest.mark.parametrize("N", [3, 2])
def test_harmonics_are_negligible(N):
    q = 2 * (N + 1) / (N - 1)
    direct, _ = antipodal_log_quotient(0.15, N, route="direct")
    single, _ = single_bump_log_quotient(0.15, N)
    assert math.exp(direct - single) == pytest.approx(c_constant(q), abs=1e-3)


def test_direct_route_needs_even_q():
    with pytest.raises(ValueError):
        antipodal_log_quotient(0.2, 3, route="sideways")


@pytest.mark.parametrize("N", [3, 2])
def test_gap_certificate_positive(N):
    cert = gap_certificate(N, 0.15)
    assert cert.passed and cert.margin > 0 and cert.trusted
    assert cert.to_dict()["pass"] is True
    if N == 3:
        predicted = (math.exp(0.15**2 / 4) - 1) * 3 / (16 * math.pi**2)
        assert cert.margin == pytest.approx(predicted, rel=0.02)
    with pytest.raises(ValueError):
        gap_certificate(4, 0.15)
