import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from desclab import geometry as geo
from desclab._util import loglog_fit

coord = st.floats(-1e6, 1e6, allow_nan=False)
radius = st.floats(0, 1e6, allow_nan=False)


def sigma_plus_oracle(y):
    return (y + math.sqrt(y * y + 1)) / 2


def test_ff_at_origin():
    # oracle: 1/(1 + sigma(0)) with sigma(0) = 1/2
    assert geo.bdf("Ff", geo.SpacetimePoint(0, (0,))) == pytest.approx(2 / 3,
                                                                       rel=1e-14)


def test_total_at_origin():
    rho_sf = 1 / (1 + sigma_plus_oracle(-1.0))
    expected = (2 / 3) ** 2 * rho_sf
    assert expected == pytest.approx(0.368, abs=5e-4)
    assert geo.total_bdf(geo.SpacetimePoint(0, (0,))) == pytest.approx(
        expected, rel=1e-12)


def test_null_value_and_rate():
    z = geo.SpacetimePoint(1e6, (1e6,))
    assert geo.bdf("nFf", z) == pytest.approx(8.41e-4, rel=2e-3)
    r = 2.0 ** np.arange(6, 21)
    slope, _, _ = loglog_fit(r, geo.bdf_tr("nFf", r, r))
    assert slope == pytest.approx(-0.5, abs=0.05)


def test_sigma_plus_stable_branch():
    y = np.array([-1e8, -3.0, 0.0, 2.0])
    expected = [sigma_plus_oracle(v) if v > -1e3 else 1 / (4 * -v) for v in y]
    assert np.allclose(geo._sigma_plus(y), expected, rtol=1e-12)


@given(coord, radius)
def test_bdfs_in_unit_interval(t, r):
    for f in geo.FACES:
        v = float(geo.bdf_tr(f, t, r))
        assert 0 < v <= 1


@given(coord, radius)
def test_time_reflection(t, r):
    assert geo.bdf_tr("Pf", t, r) == geo.bdf_tr("Ff", -t, r)
    assert geo.bdf_tr("nPf", t, r) == geo.bdf_tr("nFf", -t, r)


def test_reflection_involution():
    for f in geo.FACES:
        assert geo.reflect_face(geo.reflect_face(f)) == f
    with pytest.raises(ValueError):
        geo.check_face("df")


@given(coord, radius)
def test_total_is_product(t, r):
    b = geo.all_bdfs_tr(t, r)
    assert geo.total_bdf_tr(t, r) == pytest.approx(np.prod(list(b.values())),
                                                   rel=1e-12)


def test_comparability_sweep():
    s = np.concatenate([[0.0], np.logspace(-2, 6, 60)])
    T, R = np.meshgrid(np.concatenate([-s[::-1], s]), s)
    c = geo.comparability(T, R)
    assert 1e-2 <= c.min() and c.max() <= 1e2


def test_total_along_axis():
    t = np.logspace(2, 6, 20)
    slope, _, _ = loglog_fit(t, geo.total_bdf_tr(t, 0 * t))
    assert slope == pytest.approx(-1, abs=0.05)


@pytest.mark.parametrize("face", geo.FACES)
def test_vanishing_pattern(face):
    target = -0.5 if face in ("nPf", "nFf") else -1.0
    for fam in geo.canonical_families(face):
        pts = fam.points()
        var = [geo.face_decay_variable(face, z.t, z.r) for z in pts]
        for other in geo.FACES:
            slope, _, _ = loglog_fit(var, [geo.bdf(other, z) for z in pts])
            want = target if other == face else 0.0
            assert slope == pytest.approx(want, abs=0.05), (fam.label(), other)


@pytest.mark.parametrize("beta", geo.BETAS)
def test_corner_probe(beta):
    fam = geo.RayFamily("nFf", beta, corner=True)
    pts = fam.points()
    r = [z.r for z in pts]
    nf = [geo.bdf("nFf", z) for z in pts]
    ff = [geo.bdf("Ff", z) for z in pts]
    assert loglog_fit(r, nf)[0] == pytest.approx((beta - 1) / 2, abs=0.05)
    assert loglog_fit(r, ff)[0] == pytest.approx(-beta, abs=0.05)
    prod = np.array(nf) ** 2 * np.array(ff)
    assert loglog_fit(r, prod)[0] == pytest.approx(-1, abs=0.05)


def test_ray_examples():
    assert geo.ray("Sf", 0.0, 10).array() == pytest.approx([0, 1024])
    assert geo.ray("nFf", 5.0, 10).array() == pytest.approx([1029, 1024])
    assert geo.ray("Ff", 0.3, 10).array() == pytest.approx([1024, 307.2])
    for face in ("Sf", "Ff", "Pf"):
        with pytest.raises(ValueError):
            geo.ray(face, 1.0, 10)


def test_ray_monotone():
    for face in geo.FACES:
        for fam in geo.canonical_families(face):
            vals = [geo.bdf(face, z) for z in fam.points()]
            assert np.all(np.diff(vals) < 0)


def test_frame_near_axis_is_coordinate():
    for x in (0.0, 0.5, 3.0, 1e4):
        fr = geo.desc_frame(geo.SpacetimePoint(0.0, (x,)))
        assert fr.chi == 0
        assert np.array_equal(fr.matrix(), np.eye(2))
    fr = geo.desc_frame(geo.SpacetimePoint(0.0, (1.0, 2.0, 0.5)))
    assert np.array_equal(fr.matrix(), np.eye(4))


def test_frame_at_null_infinity():
    r = 1e4
    z = geo.SpacetimePoint(r + 1, (r,))
    fr = geo.desc_frame(z)
    assert fr.chi == 1
    lc = fr.vectors[fr.roles.index("lightcone")]
    inv = 1 / (geo.bdf("nPf", z) * geo.bdf("nFf", z))
    assert lc == pytest.approx([inv, inv])
    # rho_n^{-1} grows like r^{1/2}
    rs = 2.0 ** np.arange(8, 21)
    rn = [geo.desc_frame(geo.SpacetimePoint(q + 1, (q,))).rho_n for q in rs]
    assert loglog_fit(rs, 1 / np.array(rn))[0] == pytest.approx(0.5, abs=0.05)


def test_frame_angular_d3():
    z = geo.SpacetimePoint(1e3 + 2, (1e3, 0, 0))
    fr = geo.desc_frame(z)
    assert [r for r in fr.roles if r.startswith("angular")] == [
        "angular_0", "angular_1", "angular_2"]


@pytest.mark.parametrize("face", geo.FACES)
def test_frame_continuity(face):
    # fine sampling along a path through the cutoff transition region
    for fam in geo.canonical_families(face):
        ks = np.linspace(0, 3, 3001)
        prev = None
        for k in ks:
            t, x = fam.tr(k)
            F = geo.desc_frame(geo.SpacetimePoint(t, (x,)))
            M = np.zeros((4, 2))
            for v, role in zip(F.vectors, F.roles):
                M[["time", "spatial_0", "lightcone"].index(role)] = v
            if prev is not None:
                assert np.max(np.abs(M - prev)) < 1e-2
            prev = M


def test_tensor_norm_zero():
    assert geo.desc_tensor_norm(np.zeros((2, 2)),
                                geo.SpacetimePoint(3, (1,))) == 0


@settings(max_examples=50)
@given(coord, st.floats(-1e6, 1e6, allow_nan=False))
def test_point_validation(t, x):
    z = geo.SpacetimePoint(t, (x,))
    assert z.r >= 0 and z.reflected().reflected() == z
