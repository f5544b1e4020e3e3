import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from desclab import metrics as M
from desclab import resolvent as R
from desclab import selfadjoint as SA


def grid(h=0.2, ext=4.0):
    return R.GridSpec.from_spacing(h, ext, boundary="dirichlet")


def dense_sigma_min(op, shift):
    """Oracle: full SVD of W^{1/2} P_h W^{-1/2} + shift."""
    sw = np.sqrt(op.weight)
    B = (sw[:, None] * op.matrix.toarray() / sw[None, :]
         + shift * np.eye(op.n))
    return np.linalg.svd(B, compute_uv=False).min()


@settings(max_examples=10, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_minkowski_defect_vanishes(a, b, c, d):
    spec = R.GridSpec.from_spacing(0.2, 8.0, boundary="dirichlet")
    op = R.build_discrete_operator(M.minkowski(1), 1.0, None, spec)
    u = R.gaussian_source(spec, center=(a, b))
    v = R.gaussian_source(spec, center=(c, d), poly=(1.0, 0.5))
    assert SA.symmetry_defect(op, u, v) < 1e-10


def test_self_pairing_identity():
    spec = R.GridSpec.from_spacing(0.1, 12.0, boundary="dirichlet")
    op = R.build_discrete_operator(M.vaidya_glued(0.25, 0.5, 0.25, r0=3.0),
                                   0.0, R.VectorFieldTerm(0.7), spec)
    u = R.gaussian_source(spec, center=(0.5, 2.5), poly=(1.0, 0.3))
    u = R.GridField(u.values * np.exp(0.7j * spec.mesh()[1]), spec)
    lhs = SA.symmetry_defect(op, u, u)
    rhs = 2 * abs(op.g_inner(op.apply(u), u).imag)
    assert lhs > 1e-8
    assert lhs == pytest.approx(rhs, rel=1e-9)
    # in its own volume pairing the operator is exactly symmetric
    assert SA.symmetry_defect(op, u, u, pairing="own") < 1e-12


def test_support_violation():
    spec = grid()
    op = R.build_discrete_operator(M.minkowski(1), 0.0, None, spec)
    edge = R.gaussian_source(spec, center=(0.0, 3.5))
    with pytest.raises(R.SupportError):
        SA.symmetry_defect(op, edge, edge)


def test_defect_ratio_second_order():
    ratio, defects = SA.defect_ratio(M.vaidya_glued())
    assert ratio >= 3.5
    assert defects[1] > 1e-13  # well above round-off


def test_defect_ratio_minkowski_is_roundoff():
    _, defects = SA.defect_ratio(M.minkowski(1))
    assert max(defects) < 1e-12


@pytest.mark.parametrize("metric,a_term", [
    (M.minkowski(1), None),
    (M.vaidya_glued(0.25, 0.5, 0.25, r0=3.0), None),
    (M.vaidya_glued(0.25, 0.5, 0.25, r0=3.0), R.VectorFieldTerm(0.8)),
])
def test_sigma_min_against_dense_svd(metric, a_term):
    op = R.build_discrete_operator(metric, 0.0, a_term, grid())
    for shift in (-1j, 1j):
        est = SA.smallest_singular_value(op, shift)
        exact = dense_sigma_min(op, shift)
        assert exact >= 1 - 1e-12
        assert est == pytest.approx(exact, abs=1e-3)


def test_hermitian_spectral_mapping():
    op = R.build_discrete_operator(M.vaidya_glued(0.25, 0.5, 0.25, r0=3.0), 0.5, None, grid())
    sw = np.sqrt(op.weight)
    H = sw[:, None] * op.matrix.toarray() / sw[None, :]
    assert np.abs(H - H.conj().T).max() < 1e-10
    e = np.linalg.eigvalsh(0.5 * (H + H.conj().T))
    assert dense_sigma_min(op, -1j) == pytest.approx(
        np.sqrt(e ** 2 + 1).min(), rel=1e-10)


def test_deficiency_check_pass():
    rep = SA.check_metric(M.minkowski(1), h=0.2, extent=6.4)
    assert rep.passed and min(rep.sigma_min) >= 0.999
    assert rep.hermiticity_defect < 1e-14
    rep = SA.check_metric(M.vaidya_glued(), h=0.2, extent=6.4,
                          a_term=R.VectorFieldTerm(0.5))
    assert rep.passed
    assert rep.hermiticity_defect < 1e-12


def test_broken_stencil_flagged():
    op = R.build_discrete_operator(M.minkowski(1), 0.0, None, grid(0.1, 6.4))
    bad = SA.broken_operator(op)
    rep = SA.deficiency_check(bad)
    assert not rep.passed and rep.verdict.startswith("FAIL")
    assert min(rep.sigma_min) < 0.999
    assert rep.hermiticity_defect > 1e-3
    assert SA.smallest_singular_value(bad, -1j) == pytest.approx(
        dense_sigma_min(SA.broken_operator(
            R.build_discrete_operator(M.minkowski(1), 0.0, None, grid())),
            -1j), abs=1.0)


def test_report_deterministic():
    a = SA.check_metric(M.vaidya_glued(0.25, 0.5, 0.25, r0=3.0), h=0.2, extent=4.0)
    b = SA.check_metric(M.vaidya_glued(0.25, 0.5, 0.25, r0=3.0), h=0.2, extent=4.0)
    ja = json.dumps(a.as_dict(), sort_keys=True)
    assert ja == json.dumps(b.as_dict(), sort_keys=True)
    assert json.loads(ja)["verdict"] == "PASS"
