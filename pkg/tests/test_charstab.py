import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hivhopf.charstab import (
    CharCoeffsE2,
    CharStabError,
    char_poly_e2,
    char_value,
    check_hypothesis_H,
    count_unstable_roots,
    critical_tau0,
    crossing_angle,
    crossing_delays,
    e2_coeffs,
    f_identity_sides,
    g2_value,
    jacobian_blocks,
    positive_real_roots,
    quintic_coeffs,
    root_velocity,
    tau_ladder,
    track_root,
    transversality,
)
from hivhopf.equilibria import equilibria
from hivhopf.scenarios import get

from conftest import interior_params


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def test_block_entries_at_interior_state(case1):
    p = case1
    e2 = equilibria(p).e2
    jac = jacobian_blocks(p, e2)
    total = jac.a0 + jac.a1 + jac.a2
    assert total[0, 0] == pytest.approx(-(p.beta1 * e2.v + p.beta2 * e2.y) - p.mu1)
    assert jac.a3[4, 4] == pytest.approx(p.c * e2.y * p.h / (p.h + e2.z) ** 2)


def test_blocks_at_infection_free_state():
    p = get("fig4").params
    jac = jacobian_blocks(p, equilibria(p).e0)
    assert jac.a0[4, 4] == -p.mu5
    assert np.all(jac.a3[4] == 0)


@given(interior_params(), st.integers(0, 2 ** 31))
def test_determinant_matches_closed_form(p, seed):
    rng = np.random.default_rng(seed)
    e2 = equilibria(p).e2
    jac = jacobian_blocks(p, e2)
    co = e2_coeffs(p, e2)
    for s in rng.uniform(-0.5, 0.5, 5) + 1j * rng.uniform(-2, 2, 5):
        assert _rel(char_value(jac, p.delays, s), char_poly_e2(co, s, p.tau3)) < 1e-8


@given(interior_params(), st.integers(0, 2 ** 31))
def test_conjugate_symmetry(p, seed):
    rng = np.random.default_rng(seed)
    jac = jacobian_blocks(p, equilibria(p).e2)
    s = complex(rng.normal(), rng.normal())
    assert _rel(char_value(jac, p.delays, s.conjugate()), char_value(jac, p.delays, s).conjugate()) < 1e-12


@given(interior_params(), st.integers(0, 2 ** 31))
def test_f_identity(p, seed):
    co = e2_coeffs(p)
    for w in np.random.default_rng(seed).uniform(0, 10, 50):
        lhs, F = f_identity_sides(co, w)
        I, T = co.i, co.t
        scale = ((I[0] * w ** 4) ** 2 + (I[2] * w ** 2) ** 2 + I[4] ** 2 + w ** 10
                 + (I[1] * w ** 3) ** 2 + (I[3] * w) ** 2 + (T[0] * w ** 4) ** 2
                 + (T[2] * w ** 2) ** 2 + T[4] ** 2 + (T[1] * w ** 3) ** 2 + (T[3] * w) ** 2)
        assert abs(lhs - F) <= 1e-8 * scale


def test_f_identity_rejects_leading_square_typo(case1):
    # with I1^2 in place of I2^2 the identity breaks; the derived form holds
    co = e2_coeffs(case1)
    I1, I2, I3, I4, I5 = co.i
    T1, T2, T3, T4, T5 = co.t
    bad = list(co.a_quintic)
    bad[1] = I1 ** 2 + 2 * I4 - 2 * I1 * I3 - T2 ** 2 + 2 * T1 * T3
    wrong = CharCoeffsE2(co.i, co.t, tuple(bad))
    lhs, F = f_identity_sides(co, 0.3)
    lhs2, F2 = f_identity_sides(wrong, 0.3)
    assert abs(lhs - F) < 1e-8 * abs(lhs) + 1e-20
    assert abs(lhs2 - F2) > 1e-6 * abs(lhs2)


def test_first_delayed_coefficient(case1):
    p = case1
    e2 = equilibria(p).e2
    assert e2_coeffs(p).t[0] == pytest.approx(-p.c * p.h * e2.y / (p.h + e2.z) ** 2, rel=1e-14)


def test_factored_form_without_tau3():
    s = get("fig5")
    p = s.params
    e2 = equilibria(p).e2
    jac = jacobian_blocks(p, e2)
    for z in (0.0, 0.3 + 0.1j, -0.02 + 1j):
        assert _rel(char_value(jac, p.delays, z), g2_value(p, e2, z)) < 1e-10
    assert g2_value(p, e2, 0.0) != 0


def test_infection_free_state_has_positive_real_root():
    p = get("fig4").params
    jac = jacobian_blocks(p, equilibria(p).e0)
    g = [char_value(jac, p.delays, s).real for s in (0.0, 50.0)]
    assert g[0] < 0 < g[1]


def test_closed_forms_need_instant_infection():
    with pytest.raises(CharStabError):
        e2_coeffs(get("fig5").params)


def test_hypothesis_holds_for_case1(case1):
    report = check_hypothesis_H(e2_coeffs(case1))
    assert report.ok
    assert len(report.items) == 7


def test_hypothesis_negative_sum_fails():
    co = CharCoeffsE2(i=(-2, 1, 1, 1, 1), t=(1, 0, 0, 0, 0), a_quintic=(0,) * 5)
    assert not check_hypothesis_H(co).items["I1+T1 > 0"][1]


def test_hypothesis_boundary_is_strict():
    co = CharCoeffsE2(i=(1,) * 5, t=(0,) * 5, a_quintic=(0,) * 5)
    assert not check_hypothesis_H(co).ok


def test_positive_roots_of_constructed_polynomial():
    poly = np.polymul(np.polymul([1, -1], [1, -2]), np.polymul([1, 3], [1, 0, 1]))
    assert positive_real_roots(poly) == pytest.approx([1.0, 2.0], rel=1e-12)
    assert positive_real_roots([1, 2, 3, 4]) == []
    with pytest.raises(ValueError):
        positive_real_roots([0, 1, 2])


def test_transversality_double_root():
    poly = np.polymul(np.polymul([1, -1], [1, -1]), [1, 0, 0, 1])  # (h-1)^2 (h^3+1)
    co = CharCoeffsE2(i=(0,) * 5, t=(0,) * 5, a_quintic=tuple(poly[1:]))
    assert transversality(co, 1.0) == 0
    simple = np.polymul([1, -1], [1, 0, 0, 0, 1])  # (h-1)(h^4+1)
    assert transversality(CharCoeffsE2((0,) * 5, (0,) * 5, tuple(simple[1:])), 1.0) == 1


def test_critical_delay_case1(case1):
    crit = critical_tau0(case1)
    assert crit.tau0 == pytest.approx(51.27386, rel=1e-6)
    assert crit.w0 == pytest.approx(0.0176608, rel=1e-5)
    assert crit.transversality_sign == 1
    jac = jacobian_blocks(case1, equilibria(case1).e2)
    val = char_value(jac, (0, 0, crit.tau0), 1j * crit.w0)
    scale = 1 + sum(abs(c) for c in (*e2_coeffs(case1).i, *e2_coeffs(case1).t))
    assert abs(val) < 1e-7 * scale


def test_ladder_spacing(case1):
    co = e2_coeffs(case1)
    w = critical_tau0(case1).w0
    ladder = tau_ladder(co, w, 5)
    assert np.allclose(np.diff(ladder), 2 * math.pi / w, rtol=1e-12)


@settings(max_examples=25)
@given(interior_params())
def test_ladder_roots_are_genuine(p):
    co = e2_coeffs(p)
    for h in positive_real_roots(co.f_poly):
        w = math.sqrt(h)
        theta = crossing_angle(co, w)  # raises unless cos^2 + sin^2 = 1
        tau = tau_ladder(co, w, 1)[0]
        assert tau == pytest.approx(theta / w)


def test_no_crossing_when_f_has_no_positive_root(monkeypatch):
    import hivhopf.charstab as cs
    p = get("case-1").params
    real = cs.e2_coeffs

    def fake(params, e2=None):
        co = real(params, e2)
        return CharCoeffsE2(co.i, co.t, (1.0, 1.0, 1.0, 1.0, 1.0))

    monkeypatch.setattr(cs, "e2_coeffs", fake)
    assert cs.critical_tau0(p) is None


def test_transversality_matches_root_continuation(case1):
    crit = critical_tau0(case1)
    jac = jacobian_blocks(case1, equilibria(case1).e2)
    for m, n, tau in crit.ladder:
        w = math.sqrt([c for c in crit.crossings][m - 1][0])
        up = track_root(jac, (0, 0, tau), 1j * w, tau + 0.1)
        dn = track_root(jac, (0, 0, tau), 1j * w, tau - 0.1)
        sign = crit.crossings[m - 1][2]
        assert np.sign(up.real - dn.real) == sign
        assert np.sign(root_velocity(jac, (0, 0, tau), 1j * w).real) == sign


def test_root_count_jumps_by_two(case1):
    crit = critical_tau0(case1)
    jac = jacobian_blocks(case1, equilibria(case1).e2)
    assert count_unstable_roots(jac, (0, 0, crit.tau0 - 1)) == 0
    assert count_unstable_roots(jac, (0, 0, crit.tau0 + 1)) == 2


def test_root_counts_at_infection_free_state():
    p = get("fig3").params
    assert count_unstable_roots(jacobian_blocks(p, equilibria(p).e0), p.delays) == 0
    p = get("fig4").params
    assert count_unstable_roots(jacobian_blocks(p, equilibria(p).e0), p.delays) >= 1


def test_general_crossings_agree_with_closed_form(case1):
    jac = jacobian_blocks(case1, equilibria(case1).e2)
    w, tau = min(crossing_delays(jac, 0.0, 0.0), key=lambda c: c[1])
    crit = critical_tau0(case1)
    assert tau == pytest.approx(crit.tau0, rel=1e-8)
    assert w == pytest.approx(crit.w0, rel=1e-8)


def test_quintic_coefficients_from_squares():
    rng = np.random.default_rng(3)
    i, t = rng.normal(size=5), rng.normal(size=5)
    a = quintic_coeffs(i, t)
    co = CharCoeffsE2(tuple(i), tuple(t), a)
    for w in (0.2, 1.3, 2.7):
        lhs, F = f_identity_sides(co, w)
        assert lhs == pytest.approx(F, rel=1e-10)
