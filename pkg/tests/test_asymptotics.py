import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kkno.asymptotics import (ConvergenceTable, bound_check, convergence_table, default_constant,
                              fit_rate, korovkin, korovkin_monomials, modulus, sampled_modulus,
                              voronovskaya)
from kkno.kernels import make_cell_uniform, make_drifted, make_gaussian
from kkno.numerics import Domain
from kkno.numerics import test_function as lookup

cell1 = make_cell_uniform(1)
gauss1 = make_gaussian([[1.0]])


def brute_modulus_1d(f, delta, M=4096):
    """Independent oracle: all ordered pairs on an M-point closed grid."""
    x = np.linspace(0, 1, M)
    v = f(x[:, None])
    best = 0.0
    for k in range(1, int(math.floor(delta * (M - 1) + 1e-9)) + 1):
        best = max(best, float(np.max(np.abs(v[k:] - v[:-k]))))
    return best


@pytest.mark.parametrize("name,delta,want", [("coord(1)", 0.1, 0.1), ("absdev", 0.1, 0.1),
                                             ("sin2pi", 0.1, 2 * math.sin(0.1 * math.pi)),
                                             ("quad(1,1)", 0.25, 0.4375), ("const1", 0.3, 0.0)])
def test_modulus_examples(name, delta, want):
    f = lookup(name, 1)
    assert abs(modulus(f, delta) - want) <= 1e-12
    assert abs(brute_modulus_1d(f.value, delta) - want) <= 0.02 * max(want, 1e-12)


def test_modulus_sin_matches_dense_oracle():
    assert abs(modulus(lookup("sin2pi", 1), 0.1) - 0.6180340) <= 0.02 * 0.6180340


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 0.9), st.sampled_from(["sin2pi", "absdev", "expsum", "coord(1)"]))
def test_modulus_formula_agrees_with_sampling(delta, name):
    f = lookup(name, 1)
    exact = modulus(f, delta)
    sampled = sampled_modulus(f, delta, Domain.unit(1), max(2048, math.ceil(100 / delta) + 1))
    assert sampled <= exact + 1e-12
    assert sampled >= 0.98 * exact


def test_modulus_2d_and_validation():
    prod = lookup("sin2pi", 2)
    w = modulus(prod, 0.1)
    assert 0.5 < w <= 2 * 2 * math.sin(0.1 * math.pi)
    with pytest.raises(ValueError):
        modulus(lookup("absdev", 1), 0.0)
    with pytest.raises(ValueError):
        modulus(lookup("absdev", 1), 0.1, M=32)


def test_convergence_table_examples():
    ns = [4, 8, 16]
    assert np.all(convergence_table(cell1, lookup("const1", 1), ns).errors <= 1e-10)
    assert np.all(convergence_table(cell1, lookup("coord(1)", 1), ns).errors <= 1e-10)
    quad = convergence_table(cell1, lookup("quad(1,1)", 1), ns)
    assert np.allclose(quad.errors, [1 / (12 * n * n) for n in ns], atol=1e-12)
    assert abs(quad.errors[0] - 0.0052083) < 1e-7


def test_convergence_table_sin_matches_multiplier():
    ns = [8, 16, 32, 64]
    table = convergence_table(cell1, lookup("sin2pi", 1), ns)
    rho = np.array([math.sin(math.pi / n) / (math.pi / n) for n in ns])
    assert np.allclose(table.errors, 1 - rho, atol=1e-12)


def test_table_validation():
    with pytest.raises(ValueError):
        convergence_table(cell1, lookup("sin2pi", 1), [8, 16])
    with pytest.raises(ValueError):
        ConvergenceTable("k", "f", ((8, 0.1), (8, 0.05), (16, 0.01)))
    with pytest.raises(ValueError):
        ConvergenceTable("k", "f", ((8, -0.1),))


@pytest.mark.parametrize("kernel,d,want", [(make_cell_uniform(1), 1, 1.25), (make_cell_uniform(2), 2, 1.5),
                                           (make_gaussian(np.eye(2)), 2, 3.0)])
def test_default_constant(kernel, d, want):
    assert default_constant(kernel, d) == pytest.approx(want)


def test_default_constant_rejects_drifted():
    with pytest.raises(ValueError, match="pass C"):
        default_constant(make_drifted(cell1, [0.5]))


def test_bound_check_examples():
    const = bound_check(convergence_table(cell1, lookup("const1", 1), [4, 8, 16]), lookup("const1", 1), 2.0)
    assert const.passed and all(b == 0.0 for _, _, b, _ in const.rows)
    absdev = lookup("absdev", 1)
    rep = bound_check(convergence_table(cell1, absdev, [8, 16, 32]), absdev, 1.25)
    n, err, bound, margin = rep.rows[0]
    assert abs(bound - 0.15625) <= 1e-12 and abs(err - 1 / 32) <= 1e-4 and rep.passed
    zero = bound_check(convergence_table(cell1, absdev, [8, 16, 32]), absdev, 0.0)
    assert not zero.passed and all(m < 0 for *_, m in zero.rows)
    with pytest.raises(ValueError):
        bound_check(convergence_table(cell1, absdev, [8, 16, 32]), absdev, -1.0)


def test_voronovskaya_cell_and_gaussian():
    f = lookup("sin2pi", 1)
    cell = voronovskaya(cell1, f, [8, 16, 32, 64], 2)
    assert cell.residuals[-1] <= 0.05 * math.pi ** 2 / 6
    assert np.all(np.diff(cell.residuals) < 0)
    # exact multiplier: n^2 (rho_n - 1) + pi^2/6
    want = [abs(n * n * (math.sin(math.pi / n) / (math.pi / n) - 1) + math.pi ** 2 / 6) for n in (8, 16, 32, 64)]
    assert np.allclose(cell.residuals, want, rtol=1e-6)
    gauss = voronovskaya(gauss1, f, [8, 16, 32, 64], 2)
    assert np.all(np.diff(gauss.residuals) < 0)
    lin = voronovskaya(cell1, lookup("coord(1)", 1), [4, 8, 16], 2)
    assert np.all(lin.residuals <= 1e-8)


def test_voronovskaya_first_order_drift():
    k = make_drifted(cell1, [0.5], s=0)
    rep = voronovskaya(k, lookup("sin2pi", 1), [8, 16, 32, 64], 1)
    assert np.all(np.diff(rep.residuals) <= 1e-10)
    # next order is 1/2 (B + c^2) f'' / n
    lead = 0.5 * (1 / 12 + 0.25) * 4 * math.pi ** 2
    assert abs(64 * rep.residuals[-1] - lead) <= 0.05 * lead


def test_voronovskaya_rejects_inconsistent_normalization():
    f = lookup("sin2pi", 1)
    with pytest.raises(ValueError):
        voronovskaya(cell1, f, [8, 16], 1)
    with pytest.raises(ValueError):
        voronovskaya(make_drifted(cell1, [0.5], s=0), f, [8, 16], 2)
    with pytest.raises(ValueError, match="Hessian"):
        voronovskaya(cell1, lookup("absdev", 1), [8, 16], 2)
    with pytest.raises(ValueError):
        voronovskaya(cell1, f, [8, 16], 3)


def test_korovkin_examples():
    rep = korovkin(cell1, [5, 10, 20])
    assert np.all(rep.errors("e0") <= 1e-10)
    assert np.all(rep.errors("e1") <= 1e-10)
    assert np.allclose(rep.errors("e11"), [1 / (12 * n * n) for n in (5, 10, 20)], atol=1e-8)
    assert abs(rep.errors("e11")[1] - 8.333e-4) < 1e-7
    assert [m for m, _ in korovkin_monomials(2)] == ["e0", "e1", "e2", "e11", "e12", "e22"]
    with pytest.raises(ValueError):
        korovkin(make_cell_uniform(4), [4])


@pytest.mark.parametrize("kernel", [cell1, gauss1], ids=lambda k: k.kernel_id)
@pytest.mark.parametrize("name,d2max", [("sin2pi", 4 * math.pi ** 2), ("expsum", math.e),
                                        ("quad(1,1)", 2.0)])
def test_korovkin_controls_smooth_errors(kernel, name, d2max):
    n_list = [8, 16, 32]
    rep = korovkin(kernel, n_list)
    table = convergence_table(kernel, lookup(name, 1), n_list)
    for n, err in table.rows:
        # zero drift: |L f - f| <= 1/2 max|f''| * (error on e11)
        assert err <= 0.5 * d2max * rep.max_error(n) * (1 + 1e-9) + 1e-12


def test_fit_rate_power_laws():
    exact = ConvergenceTable("k", "f", ((4, 0.0625), (8, 0.015625), (16, 0.00390625)))
    fit = fit_rate(exact)
    assert abs(fit.alpha - 2.0) < 1e-12 and abs(fit.r2 - 1.0) < 1e-12
    sin = fit_rate(convergence_table(cell1, lookup("sin2pi", 1), [8, 16, 32, 64]))
    assert abs(sin.alpha - 2.0) <= 0.1
    absdev = fit_rate(convergence_table(cell1, lookup("absdev", 1), [8, 16, 32, 64]))
    assert abs(absdev.alpha - 1.0) <= 0.15


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 4.0), st.floats(0.01, 100.0))
def test_fit_rate_recovers_exponent(alpha, scale):
    rows = tuple((n, scale * n ** -alpha) for n in (4, 8, 16, 32))
    assert fit_rate(ConvergenceTable("k", "f", rows)).alpha == pytest.approx(alpha, rel=1e-12)


def test_fit_rate_rejects_exact_reproduction():
    with pytest.raises(ValueError, match="rate undefined"):
        fit_rate(convergence_table(cell1, lookup("coord(1)", 1), [4, 8, 16]))
