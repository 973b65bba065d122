import dataclasses

import numpy as np
import pytest

from jouleheat.mms import AuditError, derive_residual, example1_case, example1_literal_gN, residual_audit, zero_case


def test_example1_source_at_center():
    case = example1_case()
    assert case.f(np.array([[0.5, 0.5, 0.5]]), 0.0)[0] == pytest.approx(3 / 8, abs=1e-15)


def test_example1_audit_passes():
    assert residual_audit(example1_case(), samples=100) <= 1e-8


def test_initial_value_matches_u():
    case = example1_case()
    x = np.random.default_rng(2).random((20, 3))
    assert np.abs(case.u(x, 0.0) - case.u0(x)).max() <= 1e-14


def test_residual_at_quarter_point():
    par, ell = derive_residual(example1_case(), [0.25, 0.25, 0.25], 0.05)
    assert abs(par[0]) <= 1e-8 and abs(ell[0]) <= 1e-8


def test_zero_case():
    par, ell = derive_residual(zero_case(), [0.3, 0.4, 0.5], 0.01)
    assert par[0] == 0 and ell[0] == 0


def test_wrong_source_detected():
    case = example1_case()
    wrong = dataclasses.replace(case, f=lambda x, t: case.f(x, t) + 1.0)
    par, _ = derive_residual(wrong, [0.3, 0.6, 0.2], 0.02)
    assert par[0] == pytest.approx(-1.0, abs=1e-8)
    with pytest.raises(AuditError):
        residual_audit(wrong)


def test_wrong_derivative_detected_by_finite_differences():
    case = example1_case()
    # consistent residual but a mistyped gradient
    wrong = dataclasses.replace(case, grad_u=lambda x, t: 2 * case.grad_u(x, t))
    with pytest.raises(AuditError):
        residual_audit(wrong)


def test_outside_domain_rejected():
    with pytest.raises(ValueError):
        derive_residual(example1_case(), [1.5, 0.5, 0.5], 0.0)


def test_neumann_data():
    case = example1_case()
    x = np.array([[0.3, 0.7, 0.0]])
    assert case.g_N(x, 0.0, [0, 0, -1])[0] == 0.0
    assert example1_literal_gN(x)[0] == pytest.approx(0.4)
