import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from randgas.characteristics import (
    CharacteristicProblem, closed_form, inward_window, traverse_full, traverse_full_rk4, traverse_inward,
)


def head_on(lam, **kw):
    return CharacteristicProblem(x0=(0, 0, 0), y0=(1.3, 0, 0), v=(0.5, 0, 0), w=(-0.5, 0, 0), lam=lam, **kw)


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_rk4_matches_closed_form(lam):
    prof = traverse_inward(head_on(lam), n_points=1000)
    assert prof.max_rel_err < 1e-8
    assert np.all(np.diff(prof.F) <= 1e-15)
    assert prof.F_rk4[-1] == pytest.approx(math.exp(-lam), rel=1e-8)


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_traverse_full(lam):
    prob = head_on(lam, F0=2.0, F0_prime=0.7)
    expect = math.exp(-lam) * 2.0 + (1 - math.exp(-lam)) * 0.7
    assert traverse_full(prob) == pytest.approx(expect, rel=1e-15)
    assert abs(traverse_full_rk4(prob) - expect) < 1e-8 * expect


def test_lambda_zero_is_constant():
    prof = traverse_inward(head_on(0.0, F0=3.0))
    assert np.all(prof.F == 3.0)
    assert traverse_full(head_on(0.0, F0=3.0, F0_prime=1.0)) == 3.0


@given(st.floats(0.0, 0.8), st.floats(0.05, 5.0))
def test_oblique_approach_survival(b, lam):
    # impact parameter below sigma*(1-alpha): the line crosses the whole zone
    prob = CharacteristicProblem(x0=(0, 0, 0), y0=(2.0, b, 0), v=(1.0, 0, 0), w=(0, 0, 0), lam=lam)
    prof = traverse_inward(prob, n_points=400)
    assert prof.F[-1] == pytest.approx(math.exp(-lam), rel=1e-12)
    assert prof.max_rel_err < 1e-6


def test_closed_form_start_value():
    prob = head_on(2.0, F0=1.5)
    assert closed_form(prob, 0.0) == pytest.approx(1.5)


def test_invalid_problems():
    with pytest.raises(ValueError):
        CharacteristicProblem(x0=(0, 0, 0), y0=(1.05, 0, 0), v=(1, 0, 0), w=(0, 0, 0))
    with pytest.raises(ValueError):
        CharacteristicProblem(x0=(0, 0, 0), y0=(2, 0, 0), v=(-1, 0, 0), w=(0, 0, 0))
    with pytest.raises(ValueError):
        CharacteristicProblem(x0=(0, 0, 0), y0=(2, 0, 0), v=(1, 0, 0), w=(0, 0, 0), F0=0.0)
    grazing = CharacteristicProblem(x0=(0, 0, 0), y0=(2, 0.95, 0), v=(1, 0, 0), w=(0, 0, 0))
    with pytest.raises(ValueError):
        inward_window(grazing)
