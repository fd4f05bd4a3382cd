"""Finite-difference checker: catches wrong gradients, accepts right ones."""

import itertools
from array import array

import pytest

from factorweights.diffcore import (
    Param, Tensor, finite_diff_check, is_grad_enabled, mul, scale, sum_all)


def test_quadratic_passes():
    # d/dp sum(p*p) = 2p, analytically clean for the checker
    p = Param("p", (3,), array("d", [0.5, -1.25, 2.0]))
    report = finite_diff_check(lambda ps: sum_all(mul(p, p)), [p])
    assert report.ok
    assert report.max_rel_err < 1e-8
    assert set(report.per_param) == {"p"}


def test_wrong_gradient_detected():
    # an op whose backward deliberately reports half the true gradient
    p = Param("p", (2,), array("d", [0.7, -0.3]))

    def broken_square(t):
        out = Tensor(t.shape, array("d", [v * v for v in t.data]))
        if is_grad_enabled():
            def bwd(g):
                for i, gv in enumerate(g):
                    t._g[i] += gv * t.data[i]  # should be 2 * t.data[i]
            out._parents = (t,)
            out._bwd = bwd
        return out

    report = finite_diff_check(lambda ps: sum_all(broken_square(p)), [p])
    assert not report.ok
    assert report.max_rel_err > 0.1


def test_nondeterministic_f_rejected():
    p = Param("p", (1,), array("d", [1.0]))
    counter = itertools.count()

    def f(ps):
        return scale(sum_all(p), 1.0 + next(counter) * 0.5)

    with pytest.raises(ValueError, match="not deterministic"):
        finite_diff_check(f, [p])


def test_bad_step_size_rejected():
    p = Param("p", (1,), array("d", [1.0]))
    with pytest.raises(ValueError, match="positive"):
        finite_diff_check(lambda ps: sum_all(p), [p], h=0.0)


def test_report_covers_every_param():
    a = Param("a", (2,), array("d", [1.0, 2.0]))
    b = Param("b", (2,), array("d", [3.0, 4.0]))
    report = finite_diff_check(lambda ps: sum_all(mul(a, b)), [a, b])
    assert report.ok
    assert set(report.per_param) == {"a", "b"}
    text = str(report)
    assert "a" in text and "b" in text and "max rel err" in text


def test_grads_left_zeroed_and_values_restored():
    data = [0.25, -0.75, 1.5]
    p = Param("p", (3,), array("d", data))
    finite_diff_check(lambda ps: sum_all(mul(p, p)), [p])
    assert list(p.data) == data
    assert list(p.grad) == [0.0, 0.0, 0.0]
