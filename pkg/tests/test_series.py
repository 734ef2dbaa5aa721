import numpy as np
import pytest

from ppalab.series import FormalSeries, Orders


@pytest.fixture
def o():
    return Orders(2, 2)


def test_keep_rule(o):
    assert o.keeps(-2, 2) and o.keeps(4, 0) and o.keeps(2, 2)
    assert not o.keeps(-3, 2) and not o.keeps(3, 2) and not o.keeps(0, 3)


def test_product_and_truncation(o):
    h = FormalSeries.monomial(o, 1, 0)
    x = (1 + h) * (1 - h)
    assert x[0, 0] == 1 and x[2, 0] == -1 and x[1, 0] == 0
    # ħ³ at λ² exceeds the grade budget and is dropped
    assert (FormalSeries.monomial(o, 1, 2) * FormalSeries.monomial(o, 2, 0))[3, 2] == 0


def test_negative_hbar_cancels_against_positive(o):
    s = FormalSeries.monomial(o, -1, 1, 2.0) * FormalSeries.monomial(o, 2, 0, 3.0)
    assert s[1, 1] == 6.0


def test_inverse(o, rng):
    s = FormalSeries(o)
    for a, n in o.layers():
        s.coeffs[a + o.l_max, n] = rng.standard_normal()
    s.coeffs[o.l_max, 0] = 2.0
    prod = s * s.inverse()
    assert prod.max_abs_diff(FormalSeries.one(o)) < 1e-13
    with pytest.raises(ZeroDivisionError):
        FormalSeries.monomial(o, 1, 0).inverse()


def test_dict_round_trip(o):
    s = FormalSeries.monomial(o, -1, 1, 1 + 2j) + FormalSeries.monomial(o, 2, 0, 3.0)
    t = FormalSeries.from_dict(o, s.to_dict())
    assert np.array_equal(s.coeffs, t.coeffs)


def test_shift_and_classical(o):
    s = FormalSeries.monomial(o, 0, 1, 5.0).shift(-1, 1)
    assert s[-1, 2] == 5.0
    assert np.allclose(FormalSeries.monomial(o, 0, 1, 5.0).classical(), [0, 5, 0])
