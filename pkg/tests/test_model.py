import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import grid, random_model
from wvcal.errors import DomainError, ScaleError
from wvcal.model import (
    PROCESSES,
    CompositeModel,
    Convention,
    ScaleGrid,
    design_matrix,
    h_inverse,
    h_map,
    model_wv,
    wv_jacobian,
)

BI_A = 2 * math.log(2) / math.pi


def _rational_det(rows):
    """Exact determinant by fraction-valued Gaussian elimination."""
    m = [list(r) for r in rows]
    n = len(m)
    det = Fraction(1)
    for i in range(n):
        piv = next(r for r in range(i, n) if m[r][i] != 0)
        if piv != i:
            m[i], m[piv] = m[piv], m[i]
            det = -det
        det *= m[i][i]
        for r in range(i + 1, n):
            f = m[r][i] / m[i][i]
            m[r] = [a - f * b for a, b in zip(m[r], m[i])]
    return det


def _rational_rows(first_qn=None):
    # the BI column is the constant a; factor it out as a column of ones
    rows = []
    for j in range(1, 6):
        qn = Fraction(3, 4**j) if (j > 1 or first_qn is None) else first_qn
        rows.append([qn, Fraction(1, 2**j), Fraction(1), Fraction(2**j, 3), Fraction(2 ** (2 * j - 1))])
    return rows


DET_RATIONAL = _rational_det(_rational_rows())
DET_EXACT = float(DET_RATIONAL) * BI_A


@pytest.mark.parametrize(
    "params, level, expected",
    [
        ({"WN": 1.0}, 1, 0.5),
        ({"QN": 1.0}, 2, 0.1875),
        ({"RW": 3.0}, 3, 8.0),
        ({"DR": 0.1}, 1, 0.02),
        ({"BI": 1.0}, 4, 2 * math.log(2) / math.pi),
    ],
)
def test_pure_process_values(params, level, expected):
    g = ScaleGrid((level,), 2**12)
    assert model_wv(CompositeModel(params), "av", g)[0] == pytest.approx(expected, rel=1e-15)


def test_nonpositive_parameters_rejected():
    with pytest.raises(DomainError):
        CompositeModel({"WN": 0.0})
    with pytest.raises(DomainError):
        CompositeModel({"RW": -1.0})
    with pytest.raises(DomainError):
        CompositeModel({})
    with pytest.raises(DomainError):
        CompositeModel({"WN": float("nan")})


def test_unknown_process_rejected():
    with pytest.raises(DomainError):
        CompositeModel.from_dict({"processes": {"XX": {"v": 1.0}}})


def test_design_matrix_first_rows():
    X = design_matrix(PROCESSES, "av", grid(5))
    assert X[0] == pytest.approx([0.75, 0.5, BI_A, 2 / 3, 2.0], rel=1e-15)
    assert X[1] == pytest.approx([3 / 16, 0.25, BI_A, 4 / 3, 8.0], rel=1e-15)


def test_determinant_oracle():
    assert DET_RATIONAL == Fraction(19845, 2048)
    X = design_matrix(PROCESSES, "av", grid(5))
    assert np.linalg.det(X) == pytest.approx(DET_EXACT, rel=1e-12)
    assert DET_EXACT == pytest.approx(19845 * math.log(2) / (1024 * math.pi), rel=1e-15)


def test_constant_84357_needs_a_3_over_2_corner():
    # 84357 ln2 / (1024 pi) is the determinant when the (1,1) entry reads 3/2;
    # the QN term 3 Q^2 / 4^j puts 3/4 there
    assert _rational_det(_rational_rows(Fraction(3, 2))) == Fraction(84357, 2048)


def test_determinant_scales_with_c_to_the_fifth():
    d1 = np.linalg.det(design_matrix(PROCESSES, "av", grid(5)))
    d2 = np.linalg.det(design_matrix(PROCESSES, "wv", grid(5)))
    assert d2 == pytest.approx(d1 / 32, rel=1e-12)


def test_linear_form_matches_model(rng):
    for active in [PROCESSES, ("WN", "RW"), ("QN", "WN", "RW", "DR"), ("BI",)]:
        m = random_model(rng, active)
        g = grid(10)
        assert model_wv(m, "av", g) == pytest.approx(design_matrix(active, "av", g) @ h_map(m), rel=1e-14)


def test_haar_is_half_allan(rng):
    m = random_model(rng, PROCESSES)
    g = grid(8)
    assert np.array_equal(model_wv(m, "wv", g), model_wv(m, "av", g) / 2)


def test_h_map_and_inverse():
    m = CompositeModel({"WN": 2.0, "DR": 3.0})
    assert h_map(m) == pytest.approx([2.0, 9.0])
    assert h_inverse([4.0], ["WN"]).params == {"WN": 4.0}
    back = h_inverse(h_map(m), m.active)
    assert back.params == m.params
    with pytest.raises(DomainError):
        h_inverse([-1.0], ["DR"])


def test_roundtrip_exact_for_random_models(rng):
    for _ in range(20):
        m = random_model(rng, ("QN", "WN", "RW"))
        assert h_inverse(h_map(m), m.active) == m


def test_jacobian_linear_component():
    g = grid(6)
    A = wv_jacobian(CompositeModel({"WN": 2.5}), "av", g)
    assert np.array_equal(A[:, 0], design_matrix(["WN"], "av", g)[:, 0])


def test_jacobian_drift_entry():
    A = wv_jacobian(CompositeModel({"DR": 2.0}), "av", ScaleGrid((1,), 64))
    assert A[0, 0] == pytest.approx(8.0)


def _fd_jacobian(m, conv, g, rel=1e-6):
    # nu is additive over processes, so each column is differenced on its own
    # term; differencing the full sum would bury small terms in round-off
    cols = []
    for k, v in m.params.items():
        h = rel * v
        fu = model_wv(CompositeModel({k: v + h}), conv, g)
        fd = model_wv(CompositeModel({k: v - h}), conv, g)
        cols.append((fu - fd) / (2 * h))
    return np.column_stack(cols)


def test_jacobian_matches_finite_differences(rng):
    g = grid(10)
    for _ in range(20):
        m = random_model(rng, PROCESSES)
        A = wv_jacobian(m, "av", g)
        assert A == pytest.approx(_fd_jacobian(m, "av", g), rel=1e-6)
        X = design_matrix(PROCESSES, "av", g)
        factor = np.array([1, 1, 2 * m["BI"], 1, 2 * m["DR"]])
        assert A == pytest.approx(X * factor, rel=1e-14)


def test_injectivity_on_five_scales(rng):
    X = design_matrix(PROCESSES, "av", grid(5))
    for _ in range(10):
        a, b = random_model(rng, PROCESSES), random_model(rng, PROCESSES)
        diff = model_wv(a, "av", grid(5)) - model_wv(b, "av", grid(5))
        assert np.linalg.solve(X, diff) == pytest.approx(h_map(a) - h_map(b), rel=1e-8, abs=1e-14)


def test_monotone_in_each_parameter(rng):
    g = grid(8)
    m = random_model(rng, PROCESSES)
    base = model_wv(m, "av", g)
    for k in PROCESSES:
        bumped = dict(m.params)
        bumped[k] *= 1.01
        assert np.all(model_wv(CompositeModel(bumped), "av", g) > base)


def test_scale_grid_counts_and_errors():
    g = ScaleGrid((1, 2, 3), 100)
    assert list(g.coeff_counts) == [97, 93, 85]
    assert list(g.half_windows) == [2, 4, 8]
    with pytest.raises(ScaleError, match="level 3"):
        ScaleGrid((1, 2, 3), 10)
    with pytest.raises(ScaleError):
        ScaleGrid((2, 1), 100)
    assert ScaleGrid.default(2**10).levels[-1] == 8  # N_8 = 513 >= 16, N_9 = 1 < 16


def test_convention_parse():
    assert Convention.parse("allan") is Convention.AV
    assert Convention.parse("haar").c == 0.5
    with pytest.raises(DomainError):
        Convention.parse("xyz")
