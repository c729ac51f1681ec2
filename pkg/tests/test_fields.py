import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from quenchlab.config import Branch, FieldKind
from quenchlab.core.fields import (
    as_matrix,
    as_state,
    branch_of,
    eval_field,
    eval_jacobian,
    in_seed_region,
    singular_distance,
    spectral_norm,
)
from quenchlab.errors import InvalidParameter, SingularInput


coords = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False, allow_infinity=False)
entries = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("kind, y, expected", [
    (FieldKind.F1, [0.5, 2.0], [4.0, 2.5]),
    (FieldKind.F2, [0.6, 0.0], [1.5, 0.0]),
    (FieldKind.F2, [0.0, 0.5], [0.0, 1.0]),
    (FieldKind.F3, [0.5, 0.75], [4.0, 2.0]),
])
def test_field_values(kind, y, expected):
    np.testing.assert_allclose(eval_field(kind, np.array(y)), expected, rtol=1e-15)


@pytest.mark.parametrize("kind, y", [
    (FieldKind.F1, [1.0, 3.0]),
    (FieldKind.F2, [0.6, 0.8]),
    (FieldKind.F3, [0.2, 1.0]),
])
def test_singular_set_is_rejected(kind, y):
    with pytest.raises(SingularInput):
        eval_field(kind, np.array(y))
    with pytest.raises(SingularInput):
        eval_jacobian(kind, np.array(y))


@pytest.mark.parametrize("kind", list(FieldKind))
@given(y1=coords, y2=coords)
@settings(max_examples=200, deadline=None)
def test_jacobian_matches_central_differences(kind, y1, y2):
    y = np.array([y1, y2])
    assume(singular_distance(kind, y) > 0.1)
    h = 1e-6
    numeric = np.column_stack([
        (eval_field(kind, y + h * e) - eval_field(kind, y - h * e)) / (2 * h)
        for e in np.eye(2)
    ])
    np.testing.assert_allclose(eval_jacobian(kind, y), numeric, rtol=1e-5, atol=1e-5)


@given(y1=coords, y2=coords, angle=st.floats(min_value=0.0, max_value=2 * math.pi))
@settings(max_examples=200, deadline=None)
def test_f2_is_rotation_equivariant(y1, y2, angle):
    y = np.array([y1, y2])
    assume(singular_distance(FieldKind.F2, y) > 1e-3)
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    np.testing.assert_allclose(
        eval_field(FieldKind.F2, rot @ y), rot @ eval_field(FieldKind.F2, y), rtol=1e-9, atol=1e-9
    )


@given(y1=coords, y2=coords)
@settings(max_examples=200, deadline=None)
def test_f3_swap_symmetry(y1, y2):
    assume(singular_distance(FieldKind.F3, np.array([y1, y2])) > 1e-6)
    direct = eval_field(FieldKind.F3, np.array([y1, y2]))
    swapped = eval_field(FieldKind.F3, np.array([y2, y1]))
    np.testing.assert_array_equal(swapped, direct[::-1])


def test_spectral_norm_of_a_nearly_singular_matrix():
    m = np.array([[0.0, 4.0], [4.0, 6e-8]])
    assert spectral_norm(m) == pytest.approx(4.0 + 3e-8, rel=1e-12)
    assert spectral_norm(np.diag([3.0, -4.0])) == pytest.approx(4.0)


@given(a=entries, b=entries, c=entries, d=entries, angle=st.floats(min_value=0.0, max_value=2 * math.pi))
@settings(max_examples=300, deadline=None)
def test_spectral_norm_bounds_the_image_of_unit_vectors(a, b, c, d, angle):
    m = np.array([[a, b], [c, d]])
    u = np.array([math.cos(angle), math.sin(angle)])
    assert np.linalg.norm(m @ u) <= spectral_norm(m) * (1.0 + 1e-12) + 1e-12


def test_branches():
    assert branch_of(FieldKind.F1, np.array([0.9, 0.0])) is Branch.BELOW
    assert branch_of(FieldKind.F1, np.array([1.1, 0.0])) is Branch.ABOVE
    assert branch_of(FieldKind.F2, np.array([0.0, 1.2])) is Branch.ABOVE
    assert branch_of(FieldKind.F3, np.array([0.9, 0.8])) is Branch.BELOW
    assert branch_of(FieldKind.F3, np.array([0.9, 1.1])) is None


@pytest.mark.parametrize("kind, y0, k0, expected", [
    (FieldKind.F1, [0.9, 1.5], 1.0, Branch.BELOW),
    (FieldKind.F1, [0.9, 0.5], 1.0, None),
    (FieldKind.F1, [1.2, 2.5], 1.0, Branch.ABOVE),
    (FieldKind.F1, [1.6, 2.5], 1.0, None),
    (FieldKind.F2, [0.75, 0.0], 1.0, Branch.BELOW),
    (FieldKind.F2, [0.6, 0.0], 1.0, None),
    (FieldKind.F2, [0.0, 1.3], 1.0, Branch.ABOVE),
    (FieldKind.F3, [0.95, 0.95], 1.0, Branch.BELOW),
    (FieldKind.F3, [0.5, 0.95], 1.0, None),
    (FieldKind.F3, [1.05, 1.1], 1.0, Branch.ABOVE),
])
def test_seed_regions(kind, y0, k0, expected):
    assert in_seed_region(kind, np.array(y0), k0) is expected


def test_seed_region_needs_positive_k0():
    with pytest.raises(InvalidParameter):
        in_seed_region(FieldKind.F2, np.array([0.75, 0.0]), 0.0)


def test_coercion_rejects_bad_shapes():
    with pytest.raises(InvalidParameter):
        as_state([1.0, 2.0, 3.0])
    with pytest.raises(InvalidParameter):
        as_state([math.nan, 0.0])
    with pytest.raises(InvalidParameter):
        as_matrix([[1.0, 0.0]])
