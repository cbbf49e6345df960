import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from octscatter.fields import (
    BeamParams,
    LossWeights,
    MapGradients,
    ParameterMaps,
    ScalarField,
    check_same_shape,
    field_new,
    maps_clamp,
)


def test_field_new_zeros():
    f = field_new(2, 2, 1e-6, 1e-6, 0.0)
    assert f.shape == (2, 2)
    assert np.all(f.data == 0.0)


def test_field_new_single_pixel():
    f = field_new(1, 1, 1e-6, 1e-6, 1.38)
    assert f.width == 1 and f.height == 1
    assert f.data[0, 0] == 1.38


@pytest.mark.parametrize("args", [
    (0, 2, 1e-6, 1e-6, 0.0),
    (2, 0, 1e-6, 1e-6, 0.0),
    (2, 2, 0.0, 1e-6, 0.0),
    (2, 2, 1e-6, -1e-6, 0.0),
    (2, 2, 1e-6, 1e-6, np.nan),
    (2, 2, 1e-6, 1e-6, np.inf),
])
def test_field_new_rejects_bad_arguments(args):
    with pytest.raises(ValueError):
        field_new(*args)


def test_scalar_field_is_immutable():
    f = field_new(3, 2, 1e-6, 1e-6, 1.0)
    with pytest.raises(ValueError):
        f.data[0, 0] = 2.0
    with pytest.raises(dataclasses.FrozenInstanceError):
        f.pitch_x = 2.0


def test_scalar_field_copies_input():
    a = np.ones((2, 2))
    f = ScalarField(a, 1e-6, 1e-6)
    a[0, 0] = 5.0
    assert f.data[0, 0] == 1.0


def test_scalar_field_rejects_non_finite():
    with pytest.raises(ValueError, match="finite"):
        ScalarField(np.array([[1.0, np.nan]]), 1e-6, 1e-6)


def test_check_same_shape():
    a = field_new(2, 3, 1e-6, 1e-6)
    check_same_shape(a, field_new(2, 3, 1e-6, 1e-6))
    with pytest.raises(ValueError):
        check_same_shape(a, field_new(3, 2, 1e-6, 1e-6))


def test_parameter_maps_validate_ranges():
    with pytest.raises(ValueError):
        ParameterMaps.constant(2, 2, 1e-6, 1e-6, n=0.9, mu_s=1.0, g=0.5)
    with pytest.raises(ValueError):
        ParameterMaps.constant(2, 2, 1e-6, 1e-6, n=1.3, mu_s=-1.0, g=0.5)
    with pytest.raises(ValueError):
        ParameterMaps.constant(2, 2, 1e-6, 1e-6, n=1.3, mu_s=1.0, g=1.0)


def test_parameter_maps_need_matching_grids():
    n = field_new(2, 2, 1e-6, 1e-6, 1.3)
    with pytest.raises(ValueError):
        ParameterMaps(n, field_new(3, 2, 1e-6, 1e-6, 1.0), field_new(2, 2, 1e-6, 1e-6, 0.9))
    with pytest.raises(ValueError):
        ParameterMaps(n, field_new(2, 2, 2e-6, 1e-6, 1.0), field_new(2, 2, 1e-6, 1e-6, 0.9))


def test_clamp_keeps_in_range_values():
    maps = ParameterMaps.constant(3, 2, 1e-6, 1e-6, n=1.38, mu_s=60e3, g=0.9)
    out = maps_clamp(maps)
    for a, b in zip(out.channels(), maps.channels()):
        assert np.array_equal(a.data, b.data)


def test_clamp_upper_g_and_negative_mu_s():
    n = np.full((2, 2), 1.38)
    mus = np.full((2, 2), 1e3)
    g = np.full((2, 2), 0.9)
    g[0, 1] = 1.2
    mus[1, 0] = -5.0
    out = maps_clamp(n, mus, g, 1e-6, 1e-6)
    assert out.g.data[0, 1] == 0.999
    assert out.mu_s.data[1, 0] == 0.0
    assert out.g.data[0, 0] == 0.9 and out.mu_s.data[0, 0] == 1e3


def test_clamp_shape_mismatch():
    with pytest.raises(ValueError):
        maps_clamp(np.ones((2, 2)), np.ones((2, 3)), np.ones((2, 2)), 1e-6, 1e-6)


@given(
    arrays(np.float64, (3, 4), elements=st.floats(-5, 5)),
    arrays(np.float64, (3, 4), elements=st.floats(-1e4, 1e5)),
    arrays(np.float64, (3, 4), elements=st.floats(-2, 2)),
)
def test_clamp_idempotent_and_valid(n, mus, g):
    once = maps_clamp(n, mus, g, 1e-6, 1e-6)
    twice = maps_clamp(once)
    for a, b in zip(once.channels(), twice.channels()):
        assert np.array_equal(a.data, b.data)
    assert once.n.data.min() >= 1.0 and once.n.data.max() <= 2.0
    assert once.mu_s.data.min() >= 0.0
    assert once.g.data.min() >= 0.0 and once.g.data.max() <= 0.999


@pytest.mark.parametrize("kw", [{"w0": 0.0}, {"z_R": -1.0}, {"z_f": -1e-6}])
def test_beam_params_validation(kw):
    with pytest.raises(ValueError):
        BeamParams(**kw)


def test_loss_weights_validation():
    assert LossWeights().omegas == (1.0, 1.0, 0.3)
    with pytest.raises(ValueError):
        LossWeights(lambda1=-1.0)
    with pytest.raises(ValueError):
        LossWeights(0, 0, 0, 0)
    assert LossWeights(0, 0, 0, 1.0).lambdas == (0, 0, 0, 1.0)


def test_map_gradients_arithmetic():
    a = MapGradients(np.ones(2), np.full(2, 2.0), np.full(2, 3.0))
    b = 2.0 * a + a
    assert np.array_equal(b.stack(), 3.0 * a.stack())
