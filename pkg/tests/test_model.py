import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msbound.exceptions import ScenarioError
from msbound.model import (
    OrthBlock,
    State,
    SystemModel,
    build_orthogonal,
    compose,
    decompose,
    schur_decay_power,
    validate,
)

from conftest import random_plant

blocks_st = st.lists(
    st.one_of(
        st.just(OrthBlock("PlusOne")),
        st.just(OrthBlock("MinusOne")),
        st.floats(0.01, 2 * math.pi - 0.01)
        .filter(lambda t: abs(t - math.pi) > 1e-6)
        .map(lambda t: OrthBlock("Rotation", t)),
    ),
    max_size=6,
)


def test_build_orthogonal_examples():
    assert np.array_equal(build_orthogonal([OrthBlock("PlusOne")]), [[1.0]])
    np.testing.assert_allclose(build_orthogonal([OrthBlock("Rotation", math.pi / 2)]),
                               [[0, -1], [1, 0]], atol=1e-16)
    got = build_orthogonal([OrthBlock("MinusOne"), OrthBlock("Rotation", math.pi / 3)])
    s = math.sqrt(3) / 2
    np.testing.assert_allclose(got, [[-1, 0, 0], [0, 0.5, -s], [0, s, 0.5]], atol=1e-15)
    assert build_orthogonal([]).shape == (0, 0)


@pytest.mark.parametrize("theta", [0.0, math.pi, -1.0, 2 * math.pi, 7.0])
def test_degenerate_rotation_rejected(theta):
    with pytest.raises(ScenarioError):
        OrthBlock("Rotation", theta)


def test_block_residual_per_entry():
    for theta in np.linspace(0.05, 2 * math.pi - 0.05, 37):
        if abs(theta - math.pi) < 1e-3:
            continue
        Q = OrthBlock("Rotation", theta).matrix()
        assert np.max(np.abs(Q.T @ Q - np.eye(2))) <= 1e-14


@given(blocks_st)
def test_orthogonal_by_construction(blocks):
    Q = build_orthogonal(blocks)
    assert np.linalg.norm(Q.T @ Q - np.eye(Q.shape[0])) <= 1e-12


@given(blocks_st.filter(len), st.integers(0, 2**32 - 1))
def test_isometry(blocks, seed):
    Q = build_orthogonal(blocks)
    x = np.random.default_rng(seed).standard_normal(Q.shape[0])
    assert abs(np.linalg.norm(Q @ x) - np.linalg.norm(x)) <= 1e-12 * np.linalg.norm(x)


def test_compose_examples():
    m = SystemModel(A1=[], blocks=[OrthBlock("PlusOne")], B1=[], B2=[[1.0]])
    A, B = compose(m)
    assert np.array_equal(A, [[1.0]]) and np.array_equal(B, [[1.0]])

    m = SystemModel(A1=[[0.5]], blocks=[OrthBlock("PlusOne")], B1=[[0.0]], B2=[[1.0]])
    A, B = compose(m)
    assert np.array_equal(A, [[0.5, 0], [0, 1]]) and np.array_equal(B, [[0], [1]])

    m = SystemModel(A1=[], blocks=[OrthBlock("Rotation", math.pi / 2)], B1=[], B2=[[1.0], [0.0]])
    A, B = compose(m)
    np.testing.assert_allclose(A, [[0, -1], [1, 0]], atol=1e-16)
    assert np.array_equal(B, [[1], [0]])


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_compose_then_partition_is_identity(seed):
    model = random_plant(np.random.default_rng(seed))
    A1, A2, B1, B2 = decompose(*compose(model), model.d1)
    assert np.array_equal(A1, model.A1) and np.array_equal(A2, model.A2)
    assert np.array_equal(B1, model.B1) and np.array_equal(B2, model.B2)


def test_schur_check_power_count():
    # 0.5**19 = 1.9e-6, 0.5**20 = 9.5e-7
    assert schur_decay_power([[0.5]]) == 20
    assert schur_decay_power([[1.0]]) is None
    assert schur_decay_power(np.zeros((0, 0))) == 0


def test_validate_reports():
    good = SystemModel(A1=[[0.5]], blocks=[OrthBlock("PlusOne")], B1=[[0.0]], B2=[[1.0]])
    rep = validate(good)
    assert rep.ok and rep.schur_power == 20 and rep.kappa == 1

    bad = SystemModel(A1=[[1.0]], blocks=[OrthBlock("PlusOne")], B1=[[0.0]], B2=[[1.0]])
    rep = validate(bad)
    assert not rep.ok and not rep.schur_ok and rep.messages

    rot = SystemModel(A1=[], blocks=[OrthBlock("Rotation", math.pi / 2)], B1=[], B2=[[1.0], [0.0]])
    rep = validate(rot)
    assert rep.reachable and rep.kappa == 2 and rep.reachability_rank == 2

    unreachable = SystemModel(A1=[], blocks=[OrthBlock("PlusOne"), OrthBlock("MinusOne")],
                              B1=[], B2=[[0.0], [0.0]])
    rep = validate(unreachable)
    assert not rep.reachable and rep.kappa is None


def test_degenerate_dimensions():
    pure_stable = SystemModel(A1=[[0.2]], blocks=[], B1=[[1.0]], B2=np.zeros((0, 1)))
    assert pure_stable.d2 == 0 and validate(pure_stable).ok
    with pytest.raises(ScenarioError):
        SystemModel(A1=[], blocks=[], B1=[], B2=[])


def test_shape_errors():
    with pytest.raises(ScenarioError):
        SystemModel(A1=[[0.5]], blocks=[OrthBlock("PlusOne")], B1=[[0.0, 1.0]], B2=[[1.0]])


def test_state_partition():
    m = SystemModel(A1=[[0.5]], blocks=[OrthBlock("PlusOne")], B1=[[0.0]], B2=[[1.0]])
    s = State.from_vector(m, [3.0, 4.0])
    assert s.x1.tolist() == [3.0] and s.x2.tolist() == [4.0]
    assert s.x.tolist() == [3.0, 4.0]


def test_model_is_read_only(scalar_plant):
    with pytest.raises(ValueError):
        scalar_plant.B2[0, 0] = 2.0
