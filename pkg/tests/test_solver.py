# tests/test_solver.py
import numpy as np
import pytest

from fcmvc.errors import CheckpointError, ConfigurationError, DataValidationError
from fcmvc.models import CheckpointDocument, SolverConfig
from fcmvc.services.labeling import acc
from fcmvc.services.registry import IndicatorPair, SampleRegistry, ViewBatch, register_view
from fcmvc.services.solver import (
    ConsensusState,
    final_labels,
    init_first_view,
    init_h,
    integrate_view,
    lower_bound,
    objective,
    run_stream,
    state_from_document,
    state_to_document,
    update_h,
    update_w,
    update_z,
)
from fcmvc.utils.linalg import orthonormality_error, thin_svd, trace_inner

TOL = 1e-8


def _identity_pair(n):
    return IndicatorPair(m1_rows=np.arange(n), m2_rows=np.arange(n), n_union=n)


def _random_stream(rng, max_n=200, max_k=8, max_d=32, views=3):
    """Views over random, overlapping subsets of a sample pool."""
    k = int(rng.integers(1, max_k + 1))
    n = int(rng.integers(2 * k + 2, max_n + 1))
    ids = [f"x{i}" for i in range(n)]
    batches = []
    for t in range(1, views + 1):
        d = int(rng.integers(k, max_d + 1))
        size = int(rng.integers(k if t == 1 else 1, n + 1))
        cols = np.sort(rng.choice(n, size=size, replace=False))
        data = rng.standard_normal((d, size)) + rng.integers(0, 3, size=size) * 3.0
        batches.append(ViewBatch(t, data, tuple(ids[c] for c in cols)))
    return batches, k


def test_init_h():
    assert np.array_equal(init_h(4, 2), [[1, 0], [0, 1], [0, 0], [0, 0]])
    assert np.array_equal(init_h(3, 3), np.eye(3))
    h = init_h(7, 3)
    assert np.array_equal(h.T @ h, np.eye(3))
    with pytest.raises(ConfigurationError):
        init_h(2, 3)


@pytest.mark.parametrize("n_prev, k, expected", [(4, 2, -5.656854249), (0, 3, 0.0), (1, 1, -1.0)])
def test_lower_bound(n_prev, k, expected):
    assert lower_bound(n_prev, k) == pytest.approx(expected)


def test_update_z_unit_vector():
    x = np.array([[3.0, 4.0]])
    ind = IndicatorPair(m1_rows=[0, 1], m2_rows=[], n_union=2)
    z = update_z(x, np.eye(1), np.eye(1), np.zeros((1, 0)), ind)
    assert np.allclose(z, [[0.6, 0.8]])
    assert trace_inner(z.T, x.T) == pytest.approx(5.0)


def test_update_z_already_optimal():
    a = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 2)))[0]
    ind = IndicatorPair(m1_rows=np.arange(6), m2_rows=[], n_union=6)
    z = update_z(a.T, np.eye(2), np.eye(2), np.zeros((2, 0)), ind)
    assert np.allclose(z, a.T)


def test_update_z_matches_angle_grid():
    rng = np.random.default_rng(8)
    theta = np.linspace(0.0, 2 * np.pi, 20000, endpoint=False)
    c, s = np.cos(theta), np.sin(theta)
    for _ in range(50):
        a = rng.standard_normal((6, 2))
        ind = IndicatorPair(m1_rows=np.arange(6), m2_rows=[], n_union=6)
        z = update_z(a.T, np.eye(2), np.eye(2), np.zeros((2, 0)), ind)
        achieved = trace_inner(z.T, a)
        # every optimum lives on the column space of A: Z = Q^T U^T
        g = np.linalg.qr(a)[0].T @ a
        rotation = c * (g[0, 0] + g[1, 1]) + s * (g[1, 0] - g[0, 1])
        reflection = c * (g[0, 0] - g[1, 1]) + s * (g[1, 0] + g[0, 1])
        assert abs(achieved - max(rotation.max(), reflection.max())) < 1e-4
        assert orthonormality_error(z, rows=True) < TOL


def _perturbed(q, rng, scale):
    """Nearby matrix with orthonormal columns."""
    return np.linalg.qr(q + scale * rng.standard_normal(q.shape))[0]


def test_subproblem_updates_are_never_beaten_by_perturbations():
    rng = np.random.default_rng(9)
    n, n_prev, d, k = 20, 12, 5, 3
    x = rng.standard_normal((d, n)) + 2.0
    h = np.linalg.qr(rng.standard_normal((d, k)))[0]
    w = np.linalg.qr(rng.standard_normal((k, k)))[0]
    z_prev = np.linalg.qr(rng.standard_normal((n_prev, k)))[0].T
    ind = IndicatorPair(m1_rows=np.arange(n), m2_rows=np.arange(n_prev), n_union=n)

    z = update_z(x, h, w, z_prev, ind)
    w_star, h_star = update_w(z, z_prev, ind), update_h(x, z, ind)
    best_z = objective(x, h, z, w, z_prev, ind)
    best_w = objective(x, h, z, w_star, z_prev, ind)
    best_h = objective(x, h_star, z, w, z_prev, ind)
    for _ in range(200):
        scale = 10.0 ** rng.uniform(-3, 0)
        assert objective(x, h, _perturbed(z.T, rng, scale).T, w, z_prev, ind) >= best_z - 1e-10
        assert objective(x, h, z, _perturbed(w_star, rng, scale), z_prev, ind) >= best_w - 1e-10
        assert objective(x, _perturbed(h_star, rng, scale), z, w, z_prev, ind) >= best_h - 1e-10


def test_w_and_h_updates_are_optimal_for_incomplete_views():
    rng = np.random.default_rng(10)
    n, d, k = 15, 4, 2
    view_rows = np.sort(rng.choice(n, size=9, replace=False))
    ind = IndicatorPair(m1_rows=view_rows, m2_rows=np.arange(10), n_union=n)
    x = rng.standard_normal((d, 9))
    z = np.linalg.qr(rng.standard_normal((n, k)))[0].T
    z_prev = np.linalg.qr(rng.standard_normal((10, k)))[0].T
    h, w = update_h(x, z, ind), update_w(z, z_prev, ind)
    best = objective(x, h, z, w, z_prev, ind)
    for _ in range(200):
        scale = 10.0 ** rng.uniform(-3, 0)
        assert objective(x, h, z, _perturbed(w, rng, scale), z_prev, ind) >= best - 1e-10
        assert objective(x, _perturbed(h, rng, scale), z, w, z_prev, ind) >= best - 1e-10


def test_update_z_shape_errors():
    ind = _identity_pair(3)
    with pytest.raises(DataValidationError):
        update_z(np.ones((2, 3)), np.eye(3, 2), np.eye(2), np.zeros((2, 3)), ind)
    with pytest.raises(DataValidationError):
        update_z(np.ones((2, 3)), np.eye(2), np.eye(3), np.zeros((2, 3)), ind)


def test_update_w_cases():
    z = np.linalg.qr(np.random.default_rng(1).standard_normal((5, 2)))[0].T
    assert np.allclose(update_w(z, z, _identity_pair(5)), np.eye(2))

    z1 = np.array([[0.6, 0.8]])
    ind = IndicatorPair(m1_rows=[0, 1], m2_rows=[0, 1], n_union=2)
    assert np.allclose(update_w(z1, -z1, ind), [[-1.0]])

    rng = np.random.default_rng(2)
    z = np.linalg.qr(rng.standard_normal((6, 2)))[0].T
    z_prev = np.linalg.qr(rng.standard_normal((4, 2)))[0].T
    ind = IndicatorPair(m1_rows=np.arange(6), m2_rows=[0, 2, 3, 5], n_union=6)
    w = update_w(z, z_prev, ind)
    b = ind.restrict_prev(z) @ z_prev.T
    assert abs(trace_inner(w, b) - thin_svd(b).sigma.sum()) < 1e-8


def test_update_h_cases():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 4))
    z = np.linalg.qr(rng.standard_normal((4, 1)))[0].T
    ind = _identity_pair(4)
    c = x @ z.T
    assert np.allclose(update_h(x, z, ind), c / np.linalg.norm(c))

    h0 = np.linalg.qr(rng.standard_normal((6, 2)))[0]
    z0 = np.linalg.qr(rng.standard_normal((8, 2)))[0].T
    x = h0 @ z0 * 3.0
    h = update_h(x, z0, _identity_pair(8))
    c = x @ z0.T
    assert orthonormality_error(h) < TOL
    assert trace_inner(h, c) == pytest.approx(thin_svd(c).sigma.sum())
    assert np.allclose(h, h0)


def test_objective_examples():
    s = 1 / np.sqrt(2)
    z = np.array([[s, s]])
    value = objective(np.array([[s, s]]), np.eye(1), z, np.eye(1), z, _identity_pair(2))
    assert value == pytest.approx(-1.0)

    ind = IndicatorPair(m1_rows=[1], m2_rows=[0], n_union=2)
    assert objective(np.zeros((1, 1)), np.eye(1), np.zeros((1, 2)), np.eye(1), np.ones((1, 1)), ind) == 0.0


def test_init_first_view_orthogonal_input():
    batch = ViewBatch(1, np.eye(4), ("a", "b", "c", "d"))
    state = init_first_view(batch, 2)
    assert orthonormality_error(state.z, rows=True) < TOL
    for row in state.z:
        assert np.count_nonzero(np.abs(row) > 1e-12) == 1
        assert np.max(np.abs(row)) == pytest.approx(1.0)


def test_init_first_view_rank_k_reconstruction():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((10, 3)) @ rng.standard_normal((3, 30))
    state = init_first_view(ViewBatch(1, x, tuple(range(30))), 3)
    assert np.linalg.norm(x - (x @ state.z.T) @ state.z) < 1e-6 * np.linalg.norm(x)
    assert state.last_diag.converged and state.last_diag.iters == 0


def test_init_first_view_errors_and_variants():
    batch = ViewBatch(1, np.random.default_rng(5).standard_normal((2, 10)), tuple(range(10)))
    with pytest.raises(ConfigurationError):
        init_first_view(batch, 11)

    # fewer features than clusters: Z1 is completed to k orthonormal rows
    state = init_first_view(batch, 3)
    assert state.z.shape == (3, 10)
    assert orthonormality_error(state.z, rows=True) < TOL

    a = init_first_view(batch, 2, SolverConfig(init="random", seed=9))
    b = init_first_view(batch, 2, SolverConfig(init="random", seed=9))
    assert np.array_equal(a.z, b.z)
    assert orthonormality_error(a.z, rows=True) < TOL


def test_integrate_identical_view():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((5, 20))
    ids = tuple(f"s{i}" for i in range(20))
    state = init_first_view(ViewBatch(1, x, ids), 3)
    state = integrate_view(state, ViewBatch(2, x, ids))
    trace = state.last_diag.objective_trace
    assert all(b <= a + TOL for a, b in zip(trace, trace[1:]))
    assert state.last_diag.converged
    assert orthonormality_error(state.z, rows=True) < TOL
    assert state.views_seen == 2 and len(state.history) == 2


def test_integrate_all_new_ids_widens():
    rng = np.random.default_rng(7)
    first = ViewBatch(1, rng.standard_normal((4, 6)), tuple("abcdef"))
    state = init_first_view(first, 2)
    state2 = integrate_view(state, ViewBatch(2, rng.standard_normal((3, 4)), tuple("ghij")))
    assert state2.z.shape == (2, 10)
    assert state2.registry.ids[:6] == state.registry.ids
    assert state2.last_diag.lower_bound == pytest.approx(lower_bound(6, 2))


def test_integrate_rejects_bad_input():
    rng = np.random.default_rng(8)
    state = init_first_view(ViewBatch(1, rng.standard_normal((4, 6)), tuple("abcdef")), 3)
    with pytest.raises(ConfigurationError):
        integrate_view(state, ViewBatch(3, rng.standard_normal((4, 6)), tuple("abcdef")))
    with pytest.raises(ConfigurationError):
        integrate_view(state, ViewBatch(2, rng.standard_normal((2, 6)), tuple("abcdef")))


def test_monotone_descent_and_lower_bound_random_instances():
    rng = np.random.default_rng(2024)
    for i in range(250):
        batches, k = _random_stream(rng)
        cfg = SolverConfig(max_iters=30, scaling="sample" if i % 2 else "none")
        state = run_stream(batches, k, cfg)
        for diag in state.history[1:]:
            trace = diag.objective_trace
            assert all(b <= a + TOL for a, b in zip(trace, trace[1:])), (i, trace)
            assert all(v >= diag.lower_bound for v in trace)
        assert orthonormality_error(state.z, rows=True) < TOL


def test_constraints_hold_after_every_subproblem():
    rng = np.random.default_rng(11)
    for _ in range(60):
        batches, k = _random_stream(rng, max_n=80, views=2)
        state = init_first_view(batches[0], k)
        registry, ind = register_view(state.registry, batches[1])
        x, z_prev = batches[1].data, state.z
        h, w, z = init_h(x.shape[0], k), np.eye(k), None
        for _ in range(10):
            z = update_z(x, h, w, z_prev, ind, z_current=z)
            assert orthonormality_error(z, rows=True) < TOL
            w = update_w(z, z_prev, ind)
            assert orthonormality_error(w) < TOL
            h = update_h(x, z, ind)
            assert orthonormality_error(h) < TOL


def test_complete_views_dense_and_gather_paths_agree(make_stream):
    views, _ = make_stream(n=50, k=3, views=3)
    state = init_first_view(views[0], 3)
    for batch in views[1:]:
        gathered = integrate_view(state, batch)
        dense = integrate_view(state, batch, dense=True)
        np.testing.assert_allclose(
            gathered.last_diag.objective_trace, dense.last_diag.objective_trace, rtol=0, atol=1e-12
        )
        assert np.abs(gathered.z - dense.z).max() <= 1e-12
        state = gathered


def test_incomplete_dense_path_matches(make_stream):
    views, _ = make_stream(n=40, k=2, views=3, ratio=0.3, pattern_seed=3)
    state = init_first_view(views[0], 2)
    gathered = integrate_view(state, views[1])
    dense = integrate_view(state, views[1], dense=True)
    np.testing.assert_allclose(
        gathered.last_diag.objective_trace, dense.last_diag.objective_trace, rtol=1e-10, atol=1e-10
    )


def test_checkpointed_stream_is_bit_identical():
    rng = np.random.default_rng(99)
    for _ in range(20):
        batches, k = _random_stream(rng, max_n=120)
        at_once = run_stream(batches, k)

        state = init_first_view(batches[0], k)
        for batch in batches[1:]:
            doc = CheckpointDocument.model_validate_json(state_to_document(state).model_dump_json())
            state = integrate_view(state_from_document(doc), batch)

        assert state.registry == at_once.registry
        assert np.array_equal(state.z, at_once.z)


def test_checkpoint_round_trip_and_corruption():
    rng = np.random.default_rng(12)
    batch = ViewBatch(1, rng.standard_normal((4, 9)), tuple([1, "b", 3, "d", 5, "f", 7, "h", 9]))
    state = init_first_view(batch, 3)
    doc = state_to_document(state)
    restored = state_from_document(doc)
    assert np.array_equal(restored.z, state.z)
    assert restored.registry.ids == state.registry.ids
    assert restored.views_seen == 1 and restored.k == 3

    with pytest.raises(CheckpointError):
        state_from_document(doc.model_copy(update={"z_sha256": "0" * 64}))
    with pytest.raises(CheckpointError):
        state_from_document(doc.model_copy(update={"z_b64": doc.z_b64[:-8]}))
    with pytest.raises(CheckpointError):
        state_from_document(doc.model_copy(update={"z_shape": [3, 8]}))


def test_checkpoint_rejects_non_orthonormal_payload():
    z = np.ones((2, 4))
    state = ConsensusState(
        z=z, registry=SampleRegistry("abcd"), k=2, views_seen=1,
        last_diag=init_first_view(ViewBatch(1, np.eye(4), tuple("abcd")), 2).last_diag,
    )
    with pytest.raises(CheckpointError):
        state_from_document(state_to_document(state))


def test_final_labels_two_blocks():
    s = 1 / np.sqrt(3)
    z = np.array([[s, s, s, 0, 0, 0], [0, 0, 0, s, s, s]])
    state = ConsensusState(
        z=z, registry=SampleRegistry("abcdef"), k=2, views_seen=1,
        last_diag=init_first_view(ViewBatch(1, np.eye(6), tuple("abcdef")), 2).last_diag,
    )
    labels = final_labels(state, 2, restarts=5).labels
    assert len(set(labels[:3])) == 1 and len(set(labels[3:])) == 1
    assert labels[0] != labels[3]


def test_final_labels_groups_by_direction_not_length():
    small = 0.05
    large = np.sqrt((1 - 2 * small**2) / 2)
    z = np.array([
        [small, small, large, large, 0, 0, 0, 0],
        [0, 0, 0, 0, small, small, large, large],
    ])
    ids = tuple("abcdefgh")
    state = ConsensusState(
        z=z, registry=SampleRegistry(ids), k=2, views_seen=1,
        last_diag=init_first_view(ViewBatch(1, np.eye(8), ids), 2).last_diag,
    )
    labels = final_labels(state, 2, restarts=5).labels
    assert len(set(labels[:4])) == 1 and len(set(labels[4:])) == 1
    assert labels[0] != labels[4]


def test_final_labels_restarts_agree_on_separable_data(make_stream):
    views, truth = make_stream(n=200, k=5, views=3, dims=[16, 16, 16], seed=3)
    state = run_stream(views, 5)
    one = final_labels(state, 5, restarts=1)
    many = final_labels(state, 5, restarts=50)
    assert acc(one, many) == 1.0
    assert acc(truth.reorder(state.registry.ids), many) == 1.0
    assert many.ids == state.registry.ids
