import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from constrained_spectral import net
from constrained_spectral.errors import TrainingAborted, UndefinedMetricError
from constrained_spectral.graph import cycle, path, random_connected, sbm
from constrained_spectral.graph import laplacian
from constrained_spectral.lanczos import solve
from constrained_spectral.linkpred import split_links


def _instances(count=4, policy="neumann", seed=0):
    g = random_connected(30, 0.15, seed)
    rng = np.random.default_rng(seed)
    edges = g.sorted_edges()
    out = []
    for i in range(count):
        if i % 2 == 0:
            u, v = edges[int(rng.integers(len(edges)))]
            label = 1
        else:
            while True:
                u, v = (int(x) for x in rng.choice(g.n, 2, replace=False))
                if not g.has_edge(u, v):
                    break
            label = 0
        out.append(net.make_instance(g, u, v, label, policy, kappa=6, seed=[seed, i]))
    return out


def _finite_difference_check(model, instances, h=1e-5, per_group=None, rng=None):
    """Largest |fd - g| / max(1, |g|) over the checked entries of each group."""
    grads = net.gradients(model, instances)
    worst = {}
    for name, arr in model.params.items():
        idx = range(arr.size) if per_group is None else rng.choice(
            arr.size, size=min(per_group, arr.size), replace=False)
        err = 0.0
        for i in idx:
            flat = arr.reshape(-1)
            keep = flat[i]
            flat[i] = keep + h
            up = net.batch_loss(model, instances)
            flat[i] = keep - h
            down = net.batch_loss(model, instances)
            flat[i] = keep
            g = grads[name].reshape(-1)[i]
            err = max(err, abs((up - down) / (2 * h) - g) / max(1.0, abs(g)))
        worst[name] = err
    return worst


class TestBlockForward:
    def _p3(self):
        return solve(laplacian(path(3)), None, kappa=3)

    def test_zero_filter(self):
        b = self._p3()
        out = net.block_forward(b.V, b.R, lambda r: np.zeros_like(r), np.eye(3), np.eye(3))
        assert not out.any()

    def test_unit_filter_identity(self):
        b = self._p3()
        X = np.random.default_rng(0).standard_normal((3, 2))
        out = net.block_forward(b.V, b.R, lambda r: np.ones_like(r), X, np.eye(2),
                                activation=lambda z: z)
        np.testing.assert_allclose(out, X, atol=1e-12)

    def test_identity_filter_gives_relu_laplacian(self):
        b = self._p3()
        out = net.block_forward(b.V, b.R, lambda r: r, np.eye(3), np.eye(3))
        np.testing.assert_allclose(out, np.maximum(laplacian(path(3)).toarray(), 0), atol=1e-12)

    def test_shape_mismatch(self):
        b = self._p3()
        with pytest.raises(ValueError):
            net.block_forward(b.V, b.R, lambda r: r, np.eye(4), np.eye(4))


class TestSortPooling:
    def test_truncate(self):
        np.testing.assert_array_equal(net.sort_pooling([[1], [3], [2]], 2), [3, 2])

    def test_pad(self):
        np.testing.assert_array_equal(net.sort_pooling([[1], [3]], 4), [3, 1, 0, 0])

    def test_ties_by_index(self):
        X = np.array([[5.0, 1.0], [5.0, 1.0], [0.0, 2.0]])
        out = net.sort_pooling(X * [1, 1], 3).reshape(3, 2)
        np.testing.assert_array_equal(out[:, 1], [2, 1, 1])
        assert net._sort_order(X)[1:].tolist() == [0, 1]

    def test_ties_by_earlier_channel(self):
        X = np.array([[1.0, 1.0], [4.0, 1.0], [2.0, 1.0]])
        assert net._sort_order(X).tolist() == [1, 2, 0]

    @settings(max_examples=80, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 12), st.integers(1, 4), st.integers(0, 10_000))
    def test_batched_order_matches_lexsort(self, b, m, d, seed):
        rng = np.random.default_rng(seed)
        H = np.maximum(rng.integers(-2, 3, size=(b, m, d)).astype(float), 0)
        top = int(rng.integers(1, m + 1))
        np.testing.assert_array_equal(net._sort_order(H, top)[:, :top],
                                      net._full_order(H)[:, :top])


class TestLoss:
    @pytest.mark.parametrize("y", [0, 1])
    def test_half(self, y):
        assert net.bce_loss(0.5, y) == pytest.approx(np.log(2), abs=1e-12)

    def test_near_perfect(self):
        assert net.bce_loss(1 - 1e-12, 1) == pytest.approx(1e-12, rel=1e-3)

    def test_confident_wrong(self):
        assert net.bce_loss(0.9, 0) == pytest.approx(-np.log(0.1), rel=1e-12)

    def test_clamped(self):
        assert np.isfinite(net.bce_loss(0.0, 1))


class TestForward:
    def test_probability_range(self):
        model = net.init_model(seed=0)
        for inst in _instances(4):
            assert 0.0 < net.forward(model, inst) < 1.0

    def test_zero_head(self):
        model = net.init_model(seed=0)
        model.params["head.w"][:] = 0
        assert net.forward(model, _instances(1)[0]) == 0.5

    def test_deterministic(self):
        model = net.init_model(seed=1)
        inst = _instances(1)[0]
        assert net.forward(model, inst) == net.forward(model, inst)

    def test_batched_matches_single(self):
        model = net.init_model(seed=2)
        insts = _instances(6)
        single = np.array([net.forward(model, inst) for inst in insts])
        np.testing.assert_allclose(net.predict(model, insts), single, atol=1e-12)

    def test_small_subgraph_padded(self):
        model = net.init_model(seed=0, pool_k=10)
        inst = net.make_instance(cycle(5), 0, 1, 1, "neumann", kappa=6)
        assert inst.sub.size < model.pool_k
        assert 0.0 < net.forward(model, inst) < 1.0


class TestGradients:
    def test_finite_differences(self):
        model = net.init_model(channels=(8, 8), hidden=8, pool_k=4, seed=0)
        worst = _finite_difference_check(model, _instances(2, seed=1))
        assert max(worst.values()) <= 1e-4, worst

    def test_head_bias_with_zero_weights(self):
        model = net.init_model(seed=0)
        for k in model.params:
            model.params[k][:] = 0
        insts = _instances(4)
        grads = net.gradients(model, insts)
        y = np.array([inst.label for inst in insts], float)
        assert grads["head.b"][0] == pytest.approx(np.mean(0.5 - y), abs=1e-15)

    def test_duplicate_doubles_summed_gradient(self):
        model = net.init_model(seed=3)
        inst = _instances(1)[0]
        one = net.gradients(model, [inst], reduction="sum")
        two = net.gradients(model, [inst, inst], reduction="sum")
        for k in one:
            np.testing.assert_allclose(two[k], 2 * one[k], rtol=1e-12, atol=1e-15)

    def test_non_finite_loss_aborts(self):
        model = net.init_model(seed=0)
        model.params["head.b"][0] = np.nan
        with pytest.raises(TrainingAborted):
            net.batch_loss(model, _instances(2))


class TestMetrics:
    def test_perfect(self):
        assert net.auc_score([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0

    def test_all_ties(self):
        assert net.auc_score([0.3] * 6, [1, 0, 1, 0, 1, 0]) == 0.5

    def test_hand_ranking(self):
        # pairs: (0.9>0.1) (0.9>0.5) (0.4>0.1) (0.4<0.5) -> 3/4
        assert net.auc_score([0.9, 0.4, 0.5, 0.1], [1, 1, 0, 0]) == 0.75

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError):
            net.auc_score([0.1, 0.2], [1, 1])

    def test_hits(self):
        scores = [0.9, 0.6, 0.3, 0.8, 0.5, 0.1]
        labels = [1, 1, 1, 0, 0, 0]
        assert net.hits_at_k(scores, labels, 1) == pytest.approx(1 / 3)
        assert net.hits_at_k(scores, labels, 2) == pytest.approx(2 / 3)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=4, max_size=30), st.integers(0, 1000))
    def test_auc_matches_pair_count(self, scores, seed):
        labels = np.random.default_rng(seed).integers(0, 2, len(scores))
        if labels.min() == labels.max():
            return
        s = np.asarray(scores)
        pos, neg = s[labels == 1], s[labels == 0]
        expect = np.mean([(p > q) + 0.5 * (p == q) for p in pos for q in neg])
        assert net.auc_score(s, labels) == pytest.approx(expect, abs=1e-12)


class TestTraining:
    def _split(self, seed=0, max_train=60):
        g, _ = sbm([30, 30], 0.25, 0.03, seed=seed)
        return split_links(g, 0.1, seed, max_train)

    def test_zero_lr_keeps_parameters(self):
        split = self._split()
        model = net.init_model(seed=0)
        cfg = net.TrainConfig(lr=0.0, epochs=2, optimizer="sgd")
        trained, _ = net.train(model, split.train, cfg, split.test)
        for k in model.params:
            np.testing.assert_array_equal(trained.params[k], model.params[k])

    def test_same_seed_same_trace(self):
        runs = []
        for _ in range(2):
            split = self._split()
            cfg = net.TrainConfig(epochs=3, seed=4)
            runs.append(net.train(net.init_model(seed=4), split.train, cfg, split.test)[1])
        assert runs[0] == runs[1]

    def test_vdel_policy_runs(self):
        split = self._split(max_train=20)
        cfg = net.TrainConfig(epochs=2, policy="vdel", k=3)
        _, hist = net.train(net.init_model(seed=0), split.train, cfg, split.test)
        assert len(hist) == 2 and 0.0 <= hist[-1]["auc"] <= 1.0

    def test_single_class_rejected(self):
        split = self._split()
        only_pos = net.LinkDataset(split.observed, split.train.pairs[:3], [1, 1, 1])
        with pytest.raises(UndefinedMetricError):
            net.train(net.init_model(), only_pos, net.TrainConfig(epochs=1))

    def test_smoothed_loss_decreases(self):
        g, _ = sbm([50, 50], 0.2, 0.02, seed=0)
        split = split_links(g, 0.1, 0, max_train=200)
        assert len(split.train.pairs) == 200
        # at lr=1e-3 minibatch noise shows up as a late uptick in the smoothed curve
        cfg = net.TrainConfig(lr=5e-4, epochs=20, seed=0)
        _, hist = net.train(net.init_model(seed=0), split.train, cfg)
        loss = np.array([row["loss"] for row in hist])
        smooth = np.convolve(loss, np.ones(5) / 5, mode="valid")
        assert np.all(np.diff(smooth) <= 1e-12), smooth

    def test_bad_config(self):
        with pytest.raises(ValueError):
            net.TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            net.TrainConfig(optimizer="rmsprop")


class TestCheckpoint:
    def test_round_trip(self):
        model = net.init_model(seed=5)
        text = net.format_checkpoint(model, net.TrainConfig())
        back = net.parse_checkpoint(text)
        assert back.dims == model.dims and back.pool_k == model.pool_k
        for k, v in model.params.items():
            np.testing.assert_array_equal(back.params[k], v)
        inst = _instances(1)[0]
        assert net.forward(back, inst) == net.forward(model, inst)

    def test_rejects_other_text(self):
        with pytest.raises(ValueError):
            net.parse_checkpoint("hello=world\n")


class TestPolicies:
    def test_none_policy(self):
        inst = _instances(1, policy="none")[0]
        assert "max_CtV" not in inst.basis.diagnostics or inst.basis.diagnostics["max_CtV"] == 0

    def test_vdel_constraints_feasible(self):
        inst = _instances(1, policy="vdel")[0]
        assert inst.basis.diagnostics.get("max_CtV", 0.0) <= 1e-8

    def test_features(self):
        inst = _instances(1)[0]
        X = inst.X0
        assert X.shape == (inst.sub.size, net.FEATURE_DIM)
        np.testing.assert_array_equal(X[:2, 0], [1, 1])
        np.testing.assert_array_equal(X[:, 1:4].sum(axis=1), np.ones(inst.sub.size))

    def test_unknown_policy(self):
        with pytest.raises(ValueError):
            _instances(1, policy="magic")
