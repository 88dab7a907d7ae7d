import json
import math

import numpy as np
import pytest

from pinchgat.diffkit import (
    ParamSet,
    ParamSpec,
    Tensor,
    adam_step,
    attention_scores,
    finite_difference_check,
    gat_block_forward,
    gat_layer,
    grad,
    he_init,
    init_adam,
    linear,
    mlp_forward,
)
from pinchgat.diffkit.layers import HeadParams, MlpLayer
from pinchgat.diffkit.tensor import NonFiniteError

SPECS = [
    ParamSpec("w1", (8, 4), 4),
    ParamSpec("b1", (8,), None),
    ParamSpec("w2", (2, 8), 8),
]


class TestHeInit:
    def test_variance_matches_two_over_fan_in(self):
        specs = [ParamSpec("big", (100_000,), 32)]
        params = he_init(specs, seed=0)
        var = float(np.var(params["big"].data))
        assert 0.0575 <= var <= 0.0675  # target 2/32 = 0.0625

    def test_deterministic(self):
        a = he_init(SPECS, seed=5)
        b = he_init(SPECS, seed=5)
        np.testing.assert_array_equal(a.flatten(), b.flatten())

    def test_seed_changes_draw(self):
        a = he_init(SPECS, seed=5)
        b = he_init(SPECS, seed=6)
        assert np.any(a.flatten() != b.flatten())

    def test_biases_exactly_zero(self):
        params = he_init(SPECS, seed=1)
        np.testing.assert_array_equal(params["b1"].data, np.zeros(8))


class TestParamSet:
    def test_flat_index_is_bijection(self):
        params = he_init(SPECS, seed=2)
        flat = params.flatten()
        assert flat.size == params.n_scalars == 8 * 4 + 8 + 2 * 8
        s = params.slice_of("b1")
        assert (s.start, s.stop) == (32, 40)
        np.testing.assert_array_equal(flat[s], params["b1"].data)

    def test_assign_flat_round_trip(self):
        params = he_init(SPECS, seed=2)
        flat = params.flatten()
        other = he_init(SPECS, seed=3)
        other.assign_flat(flat)
        np.testing.assert_array_equal(other.flatten(), flat)
        np.testing.assert_array_equal(other["w2"].data, params["w2"].data)

    def test_checkpoint_round_trip(self, tmp_path):
        params = he_init(SPECS, seed=4)
        path = tmp_path / "ck.json"
        params.save(str(path), seed=4)
        again = ParamSet.load(str(path))
        np.testing.assert_array_equal(again.flatten(), params.flatten())
        doc = json.loads(path.read_text())
        assert doc["format_version"] == 1
        assert doc["seed"] == 4

    def test_checkpoint_version_rejected(self):
        params = he_init(SPECS, seed=4)
        doc = params.to_checkpoint()
        doc["format_version"] = 99
        with pytest.raises(ValueError):
            ParamSet.from_checkpoint(doc)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ParamSet(SPECS, {"w1": np.zeros((8, 4)), "b1": np.zeros(9),
                             "w2": np.zeros((2, 8))})


class TestGrad:
    @staticmethod
    def quadratic_loss(params, scale=1.0):
        # touches w1 only; b1 and w2 must get exact-zero gradients
        return (params["w1"] * params["w1"]).sum() * scale

    def test_untouched_parameter_has_zero_gradient(self):
        params = he_init(SPECS, seed=0)
        g = grad(self.quadratic_loss, params)
        np.testing.assert_array_equal(g["b1"], np.zeros(8))
        np.testing.assert_array_equal(g["w2"], np.zeros((2, 8)))
        np.testing.assert_allclose(g["w1"], 2 * params["w1"].data, rtol=1e-14)

    def test_gradient_linearity_in_loss_scale(self):
        params = he_init(SPECS, seed=0)
        g1 = grad(self.quadratic_loss, params)
        g3 = grad(lambda p: self.quadratic_loss(p, 3.0), params)
        np.testing.assert_allclose(g3["w1"], 3 * g1["w1"], rtol=1e-14)

    def test_nonfinite_loss_raises(self):
        params = he_init(SPECS, seed=0)
        with pytest.raises(NonFiniteError):
            grad(lambda p: (p["w1"] * np.inf).sum(), params)

    def test_finite_difference_check_on_composed_loss(self):
        params = he_init(SPECS, seed=8)
        x = np.random.default_rng(0).normal(size=(5, 4))

        def loss_fn(p):
            hidden = linear(Tensor(x), p["w1"], p["b1"]).relu()
            return (linear(hidden, p["w2"]) ** 2).sum()

        result = finite_difference_check(loss_fn, params, n_coords=40, seed=1)
        assert result.ok, result.max_rel_error


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        params = he_init(SPECS, seed=0)
        state = init_adam(params, lr=1e-3)
        zeros = {s.name: np.zeros(s.shape) for s in SPECS}
        new, state2 = adam_step(params, zeros, state)
        np.testing.assert_array_equal(new.flatten(), params.flatten())
        assert state2.step == 1

    def test_first_step_is_signed_learning_rate(self):
        # with constant gradient the bias-corrected first update is
        # -lr * g / (|g| + eps) which is -lr * sign(g) up to eps
        params = ParamSet([ParamSpec("w", (3,), 3)],
                          {"w": np.array([1.0, 2.0, 3.0])})
        g = {"w": np.array([0.5, -4.0, 1e-3])}
        state = init_adam(params, lr=1e-2)
        new, _ = adam_step(params, g, state)
        delta = new["w"].data - params["w"].data
        np.testing.assert_allclose(delta, -1e-2 * np.sign(g["w"]), rtol=1e-4)

    def test_deterministic(self):
        params = he_init(SPECS, seed=0)
        g = {s.name: np.full(s.shape, 0.1) for s in SPECS}
        s0 = init_adam(params, lr=1e-3)
        a1, sa = adam_step(params, g, s0)
        b1, sb = adam_step(params, g, s0)
        np.testing.assert_array_equal(a1.flatten(), b1.flatten())
        assert sa.step == sb.step
        np.testing.assert_array_equal(sa.m["w1"], sb.m["w1"])

    def test_inputs_left_untouched(self):
        params = he_init(SPECS, seed=0)
        before = params.flatten()
        g = {s.name: np.full(s.shape, 0.1) for s in SPECS}
        state = init_adam(params, lr=1e-3)
        adam_step(params, g, state)
        np.testing.assert_array_equal(params.flatten(), before)
        np.testing.assert_array_equal(state.m["w1"], np.zeros((8, 4)))


class TestMlpForward:
    def test_zero_weights_zero_output(self):
        layers = [MlpLayer(Tensor(np.zeros((4, 3))), Tensor(np.zeros(4)), True)]
        out = mlp_forward(Tensor(np.ones((2, 3))), layers)
        np.testing.assert_array_equal(out.data, np.zeros((2, 4)))

    def test_identity_layer_passes_nonnegative_input(self):
        layers = [MlpLayer(Tensor(np.eye(3)), Tensor(np.zeros(3)), True)]
        x = np.array([[0.5, 1.0, 2.0]])
        out = mlp_forward(Tensor(x), layers)
        np.testing.assert_array_equal(out.data, x)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(3)
        w1, b1 = rng.normal(size=(6, 4)), rng.normal(size=6)
        w2, b2 = rng.normal(size=(2, 6)), rng.normal(size=2)
        x = rng.normal(size=(5, 4))
        layers = [MlpLayer(Tensor(w1), Tensor(b1), True),
                  MlpLayer(Tensor(w2), Tensor(b2), False)]
        out = mlp_forward(Tensor(x), layers).data

        for i in range(5):  # naive per-sample loop oracle
            h = np.maximum(w1 @ x[i] + b1, 0.0)
            np.testing.assert_allclose(out[i], w2 @ h + b2, rtol=1e-12)


def make_head(rng, fh, f):
    return HeadParams(
        attn=Tensor(rng.normal(size=fh)),
        w_src=Tensor(rng.normal(size=(fh, f))),
        w_tgt=Tensor(rng.normal(size=(fh, f))),
        w_edge=Tensor(rng.normal(size=fh)),
    )


class TestAttentionScores:
    def test_single_neighbor_weight_is_one(self):
        rng = np.random.default_rng(0)
        head = make_head(rng, 4, 2)
        alpha = attention_scores(head, Tensor(rng.normal(size=(3, 2))),
                                 Tensor(rng.normal(size=(1, 2))),
                                 Tensor(rng.uniform(0, 1, size=(3, 1))))
        np.testing.assert_allclose(alpha.data, np.ones((3, 1)))

    def test_identical_neighbors_split_evenly(self):
        rng = np.random.default_rng(1)
        head = make_head(rng, 4, 2)
        neigh = np.tile(rng.normal(size=(1, 2)), (2, 1))
        edge = np.full((1, 2), 0.7)
        alpha = attention_scores(head, Tensor(rng.normal(size=(1, 2))),
                                 Tensor(neigh), Tensor(edge))
        np.testing.assert_allclose(alpha.data, [[0.5, 0.5]], rtol=1e-12)

    def test_scalar_case_matches_hand_softmax(self):
        # one feature, one-dimensional head: alpha_j propto
        # exp(a * leaky(ws*xi + wt*xj + we*l_j)); evaluated by hand
        a, ws, wt, we = 1.5, 0.8, -0.6, 0.4
        xi = 0.9
        xj = np.array([0.3, -1.2])
        l = np.array([0.5, 1.5])

        def leaky(z):
            return z if z > 0 else 0.01 * z

        logits = [a * leaky(ws * xi + wt * x + we * ll)
                  for x, ll in zip(xj, l)]
        ez = np.exp(logits)
        expected = ez / ez.sum()

        head = HeadParams(attn=Tensor(np.array([a])),
                          w_src=Tensor(np.array([[ws]])),
                          w_tgt=Tensor(np.array([[wt]])),
                          w_edge=Tensor(np.array([we])))
        alpha = attention_scores(head, Tensor(np.array([[xi]])),
                                 Tensor(xj[:, None]), Tensor(l[None, :]))
        np.testing.assert_allclose(alpha.data[0], expected, rtol=1e-12)

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(2)
        head = make_head(rng, 8, 2)
        alpha = attention_scores(head, Tensor(rng.normal(size=(4, 6, 2))),
                                 Tensor(rng.normal(size=(4, 3, 2))),
                                 Tensor(rng.uniform(0, 2, size=(4, 6, 3))))
        sums = alpha.data.sum(axis=-1)
        np.testing.assert_allclose(sums, np.ones((4, 6)), atol=1e-12)


def naive_gat_oracle(heads, w_res, x_self, x_neigh, edge, slope=0.01):
    """Double-loop reference for gat_layer (single unbatched graph)."""
    p, q = x_self.shape[0], x_neigh.shape[0]
    outs = []
    for i in range(p):
        head_outs = []
        for head in heads:
            logits = np.empty(q)
            for j in range(q):
                pre = (head.w_src.data @ x_self[i]
                       + head.w_tgt.data @ x_neigh[j])
                if edge is not None:
                    pre = pre + head.w_edge.data * edge[i, j]
                act = np.where(pre > 0, pre, slope * pre)
                logits[j] = head.attn.data @ act
            ez = np.exp(logits - logits.max())
            alpha = ez / ez.sum()
            agg = sum(alpha[j] * (head.w_tgt.data @ x_neigh[j])
                      for j in range(q))
            head_outs.append(agg)
        combined = np.concatenate(head_outs) + w_res.data @ x_self[i]
        outs.append(np.maximum(combined, 0.0))
    return np.stack(outs)


class TestGatLayer:
    def test_zero_parameters_zero_output(self):
        fh, f = 4, 2
        heads = [HeadParams(Tensor(np.zeros(fh)), Tensor(np.zeros((fh, f))),
                            Tensor(np.zeros((fh, f))), Tensor(np.zeros(fh)))
                 for _ in range(2)]
        out = gat_layer(heads, Tensor(np.zeros((2 * fh, f))),
                        Tensor(np.ones((3, f))), Tensor(np.ones((5, f))),
                        Tensor(np.ones((3, 5))))
        np.testing.assert_array_equal(out.data, np.zeros((3, 2 * fh)))

    def test_identical_neighbors_give_uniform_aggregation(self):
        rng = np.random.default_rng(4)
        fh, f = 3, 2
        head = make_head(rng, fh, f)
        neigh = np.tile(rng.normal(size=(1, f)), (4, 1))
        edge = np.full((2, 4), 0.3)
        w_res = Tensor(np.zeros((fh, f)))
        out = gat_layer([head], w_res, Tensor(rng.normal(size=(2, f))),
                        Tensor(neigh), Tensor(edge))
        # uniform softmax over identical neighbors leaves the transformed
        # neighbor feature itself
        expected = np.maximum(head.w_tgt.data @ neigh[0], 0.0)
        for row in out.data:
            np.testing.assert_allclose(row, expected, rtol=1e-12)

    def test_matches_naive_double_loop(self):
        rng = np.random.default_rng(5)
        fh, f, p, q = 5, 2, 3, 4
        heads = [make_head(rng, fh, f) for _ in range(2)]
        w_res = Tensor(rng.normal(size=(2 * fh, f)))
        x_self = rng.normal(size=(p, f))
        x_neigh = rng.normal(size=(q, f))
        edge = rng.uniform(0, 2, size=(p, q))
        out = gat_layer(heads, w_res, Tensor(x_self), Tensor(x_neigh),
                        Tensor(edge))
        expected = naive_gat_oracle(heads, w_res, x_self, x_neigh, edge)
        np.testing.assert_allclose(out.data, expected, rtol=1e-12, atol=1e-14)

    def test_featureless_edges_supported(self):
        rng = np.random.default_rng(6)
        fh, f = 4, 2
        heads = [HeadParams(Tensor(rng.normal(size=fh)),
                            Tensor(rng.normal(size=(fh, f))),
                            Tensor(rng.normal(size=(fh, f))), None)]
        w_res = Tensor(rng.normal(size=(fh, f)))
        x = rng.normal(size=(3, f))
        out = gat_layer(heads, w_res, Tensor(x), Tensor(x), edge=None)
        expected = naive_gat_oracle(heads, w_res, x, x, None)
        np.testing.assert_allclose(out.data, expected, rtol=1e-12, atol=1e-14)


class TestGatBlockForward:
    def test_both_directions_match_oracle(self):
        rng = np.random.default_rng(7)
        fh, f, m, n = 4, 2, 3, 5
        heads = [make_head(rng, fh, f) for _ in range(2)]
        w_res = Tensor(rng.normal(size=(2 * fh, f)))
        users = rng.normal(size=(m, f))
        ants = rng.normal(size=(n, f))
        edge = rng.uniform(0, 2, size=(m, n))
        u_out, a_out = gat_block_forward(heads, heads, w_res, Tensor(users),
                                         Tensor(ants), Tensor(edge))
        np.testing.assert_allclose(
            u_out.data, naive_gat_oracle(heads, w_res, users, ants, edge),
            rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(
            a_out.data, naive_gat_oracle(heads, w_res, ants, users, edge.T),
            rtol=1e-12, atol=1e-14)
