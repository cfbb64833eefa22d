import math

import numpy as np
import pytest

from gradcheck import assert_gradients_match
from hierattn import tensor as T
from hierattn.attention import (
    LevelParams,
    apply_label_mask,
    component_word_relevance,
    enrich_words,
    label_attention,
    label_component_association,
    label_document_embeddings,
    label_mask,
    level_forward,
    pool_local_global,
)
from hierattn.errors import ShapeMismatch
from hierattn.tensor import GradientTape, Matrix


def make_params(tape=None, q=2, m=3, d=4, dc=None, scale=0.4, seed=0):
    dc = d if dc is None else dc
    rng = np.random.default_rng(seed)
    reg = tape.parameter if tape is not None else (lambda name, v: Matrix(v))
    return LevelParams(
        components=reg("components", scale * rng.normal(size=(m, dc))),
        label_emb=reg("label_emb", scale * rng.normal(size=(q, d))),
        fw_W=reg("fw_W", scale * rng.normal(size=(2 * d, dc))),
        fw_b=reg("fw_b", scale * rng.normal(size=(1, dc))),
        fl_W=reg("fl_W", scale * rng.normal(size=(d, dc))),
        fl_b=reg("fl_b", scale * rng.normal(size=(1, dc))),
        fm_W=reg("fm_W", scale * rng.normal(size=(d, d))),
        fm_b=reg("fm_b", scale * rng.normal(size=(1, d))),
        W=reg("W", scale * rng.normal(size=(d, d))),
        b=reg("b", scale * rng.normal(size=(1, d))),
    )


class TestEnrichWords:
    def test_level_one_zero_prefix(self):
        out = enrich_words(Matrix([[1.0, 2.0]]), None)
        np.testing.assert_array_equal(out.data, [[0.0, 0.0, 1.0, 2.0]])

    def test_previous_embedding_prefixed(self):
        out = enrich_words(Matrix([[1.0, 2.0]]), Matrix([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.data, [[3.0, 4.0, 1.0, 2.0]])

    def test_wrong_length_rejected(self):
        with pytest.raises(ShapeMismatch):
            enrich_words(Matrix([[1.0, 2.0]]), Matrix([[3.0], [4.0], [5.0]]))


class TestComponentWordRelevance:
    def test_zero_components_zero_scores(self):
        lp = make_params()
        lp.components = Matrix(np.zeros((3, 4)))
        Ih = Matrix(np.random.default_rng(0).normal(size=(5, 8)))
        assert (component_word_relevance(Ih, lp).data == 0).all()

    def test_zero_projection_with_tanh_is_zero(self):
        lp = make_params()
        lp.fw_W = Matrix(np.zeros((8, 4)))
        lp.fw_b = Matrix(np.zeros((1, 4)))
        Ih = Matrix(np.ones((5, 8)))
        assert (component_word_relevance(Ih, lp).data == 0).all()

    def test_identity_projection_dot_products(self):
        # with a linear identity projection, scores are plain dot products
        lp = make_params(d=1, dc=2)
        lp.fw_W = Matrix(np.eye(2))
        lp.fw_b = Matrix(np.zeros((1, 2)))
        lp.components = Matrix([[2.0, 0.0]])
        Ih = Matrix([[1.0, 0.0], [0.0, 1.0]])
        out = component_word_relevance(Ih, lp, activation="linear")
        np.testing.assert_array_equal(out.data, [[2.0], [0.0]])


class TestLabelComponentAssociation:
    def test_single_component_all_ones(self):
        lp = make_params(m=1)
        out = label_component_association(lp)
        np.testing.assert_allclose(out.data, np.ones((2, 1)))

    def test_rows_sum_to_one(self):
        lp = make_params(q=4, m=6, seed=3)
        out = label_component_association(lp)
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-9)

    def test_hand_softmax(self):
        out = T.row_softmax(Matrix([[math.log(3), 0.0]]))
        np.testing.assert_allclose(out.data, [[0.75, 0.25]], atol=1e-12)


class TestLabelAttention:
    def test_zero_scores_uniform(self):
        A = label_attention(Matrix([[1.0]]), Matrix(np.zeros((4, 1))), np.ones(4))
        np.testing.assert_allclose(A.data, np.full((1, 4), 0.25))

    def test_hand_case(self):
        A = label_attention(Matrix([[1.0]]), Matrix([[2.0], [0.0]]), np.ones(2))
        e2 = math.exp(2)
        np.testing.assert_allclose(A.data, [[e2 / (e2 + 1), 1 / (e2 + 1)]], atol=1e-12)

    def test_padding_exact_zero(self):
        A = label_attention(Matrix([[1.0]]), Matrix([[2.0], [0.0]]), [1, 0])
        assert A.data[0, 1] == 0.0


class TestLabelDocumentEmbeddings:
    def test_identity_path(self):
        lp = make_params(d=2)
        lp.W = Matrix(np.eye(2))
        lp.b = Matrix(np.zeros((1, 2)))
        x = np.array([[1.5, -2.0]])
        out = label_document_embeddings(Matrix([[1.0]]), Matrix(x), lp)
        np.testing.assert_array_equal(out.data, [[1.5, 0.0]])

    def test_negative_preactivation_clamped(self):
        lp = make_params(d=2)
        lp.W = Matrix(np.eye(2))
        lp.b = Matrix([[-10.0, -10.0]])
        out = label_document_embeddings(Matrix([[1.0]]), Matrix([[1.0, 1.0]]), lp)
        assert (out.data == 0).all()

    def test_hand_average(self):
        lp = make_params(d=2)
        lp.W = Matrix(np.eye(2))
        lp.b = Matrix(np.zeros((1, 2)))
        A = Matrix([[0.5, 0.5]])
        I = Matrix([[2.0, 0.0], [0.0, 2.0]])
        out = label_document_embeddings(A, I, lp)
        np.testing.assert_array_equal(out.data, [[1.0, 1.0]])


class TestLabelMask:
    def test_level_one_all_ones(self):
        lp = make_params(q=3)
        out = label_mask(None, lp)
        np.testing.assert_array_equal(out.data, np.ones((3, 1)))

    def test_zero_projection_gives_half(self):
        lp = make_params(q=2, d=4)
        lp.fm_W = Matrix(np.zeros((4, 4)))
        lp.fm_b = Matrix(np.zeros((1, 4)))
        out = label_mask(Matrix(np.ones((4, 1))), lp)
        np.testing.assert_allclose(out.data, np.full((2, 1), 0.5))

    def test_sigmoid_of_log3(self):
        # arrange the dot product to equal ln 3, so the mask is 3/4
        lp = make_params(q=1, d=1)
        lp.fm_W = Matrix([[1.0]])
        lp.fm_b = Matrix([[0.0]])
        lp.label_emb = Matrix([[1.0]])
        out = label_mask(Matrix([[math.log(3)]]), lp)
        np.testing.assert_allclose(out.data, [[0.75]], atol=1e-12)


class TestApplyLabelMask:
    def test_ones_identity(self):
        D = Matrix([[1.0, 2.0], [3.0, 4.0]])
        out = apply_label_mask(D, Matrix([[1.0], [1.0]]))
        np.testing.assert_array_equal(out.data, D.data)

    def test_zeros(self):
        D = Matrix([[1.0, 2.0]])
        assert (apply_label_mask(D, Matrix([[0.0]])).data == 0).all()

    def test_row_scaling(self):
        D = Matrix([[2.0, 2.0], [2.0, 2.0]])
        out = apply_label_mask(D, Matrix([[1.0], [0.5]]))
        np.testing.assert_array_equal(out.data, [[2.0, 2.0], [1.0, 1.0]])


class TestPooling:
    def test_single_label(self):
        D = Matrix([[1.0, 2.0, 3.0]])
        v_local, v_global = pool_local_global(D, D)
        np.testing.assert_array_equal(v_local.data, [[1.0], [2.0], [3.0]])

    def test_hand_mean(self):
        D = Matrix([[1.0, 3.0], [3.0, 1.0]])
        v_local, _ = pool_local_global(D, D)
        np.testing.assert_array_equal(v_local.data, [[2.0], [2.0]])

    def test_mask_of_ones_makes_pools_equal(self):
        rng = np.random.default_rng(5)
        D = Matrix(rng.normal(size=(4, 3)))
        Dt = apply_label_mask(D, Matrix(np.ones((4, 1))))
        v_local, v_global = pool_local_global(Dt, D)
        np.testing.assert_array_equal(v_local.data, v_global.data)


class TestLevelForward:
    def run_level(self, variant="full", v_prev=None, seed=0, n=5, masked=0):
        rng = np.random.default_rng(seed)
        lp = make_params(q=3, m=4, d=4, seed=seed)
        I = Matrix(rng.normal(size=(n, 4)))
        mask = np.ones(n)
        if masked:
            mask[-masked:] = 0.0
        return level_forward(I, mask, v_prev, lp, variant=variant), I, mask

    def test_level_one_mask_is_exactly_ones_and_pools_match(self):
        trace, _, _ = self.run_level()
        assert (trace.m.data == 1.0).all()
        np.testing.assert_array_equal(trace.Dtilde.data, trace.D.data)
        np.testing.assert_array_equal(trace.v_local.data, trace.v_global.data)

    def test_row_sums(self):
        trace, _, _ = self.run_level(masked=2)
        np.testing.assert_allclose(trace.Rtilde.data.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(trace.A.data.sum(axis=1), 1.0, atol=1e-9)
        assert (trace.A.data[:, -2:] == 0.0).all()

    def test_no_component_variant_uniform_when_zeroed(self):
        rng = np.random.default_rng(1)
        lp = make_params(q=1, m=2, d=3, seed=1)
        lp.fw_W = Matrix(np.zeros((6, 3)))
        lp.fw_b = Matrix(np.zeros((1, 3)))
        I = Matrix(rng.normal(size=(4, 3)))
        trace = level_forward(I, np.ones(4), None, lp, variant="no_component")
        np.testing.assert_allclose(trace.A.data, np.full((1, 4), 0.25))
        assert trace.S is None and trace.Rtilde is None

    def test_second_level_mask_strictly_between_zero_and_one(self):
        trace, _, _ = self.run_level(v_prev=Matrix(np.full((4, 1), 0.3)))
        assert ((trace.m.data > 0) & (trace.m.data < 1)).all()

    def test_component_permutation_invariance(self):
        rng = np.random.default_rng(7)
        lp = make_params(q=3, m=5, d=4, seed=7)
        I = Matrix(rng.normal(size=(6, 4)))
        mask = np.ones(6)
        trace = level_forward(I, mask, None, lp)
        perm = rng.permutation(5)
        lp.components = Matrix(lp.components.data[perm])
        permuted = level_forward(I, mask, None, lp)
        np.testing.assert_allclose(permuted.A.data, trace.A.data, atol=1e-12)
        np.testing.assert_allclose(permuted.D.data, trace.D.data, atol=1e-12)

    def test_padded_rows_contribute_nothing(self):
        trace, I, mask = self.run_level(masked=2, seed=3)
        perturbed = I.data.copy()
        perturbed[-2:] += 1e6
        lp = make_params(q=3, m=4, d=4, seed=3)
        again = level_forward(Matrix(perturbed), mask, None, lp)
        np.testing.assert_array_equal(again.D.data, trace.D.data)
        np.testing.assert_array_equal(again.A.data, trace.A.data)

    def test_gradient_check_every_level_parameter(self):
        rng = np.random.default_rng(9)
        tape = GradientTape()
        lp = make_params(tape=tape, q=2, m=3, d=3, seed=9)
        I = Matrix(rng.normal(size=(4, 3)))
        v_prev = Matrix(rng.normal(size=(3, 1)))
        mask = np.array([1.0, 1.0, 1.0, 0.0])
        z = np.array([[1.0], [0.0]])

        def loss_fn():
            trace = level_forward(I, mask, v_prev, lp)
            p = T.sigmoid(T.row_dot(trace.Dtilde, lp.label_emb))
            return T.add(
                T.bce_sum(p, z),
                T.sum_all(T.scale_rows(trace.v_local, trace.v_local)),
            )

        err = assert_gradients_match(loss_fn, tape)
        assert err < 1e-4
