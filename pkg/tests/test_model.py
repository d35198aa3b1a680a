import numpy as np
import pytest

from model_gradcheck import full_loss_error, tiny_batch
from progsup.autodiff import ShapeError
from progsup.model import DecoderConfig, ModelConfig, TokenVocab, dependency_mask
from progsup.pipeline import VQAModel, combine_losses, lr_schedule, TrainConfig
from progsup.program import validate_program


def small_model(tap="crossmodal", seed=0, dtype=np.float64):
    ds, _ = tiny_batch()
    mc = ModelConfig(d_hidden=16, n_heads=2, L_lang=1, L_vis=1, L_x=1, tap=tap,
                     answer_vocab_size=len(ds.answers))
    return VQAModel(mc, DecoderConfig(d_hidden=16, n_ops=len(ds.operations)), len(TokenVocab(ds.words)),
                    ds.feature_dim, seed=seed, dtype=dtype)


def batch(k=5):
    _, p = tiny_batch()
    return p.ids[:k], p.q_mask[:k], p.feats[:k], p.boxes[:k], p.v_mask[:k]


def test_full_loss_gradient_100_seeds():
    worst = max(full_loss_error(seed) for seed in range(100))
    assert worst < 1e-4


def test_full_loss_gradient_unimodal_tap():
    assert max(full_loss_error(seed, tap="unimodal") for seed in range(10)) < 1e-4


def test_output_shapes():
    m = small_model()
    ids, qm, fe, bx, vm = batch()
    logits, pred, enc = m(ids, qm, fe, bx, vm, None, True)
    assert logits.shape == (5, m.model_cfg.answer_vocab_size)
    assert enc.q_out.shape == (5, ids.shape[1], 16) and enc.v_out.shape == (5, fe.shape[1], 16)
    s = pred.op_logits.shape[1]
    assert pred.a_q_scores.shape == (5, s, ids.shape[1] - 1)
    assert pred.a_v_scores.shape == (5, s, fe.shape[1])
    assert pred.a_d_scores.shape == (5, s, m.dec_cfg.n_maxop)


def test_padding_objects_do_not_change_outputs():
    m = small_model()
    ids, qm, fe, bx, vm = batch(1)
    n = int(vm[0].sum())
    base = m(ids, qm, fe[:, :n], bx[:, :n], vm[:, :n], None, False)[0].data
    pad_f = np.concatenate([fe[:, :n], np.full((1, 3, fe.shape[2]), 9.0)], axis=1)
    pad_b = np.concatenate([bx[:, :n], np.full((1, 3, 7), 0.5)], axis=1)
    pad_m = np.concatenate([vm[:, :n], np.zeros((1, 3), bool)], axis=1)
    np.testing.assert_allclose(m(ids, qm, pad_f, pad_b, pad_m, None, False)[0].data, base, atol=1e-12)


def test_tap_position_changes_decoder_input():
    ids, qm, fe, bx, vm = batch()
    cross = small_model("crossmodal")
    uni = small_model("unimodal")
    e1, e2 = cross(ids, qm, fe, bx, vm, None, False)[2], uni(ids, qm, fe, bx, vm, None, False)[2]
    np.testing.assert_allclose(e1.cls.data, e2.cls.data)
    assert not np.allclose(e1.tap_q.data, e2.tap_q.data)
    np.testing.assert_allclose(e1.tap_q.data, e1.q_out.data)


def test_predicted_programs_are_valid():
    m = small_model(seed=4)
    ids, qm, fe, bx, vm = batch()
    enc = m(ids, qm, fe, bx, vm, None, False)[2]
    n_tok = qm.sum(axis=1) - 1
    n_obj = vm.sum(axis=1)
    for p, nt, no in zip(m.decoder.predict(enc.tap_q[:, 0, :], enc.tap_q, enc.tap_v, n_tok, n_obj), n_tok, n_obj):
        assert validate_program(p, n_tokens=int(nt), n_objects=int(no), require_single_root=False) == []


def test_too_many_tokens_is_a_shape_error():
    m = small_model()
    with pytest.raises(ShapeError):
        m.encoder.embed_question(np.zeros((1, 40), dtype=np.int64))


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(d_hidden=30, n_heads=4)
    with pytest.raises(ValueError):
        ModelConfig(tap="middle")
    with pytest.raises(ValueError):
        TrainConfig(delta=-1.0)


def test_dependency_mask_is_strictly_lower():
    m = dependency_mask(4, 9)
    assert m.shape == (4, 9)
    assert m[0].sum() == 0 and m[3, :3].all() and not m[3, 3:].any()


def test_combine_losses_skips_zero_weights():
    assert combine_losses(1.0, 2.0, 3.0, 4.0, 5.0, (1.0, 1.0, 1.0, 100.0)) == 510.0
    assert combine_losses(1.0, None, None, None, None, (0, 0, 0, 0)) == 1.0


def test_lr_schedule_warmup_then_linear_decay():
    cfg = TrainConfig(lr=1.0, warmup_fraction=0.1)
    assert lr_schedule(0, 100, cfg) == 0.0
    assert lr_schedule(5, 100, cfg) == pytest.approx(0.5)
    assert lr_schedule(10, 100, cfg) == pytest.approx(1.0)
    assert lr_schedule(55, 100, cfg) == pytest.approx(0.5)
    assert lr_schedule(100, 100, cfg) == 0.0
