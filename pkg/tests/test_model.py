import math
from dataclasses import replace

import numpy as np
import pytest

from pairlock.masks import AttentionStack, LocalityMap
from pairlock.model import (
    GUN_HUMAN,
    NO_INTERACTION,
    RIFLE_HUMAN,
    ModelConfig,
    NumericError,
    TrainConfig,
    TrainingSample,
    compute_loss,
    gradcheck_model,
    init_model,
    load_model,
    one_hot,
    predict_pair,
    save_model,
    train,
)
from pairlock.util import ConfigError


def apbb(cfg, h=16, w=16, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.random((cfg.input_channels, h, w))
    x[cfg.image_channels :] = (x[cfg.image_channels :] > 0.5).astype(float)
    return AttentionStack(x, cfg.image_channels)


def test_init_is_deterministic(tiny_config):
    a, b = init_model(tiny_config, 4).state(), init_model(tiny_config, 4).state()
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    c = init_model(tiny_config, 5).state()
    assert any(a[k].tobytes() != c[k].tobytes() for k in a)


def test_first_conv_shape_and_bias(tiny_config):
    net = init_model(tiny_config, 0)
    assert net.encoder.value("block0.conv0.w").shape == (4, 6, 3, 3)
    gray = init_model(replace(tiny_config, color_space="gray"), 0)
    assert gray.encoder.value("block0.conv0.w").shape == (4, 4, 3, 3)
    assert all(not p.value.any() for n, p in net.encoder.items() if n.endswith(".b"))
    bound = math.sqrt(1 / (6 * 9))
    assert np.abs(net.encoder.value("block0.conv0.w")).max() <= bound


def test_zero_net_is_uniform(tiny_config):
    net = init_model(tiny_config, 0, zero=True)
    np.testing.assert_allclose(predict_pair(net, apbb(tiny_config)), [1 / 3] * 3, atol=1e-15)


def test_forward_shapes_and_ranges(tiny_config):
    net = init_model(tiny_config, 1)
    small = net.forward(apbb(tiny_config, 16, 16))
    large = net.forward(apbb(tiny_config, 23, 41))
    assert small.caches["aap"][1] == large.caches["aap"][1] == (8, 4, 4)
    for f, shape in ((small, (3, 16, 16)), (large, (3, 23, 41))):
        assert abs(f.probs.sum() - 1) < 1e-12 and (f.probs >= 0).all()
        assert f.p_map.shape == shape
        assert ((f.p_map > 0) & (f.p_map < 1)).all()


def test_forward_input_checks(tiny_config):
    net = init_model(tiny_config, 1)
    with pytest.raises(ValueError, match="K=6"):
        net.forward(np.zeros((4, 16, 16)))
    with pytest.raises(ValueError, match="minimum 4x4"):
        net.forward(np.zeros((6, 3, 16)))
    with pytest.raises(ValueError, match="rng"):
        net.forward(apbb(tiny_config), training=True)


def test_predict_is_deterministic(tiny_config):
    net = init_model(tiny_config, 2)
    x = apbb(tiny_config)
    p = predict_pair(net, x)
    assert p == predict_pair(net, x)
    assert abs(sum(p) - 1) < 1e-12


def test_compute_loss_examples():
    target = one_hot(GUN_HUMAN)
    g = np.random.default_rng(0).random((3, 4, 4))
    total, parts = compute_loss((target.copy(), g.copy()), target, g, 1.0)
    assert total == 0.0 and parts == (0.0, 0.0)
    probs = np.array([0.5, 0.25, 0.25])
    total, (lc, lp) = compute_loss((probs, g + 0.1), target, g, 0.0)
    assert total == lc == pytest.approx(math.log(2))
    p_map = g.copy()
    p_map[0, 0, 0] += 0.5
    total, (lc, lp) = compute_loss((np.array([1 / math.e, 0.3, 1 - 1 / math.e - 0.3]), p_map), target, g, 2.0)
    assert lc == pytest.approx(1.0) and lp == pytest.approx(0.5)
    assert total == pytest.approx(2.0)


def test_lambda_zero_leaves_decoder_gradient_zero(tiny_config):
    net = init_model(replace(tiny_config, lam=0.0), 3)
    x = apbb(tiny_config)
    net.zero_grad()
    net.backward(net.forward(x), one_hot(RIFLE_HUMAN), np.random.default_rng(0).random((3, 16, 16)))
    assert all(not p.grad.any() for _, p in net.decoder.items())
    assert any(p.grad.any() for _, p in net.encoder.items())


def test_end_to_end_gradient_check():
    report = gradcheck_model(seed=11)
    assert len(report) == 16
    assert max(report.values()) <= 1e-4


def test_transposed_decoder_gradient_check():
    cfg = replace(
        ModelConfig(encoder_blocks=((3, 1), (4, 1)), aap_size=(2, 2), fc_dims=(6, 5, 3), decoder_blocks=(4, 3)),
        decoder_upsample="transposed",
        attention_mode="merged",
        color_space="gray",
    )
    report = gradcheck_model(cfg, seed=2, size=12)
    assert max(report.values()) <= 1e-4


def test_gradient_check_catches_fault():
    report = gradcheck_model(seed=11, fault=2.0)
    assert max(report.values()) == pytest.approx(0.5, abs=1e-3)


def samples(cfg, n, seed=0):
    out = []
    for i in range(n):
        x = apbb(cfg, 16, 16, seed + i)
        out.append(TrainingSample(x, i % 3, LocalityMap(np.random.default_rng(i).random((3, 16, 16)))))
    return out


def test_overfit_single_sample(tiny_config):
    cfg = replace(tiny_config, dropout_rate=0.0)
    net = init_model(cfg, 0)
    data = samples(cfg, 1)
    history = train(net, data, TrainConfig(learning_rate=0.01, momentum=0.9, epochs=200, seed=0))
    assert len(history) == 200
    assert history[-1].mean_loss_cls < 0.05
    assert history[-1].train_accuracy == 100.0


def test_zero_learning_rate_keeps_parameters(tiny_config):
    net = init_model(tiny_config, 0)
    before = net.state()
    before = {k: v.copy() for k, v in before.items()}
    train(net, samples(tiny_config, 3), TrainConfig(learning_rate=0.0, epochs=2, seed=1))
    after = net.state()
    assert all(before[k].tobytes() == after[k].tobytes() for k in before)


def test_training_is_deterministic(tiny_config):
    states = []
    for _ in range(2):
        net = init_model(tiny_config, 9)
        hist = train(net, samples(tiny_config, 4), TrainConfig(learning_rate=1e-3, epochs=2, seed=9))
        states.append((net.state(), [h.to_dict() for h in hist]))
    (a, ha), (b, hb) = states
    assert ha == hb
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)


def test_train_validates_before_stepping(tiny_config):
    net = init_model(tiny_config, 0)
    before = net.state()
    bad = samples(tiny_config, 2) + [TrainingSample(AttentionStack(np.zeros((4, 16, 16)), 1), 0, None)]
    with pytest.raises(ValueError, match="channels"):
        train(net, bad, TrainConfig(epochs=1))
    assert all(before[k].tobytes() == net.state()[k].tobytes() for k in before)
    with pytest.raises(ValueError, match="locality target"):
        train(net, [TrainingSample(apbb(tiny_config), 0, None)], TrainConfig(epochs=1))
    with pytest.raises(ValueError, match="empty"):
        train(net, [], TrainConfig(epochs=1))


def test_divergence_raises_numeric_error(tiny_config):
    net = init_model(tiny_config, 0)
    data = samples(tiny_config, 3)
    data[1].apbb.planes[0, 3, 3] = np.nan
    with pytest.raises(NumericError, match="non-finite"):
        train(net, data, TrainConfig(learning_rate=1e-3, epochs=1, seed=0))


def test_checkpoint_round_trip(tmp_path, tiny_config):
    net = init_model(replace(tiny_config, lam=0.5, attention_mode="split"), 6)
    train(net, samples(tiny_config, 3), TrainConfig(learning_rate=1e-3, epochs=1, seed=2))
    path = tmp_path / "m.bin"
    save_model(net, path)
    back = load_model(path)
    assert back.config == net.config
    a, b = net.state(), back.state()
    assert list(a) == list(b) and all(a[k].tobytes() == b[k].tobytes() for k in a)
    x = apbb(tiny_config, 20, 17, 4)
    assert predict_pair(net, x) == predict_pair(back, x)


def test_checkpoint_config_mismatch(tmp_path, tiny_config):
    path = tmp_path / "m.bin"
    save_model(init_model(tiny_config, 0), path)
    sidecar = tmp_path / "m.bin.json"
    sidecar.write_text(sidecar.read_text().replace('"aap_size": [\n      4,\n      4\n    ]', '"aap_size": [2, 2]'))
    from pairlock.nn import CheckpointError

    with pytest.raises(CheckpointError, match="shape"):
        load_model(path)


@pytest.mark.parametrize(
    "bad",
    [
        {"fc_dims": [8, 4, 2]},
        {"dropout_rate": 1.0},
        {"lambda": -1},
        {"aap_size": [0, 2]},
        {"encoder_blocks": []},
        {"decoder_upsample": "cubic"},
        {"attention_mode": "double"},
        {"lamda": 1.0},
    ],
)
def test_model_config_validation(bad):
    with pytest.raises(ConfigError):
        ModelConfig.from_dict(bad)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"batch_size": 2})
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"epochs": 0})
    cfg = ModelConfig.from_dict({"lambda": 0.25, "color_space": "rgb"})
    assert cfg.lam == 0.25 and ModelConfig.from_dict(cfg.to_dict()) == cfg


def test_label_constants():
    assert (GUN_HUMAN, RIFLE_HUMAN, NO_INTERACTION) == (0, 1, 2)
