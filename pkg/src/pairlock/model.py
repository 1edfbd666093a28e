"""CarrierNet: feature encoder, three-layer pair classifier and locality decoder.

The encoder is a stack of ``conv3x3 -> relu`` groups each closed by a 2x2 max
pool. Its output feeds two heads: adaptive average pooling into three fully
connected layers (gun-human / rifle-human / no-interaction), and a decoder
that upsamples back to the input size and predicts per-class presence maps.
Training minimizes ``L_c + lambda * L_p``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import nn
from .imaging import ColorSpace
from .masks import AttentionMode, AttentionStack, LocalityMap
from .nn import ParamSet, make_rng
from .util import ConfigError, strict_from_dict, to_dict

log = logging.getLogger(__name__)

NUM_CLASSES = 3
CLASS_NAMES = ("gun_human", "rifle_human", "no_interaction")
GUN_HUMAN, RIFLE_HUMAN, NO_INTERACTION = range(NUM_CLASSES)


class NumericError(RuntimeError):
    """Non-finite values appeared during training."""


@dataclass(frozen=True)
class ModelConfig:
    color_space: ColorSpace = ColorSpace.YCBCR
    attention_mode: AttentionMode = AttentionMode.SPLIT
    encoder_blocks: tuple[tuple[int, int], ...] = ((16, 1), (32, 1), (64, 1))
    aap_size: tuple[int, int] = (7, 7)
    fc_dims: tuple[int, int, int] = (256, 64, NUM_CLASSES)
    dropout_rate: float = 0.5
    # 1-based FC layers whose output is followed by dropout
    dropout_after: tuple[int, ...] = (1, 2)
    lam: float = field(default=1.0, metadata={"key": "lambda"})
    locality_branch: bool = True
    decoder_blocks: tuple[int, ...] = (32, 16, 8)
    decoder_upsample: str = "nearest"
    resize_target: int = 64
    sigma_fraction: float = 0.25

    def __post_init__(self) -> None:
        object.__setattr__(self, "color_space", ColorSpace(self.color_space))
        object.__setattr__(self, "attention_mode", AttentionMode(self.attention_mode))
        blocks = tuple((int(c), int(n)) for c, n in self.encoder_blocks)
        object.__setattr__(self, "encoder_blocks", blocks)
        object.__setattr__(self, "aap_size", tuple(int(v) for v in self.aap_size))
        object.__setattr__(self, "fc_dims", tuple(int(v) for v in self.fc_dims))
        object.__setattr__(self, "dropout_after", tuple(int(v) for v in self.dropout_after))
        object.__setattr__(self, "decoder_blocks", tuple(int(v) for v in self.decoder_blocks))
        if not blocks or any(c < 1 or n < 1 for c, n in blocks):
            raise ValueError("encoder_blocks must be a nonempty list of (channels >= 1, convs >= 1)")
        if len(self.aap_size) != 2 or min(self.aap_size) < 1:
            raise ValueError("aap_size must be two extents >= 1")
        if len(self.fc_dims) != 3 or self.fc_dims[-1] != NUM_CLASSES or min(self.fc_dims) < 1:
            raise ValueError(f"fc_dims must be three widths ending at {NUM_CLASSES}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if any(i not in (1, 2) for i in self.dropout_after):
            raise ValueError("dropout_after may only name FC layers 1 and 2")
        if self.lam < 0.0 or not math.isfinite(self.lam):
            raise ValueError("lambda must be finite and >= 0")
        if self.decoder_upsample not in ("nearest", "transposed"):
            raise ValueError("decoder_upsample must be 'nearest' or 'transposed'")
        if self.locality_branch and (not self.decoder_blocks or min(self.decoder_blocks) < 1):
            raise ValueError("decoder_blocks must be nonempty channel widths when locality_branch is on")
        if self.resize_target < 1:
            raise ValueError("resize_target must be >= 1")

    @property
    def image_channels(self) -> int:
        return self.color_space.channels

    @property
    def input_channels(self) -> int:
        return self.image_channels + self.attention_mode.mask_planes

    @property
    def feature_channels(self) -> int:
        return self.encoder_blocks[-1][0]

    @property
    def min_input_size(self) -> int:
        return 2 ** len(self.encoder_blocks)

    @classmethod
    def from_dict(cls, data) -> "ModelConfig":
        return strict_from_dict(cls, data, "model")

    def to_dict(self) -> dict:
        return to_dict(self)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    momentum: float = 0.9
    epochs: int = 30
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size != 1:
            raise ValueError("only batch_size 1 is supported")

    @classmethod
    def from_dict(cls, data) -> "TrainConfig":
        return strict_from_dict(cls, data, "train")

    def to_dict(self) -> dict:
        return to_dict(self)


@dataclass
class Forward:
    logits: np.ndarray
    probs: np.ndarray
    p_map: np.ndarray | None
    caches: dict


@dataclass(frozen=True)
class TrainingSample:
    apbb: AttentionStack
    label: int
    g_map: LocalityMap | None = None


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    mean_loss_cls: float
    mean_loss_loc: float
    train_accuracy: float
    steps: int

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "mean_loss_cls": self.mean_loss_cls,
            "mean_loss_loc": self.mean_loss_loc,
            "train_accuracy": self.train_accuracy,
            "steps": self.steps,
        }


def one_hot(label: int) -> np.ndarray:
    out = np.zeros(NUM_CLASSES)
    out[label] = 1.0
    return out


def _uniform(rng: np.random.Generator, shape, fan_in: int, zero: bool) -> np.ndarray:
    if zero:
        return np.zeros(shape)
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class CarrierNet:
    def __init__(
        self,
        config: ModelConfig,
        encoder: ParamSet,
        classifier: ParamSet,
        decoder: ParamSet,
    ) -> None:
        self.config = config
        self.encoder = encoder
        self.classifier = classifier
        self.decoder = decoder

    # parameter access -----------------------------------------------------

    def param_sets(self) -> dict[str, ParamSet]:
        return {"encoder": self.encoder, "classifier": self.classifier, "decoder": self.decoder}

    def state(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, ps in self.param_sets().items():
            for name, p in ps.items():
                out[f"{prefix}/{name}"] = p.value
        return out

    def zero_grad(self) -> None:
        for ps in self.param_sets().values():
            ps.zero_grad()

    def step(self, lr: float, momentum: float) -> None:
        for ps in self.param_sets().values():
            nn.sgd_momentum_step(ps, lr, momentum)

    # forward ---------------------------------------------------------------

    def _check_input(self, x: np.ndarray) -> None:
        cfg = self.config
        if x.ndim != 3 or x.shape[0] != cfg.input_channels:
            raise ValueError(
                f"input has {x.shape[0] if x.ndim == 3 else '?'} channels, "
                f"model expects K={cfg.input_channels}"
            )
        if min(x.shape[1:]) < cfg.min_input_size:
            raise ValueError(
                f"input {x.shape[2]}x{x.shape[1]} is smaller than the encoder minimum "
                f"{cfg.min_input_size}x{cfg.min_input_size}"
            )

    def forward(
        self,
        apbb: AttentionStack | np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
        with_decoder: bool = True,
    ) -> Forward:
        cfg = self.config
        x = apbb.planes if isinstance(apbb, AttentionStack) else np.asarray(apbb)
        if x.dtype != np.longdouble:
            x = x.astype(np.float64, copy=False)
        self._check_input(x)
        if training and cfg.dropout_rate > 0.0 and rng is None:
            raise ValueError("training forward with dropout needs an rng")
        enc, clf, dec = self.encoder, self.classifier, self.decoder
        caches: dict = {"input_hw": x.shape[1:]}

        h = x
        enc_caches = []
        for b, (_, n_conv) in enumerate(cfg.encoder_blocks):
            block = []
            for c in range(n_conv):
                name = f"block{b}.conv{c}"
                h, conv_cache = nn.conv2d_forward(h, enc.value(f"{name}.w"), enc.value(f"{name}.b"), 1, 1)
                h, relu_cache = nn.relu_forward(h)
                block.append((name, conv_cache, relu_cache))
            h, pool_cache = nn.max_pool2d_forward(h, 2, 2)
            enc_caches.append((block, pool_cache))
        caches["encoder"] = enc_caches
        features = h

        pooled, aap_cache = nn.adaptive_avg_pool2d_forward(features, *cfg.aap_size)
        caches["aap"] = (aap_cache, pooled.shape)
        v = pooled.reshape(-1)
        fc_caches = []
        for i in (1, 2, 3):
            v, fc_cache = nn.fc_forward(v, clf.value(f"fc{i}.w"), clf.value(f"fc{i}.b"))
            relu_cache = drop_cache = None
            if i < 3:
                v, relu_cache = nn.relu_forward(v)
                if i in cfg.dropout_after:
                    v, drop_cache = nn.dropout_forward(v, cfg.dropout_rate, training, rng)
            fc_caches.append((fc_cache, relu_cache, drop_cache))
        caches["classifier"] = fc_caches
        logits = v
        probs = nn.softmax(logits)

        p_map = None
        if cfg.locality_branch and with_decoder:
            p_map = self._decode(features, x.shape[1], x.shape[2], caches)
        return Forward(logits=logits, probs=probs, p_map=p_map, caches=caches)

    def _decode(self, features: np.ndarray, out_h: int, out_w: int, caches: dict) -> np.ndarray:
        cfg, dec = self.config, self.decoder
        d = features
        stages = []
        for s in range(len(cfg.decoder_blocks)):
            name = f"stage{s}"
            if cfg.decoder_upsample == "nearest":
                d, up_cache = nn.upsample_nearest_forward(d, 2)
                d, conv_cache = nn.conv2d_forward(d, dec.value(f"{name}.w"), dec.value(f"{name}.b"), 1, 1)
            else:
                up_cache = None
                d, conv_cache = nn.transposed_conv2d_forward(d, dec.value(f"{name}.w"), dec.value(f"{name}.b"), 2)
            d, relu_cache = nn.relu_forward(d)
            stages.append((name, up_cache, conv_cache, relu_cache))
        d, head_cache = nn.conv2d_forward(d, dec.value("head.w"), dec.value("head.b"), 1, 0)
        d, resize_cache = nn.bilinear_resize_forward(d, out_h, out_w)
        p_map, sig_cache = nn.sigmoid_forward(d)
        caches["decoder"] = (stages, head_cache, resize_cache, sig_cache)
        return p_map

    # backward --------------------------------------------------------------

    def backward(
        self,
        fwd: Forward,
        target: np.ndarray,
        g_map: LocalityMap | np.ndarray | None = None,
        lam: float | None = None,
    ) -> tuple[float, float, float]:
        """Accumulate gradients of ``L_c + lam * L_p``; returns ``(total, L_c, L_p)``."""
        cfg = self.config
        lam = cfg.lam if lam is None else lam
        loss_cls, _, dlogits = nn.softmax_cross_entropy(fwd.logits, target)

        dv = dlogits
        for i, (fc_cache, relu_cache, drop_cache) in zip((3, 2, 1), reversed(fwd.caches["classifier"])):
            if i < 3:
                dv = nn.dropout_backward(dv, drop_cache)
                dv = nn.relu_backward(dv, relu_cache)
            dv, dw, db = nn.fc_backward(dv, fc_cache)
            self.classifier.accumulate(f"fc{i}.w", dw)
            self.classifier.accumulate(f"fc{i}.b", db)
        aap_cache, pooled_shape = fwd.caches["aap"]
        dfeat = nn.adaptive_avg_pool2d_backward(dv.reshape(pooled_shape), aap_cache)

        loss_loc = 0.0
        if fwd.p_map is not None and g_map is not None:
            target_map = g_map.planes if isinstance(g_map, LocalityMap) else g_map
            loss_loc, dpmap = nn.frobenius_loss(fwd.p_map, target_map)
            if lam > 0.0:
                dfeat = dfeat + self._decode_backward(lam * dpmap, fwd.caches["decoder"])

        for block, pool_cache in reversed(fwd.caches["encoder"]):
            dfeat = nn.max_pool2d_backward(dfeat, pool_cache)
            for name, conv_cache, relu_cache in reversed(block):
                dfeat = nn.relu_backward(dfeat, relu_cache)
                dfeat, dw, db = nn.conv2d_backward(dfeat, conv_cache)
                self.encoder.accumulate(f"{name}.w", dw)
                self.encoder.accumulate(f"{name}.b", db)
        return loss_cls + lam * loss_loc, loss_cls, loss_loc

    def _decode_backward(self, dpmap: np.ndarray, cache) -> np.ndarray:
        cfg, dec = self.config, self.decoder
        stages, head_cache, resize_cache, sig_cache = cache
        d = nn.sigmoid_backward(dpmap, sig_cache)
        d = nn.bilinear_resize_backward(d, resize_cache)
        d, dw, db = nn.conv2d_backward(d, head_cache)
        dec.accumulate("head.w", dw)
        dec.accumulate("head.b", db)
        for name, up_cache, conv_cache, relu_cache in reversed(stages):
            d = nn.relu_backward(d, relu_cache)
            if cfg.decoder_upsample == "nearest":
                d, dw, db = nn.conv2d_backward(d, conv_cache)
                d = nn.upsample_nearest_backward(d, up_cache)
            else:
                d, dw, db = nn.transposed_conv2d_backward(d, conv_cache)
            dec.accumulate(f"{name}.w", dw)
            dec.accumulate(f"{name}.b", db)
        return d

    def loss(
        self,
        apbb: AttentionStack | np.ndarray,
        label: int,
        g_map: LocalityMap | np.ndarray | None = None,
        lam: float | None = None,
        dtype=np.float64,
    ):
        """Deterministic total loss (dropout off), evaluated at ``dtype`` precision.

        Gradient checks pass ``np.longdouble`` so the finite-difference oracle
        is not limited by float64 roundoff; the result is then a numpy scalar.
        """
        x = apbb.planes if isinstance(apbb, AttentionStack) else apbb
        fwd = self.forward(np.asarray(x, dtype=dtype), training=False)
        lam = self.config.lam if lam is None else lam
        loss_cls, loss_loc = _loss_terms(fwd.probs, fwd.p_map, one_hot(label), g_map)
        return loss_cls + lam * loss_loc


def _loss_terms(probs, p_map, label_one_hot, g_map):
    loss_cls = -np.sum(label_one_hot * np.log(np.maximum(probs, nn.layers.LOG_FLOOR)))
    loss_loc = 0.0
    if p_map is not None and g_map is not None:
        target = g_map.planes if isinstance(g_map, LocalityMap) else g_map
        diff = p_map - target
        loss_loc = np.sqrt(np.sum(diff * diff))
    return loss_cls, loss_loc


def compute_loss(
    outputs: Forward | tuple[np.ndarray, np.ndarray | None],
    label_one_hot: np.ndarray,
    g_map: LocalityMap | np.ndarray | None,
    lam: float,
) -> tuple[float, tuple[float, float]]:
    """``(L_c + lam * L_p, (L_c, L_p))`` for class probabilities and a presence map."""
    if isinstance(outputs, Forward):
        probs, p_map = outputs.probs, outputs.p_map
    else:
        probs, p_map = outputs
    loss_cls, loss_loc = _loss_terms(probs, p_map, label_one_hot, g_map)
    loss_cls, loss_loc = float(loss_cls), float(loss_loc)
    return loss_cls + lam * loss_loc, (loss_cls, loss_loc)


def init_model(config: ModelConfig, seed: int = 0, zero: bool = False) -> CarrierNet:
    """Fan-in scaled uniform weights (bound ``sqrt(1/fan_in)``), zero biases.

    ``zero=True`` zeroes every weight as well (test hook: uniform class output).
    """
    rng = make_rng(seed)
    encoder, classifier, decoder = ParamSet(), ParamSet(), ParamSet()

    c_prev = config.input_channels
    for b, (c_out, n_conv) in enumerate(config.encoder_blocks):
        for c in range(n_conv):
            fan_in = c_prev * 9
            encoder.add(f"block{b}.conv{c}.w", _uniform(rng, (c_out, c_prev, 3, 3), fan_in, zero))
            encoder.add(f"block{b}.conv{c}.b", np.zeros(c_out))
            c_prev = c_out

    n_in = config.feature_channels * config.aap_size[0] * config.aap_size[1]
    for i, n_out in enumerate(config.fc_dims, start=1):
        classifier.add(f"fc{i}.w", _uniform(rng, (n_out, n_in), n_in, zero))
        classifier.add(f"fc{i}.b", np.zeros(n_out))
        n_in = n_out

    if config.locality_branch:
        c_prev = config.feature_channels
        for s, c_out in enumerate(config.decoder_blocks):
            if config.decoder_upsample == "nearest":
                shape = (c_out, c_prev, 3, 3)
            else:
                shape = (c_prev, c_out, 2, 2)
            decoder.add(f"stage{s}.w", _uniform(rng, shape, c_prev * shape[2] * shape[3], zero))
            decoder.add(f"stage{s}.b", np.zeros(c_out))
            c_prev = c_out
        decoder.add("head.w", _uniform(rng, (NUM_CLASSES, c_prev, 1, 1), c_prev, zero))
        decoder.add("head.b", np.zeros(NUM_CLASSES))
    return CarrierNet(config, encoder, classifier, decoder)


def predict_pair(net: CarrierNet, apbb: AttentionStack | np.ndarray) -> tuple[float, float, float]:
    """``(p_gun_hold, p_rifle_hold, p_no_interaction)`` with dropout disabled."""
    fwd = net.forward(apbb, training=False, with_decoder=False)
    return tuple(float(p) for p in fwd.probs)


def train(
    net: CarrierNet,
    dataset: Sequence[TrainingSample],
    tcfg: TrainConfig,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> list[EpochRecord]:
    """SGD with momentum at batch size 1; sample order is reshuffled every epoch."""
    if not dataset:
        raise ValueError("training set is empty")
    cfg = net.config
    for i, sample in enumerate(dataset):
        if sample.apbb.channels != cfg.input_channels:
            raise ValueError(
                f"sample {i} has {sample.apbb.channels} channels, model expects {cfg.input_channels}"
            )
        if not 0 <= sample.label < NUM_CLASSES:
            raise ValueError(f"sample {i} has invalid label {sample.label}")
        if cfg.locality_branch and cfg.lam > 0.0 and sample.g_map is None:
            raise ValueError(f"sample {i} lacks a locality target but lambda > 0")

    rng = make_rng(tcfg.seed)
    history = []
    net.zero_grad()
    for epoch in range(1, tcfg.epochs + 1):
        order = rng.permutation(len(dataset))
        sum_cls = sum_loc = 0.0
        correct = 0
        for idx in order:
            sample = dataset[idx]
            need_map = cfg.lam > 0.0 and sample.g_map is not None
            fwd = net.forward(sample.apbb, training=True, rng=rng, with_decoder=need_map)
            total, loss_cls, loss_loc = net.backward(fwd, one_hot(sample.label), sample.g_map)
            if not math.isfinite(total):
                raise NumericError(f"non-finite loss {total} at epoch {epoch}")
            net.step(tcfg.learning_rate, tcfg.momentum)
            sum_cls += loss_cls
            sum_loc += loss_loc
            correct += int(np.argmax(fwd.probs) == sample.label)
        n = len(dataset)
        record = EpochRecord(epoch, sum_cls / n, sum_loc / n, 100.0 * correct / n, n)
        for ps in net.param_sets().values():
            for name, p in ps.items():
                if not np.all(np.isfinite(p.value)):
                    raise NumericError(f"parameter {name} became non-finite at epoch {epoch}")
        log.info(
            "epoch %d  L_c %.4f  L_p %.4f  acc %.1f%%",
            epoch, record.mean_loss_cls, record.mean_loss_loc, record.train_accuracy,
        )
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
    return history


def save_model(net: CarrierNet, path: str | Path) -> None:
    """Write tensors to ``path`` and the model config to ``path + '.json'``."""
    path = Path(path)
    nn.save_tensors(path, net.state())
    sidecar = Path(str(path) + ".json")
    sidecar.write_text(json.dumps({"v": 1, "model": net.config.to_dict()}, indent=2, sort_keys=True) + "\n")


def load_model(path: str | Path) -> CarrierNet:
    path = Path(path)
    sidecar = Path(str(path) + ".json")
    meta = json.loads(sidecar.read_text())
    if meta.get("v") != 1:
        raise ConfigError(f"{sidecar}: unsupported sidecar version {meta.get('v')!r}")
    config = ModelConfig.from_dict(meta["model"])
    tensors = nn.load_tensors(path)
    net = init_model(config, seed=0, zero=True)
    expected = net.state()
    if set(tensors) != set(expected):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise nn.CheckpointError(f"{path}: tensor names do not match config (missing {missing}, extra {extra})")
    for key, value in tensors.items():
        prefix, name = key.split("/", 1)
        p = net.param_sets()[prefix][name]
        if p.value.shape != value.shape:
            raise nn.CheckpointError(f"{path}: {key} has shape {value.shape}, config expects {p.value.shape}")
        p.value[...] = value
    return net


GRADCHECK_CONFIG = ModelConfig(
    encoder_blocks=((4, 1), (8, 1)),
    aap_size=(4, 4),
    fc_dims=(16, 8, NUM_CLASSES),
    decoder_blocks=(8, 4),
    resize_target=16,
)


def gradcheck_model(
    config: ModelConfig = GRADCHECK_CONFIG,
    seed: int = 0,
    size: int = 16,
    label: int = RIFLE_HUMAN,
    fault: float | None = None,
) -> dict[str, float]:
    """End-to-end check of every parameter tensor of a freshly initialized net.

    The input is a random aPBB with binary mask planes and a random locality
    target. ``fault`` scales the first analytic gradient tensor before the
    comparison; it exists so callers can confirm that a wrong gradient is caught.
    """
    net = init_model(config, seed)
    rng = make_rng(seed + 1)
    x = rng.random((config.input_channels, size, size))
    x[config.image_channels :] = (x[config.image_channels :] > 0.5).astype(np.float64)
    g_map = rng.random((NUM_CLASSES, size, size)) if config.locality_branch else None
    net.zero_grad()
    net.backward(net.forward(x), one_hot(label), g_map)
    if fault is not None:
        first = next(iter(net.encoder.items()))[1]
        first.grad *= fault
    report = {}
    for prefix, ps in net.param_sets().items():
        rep = nn.gradient_check(lambda _: net.loss(x, label, g_map, dtype=np.longdouble), ps)
        report.update({f"{prefix}/{k}": v for k, v in rep.items()})
    return report
