"""The pattern-guided forecaster: feature extractor, confidence-gated pattern
classifier, relative-offset head, the three losses and inference.

Shapes: B batch, L look-back, D channels, T horizon, K groups, d model
width, o extractor output width, dim classifier hidden width.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .data import decode_absolute
from .errors import ConfigError, ShapeError
from .nnet import ops
from .nnet.layers import ParamBuilder, attention_encoder, grn, positional_encoding
from .nnet.tensor import Tensor, as_tensor

ABLATIONS = frozenset({
    "no_classifier", "no_relative", "no_conv", "no_transformer", "no_grn",
    "equal_width_grouping", "no_confidnet",
})


@dataclass
class PPGFConfig:
    L: int = 32
    D: int = 1
    T: int = 1
    K: int = 2
    conv_channels: int = 16
    kernel_width: int = 3
    model_dim: int = 16
    hidden_dim: int = 16
    heads: int = 2
    ffn_dim: int = 32
    output_dim: int = 16
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 5.0
    aux_ce_weight: float = 1.0
    lr: float = 1e-3
    seed: int = 0
    detach_confidence_gate: bool = True
    # "per_class": one offset per (step, group), read out at the chosen group;
    # "shared": a single offset per step regardless of group
    relative_head: str = "per_class"
    ablation: frozenset = field(default_factory=frozenset)
    dtype: str = "float32"
    # only used by the no_classifier variant, which regresses standardized y
    target_mean: float = 0.0
    target_std: float = 1.0

    def __post_init__(self):
        self.ablation = frozenset(self.ablation)
        self.validate()

    def validate(self):
        unknown = self.ablation - ABLATIONS
        if unknown:
            raise ConfigError(f"unknown ablation flag(s): {sorted(unknown)}")
        if {"no_classifier", "no_relative"} <= self.ablation:
            raise ConfigError("no_classifier and no_relative together leave nothing to train")
        for name in ("L", "D", "T", "conv_channels", "kernel_width", "model_dim",
                     "hidden_dim", "heads", "ffn_dim", "output_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.kernel_width % 2 == 0:
            raise ConfigError(f"kernel_width must be odd, got {self.kernel_width}")
        if self.model_dim % self.heads:
            raise ConfigError(f"model_dim {self.model_dim} not divisible by heads {self.heads}")
        if self.K < 2 and "no_classifier" not in self.ablation:
            raise ConfigError(f"K must be >= 2, got {self.K}")
        if min(self.lambda1, self.lambda2, self.lambda3, self.aux_ce_weight) < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.relative_head not in ("per_class", "shared"):
            raise ConfigError(f"relative_head must be per_class or shared, got {self.relative_head}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype}")
        if not self.target_std > 0:
            raise ConfigError("target_std must be positive")

    def has(self, flag):
        return flag in self.ablation

    @property
    def classifier(self):
        return "no_classifier" not in self.ablation

    @property
    def relative(self):
        return "no_relative" not in self.ablation

    @property
    def confidnet(self):
        return self.classifier and "no_confidnet" not in self.ablation

    def to_dict(self):
        d = asdict(self)
        d["ablation"] = sorted(self.ablation)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


class PPGFModel:
    """Container for the named Parameters of one network instance."""

    def __init__(self, config, params, modules):
        self.config = config
        self.params = params
        self.modules = modules
        self.dtype = np.dtype(config.dtype)
        self._pe = None

    def parameters(self):
        return list(self.params.values())

    def parameter_count(self):
        return int(sum(p.data.size for p in self.params.values()))

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, state):
        if set(state) != set(self.params):
            raise ShapeError("state dict parameter names differ from the model's")
        for name, arr in state.items():
            p = self.params[name]
            if arr.shape != p.data.shape:
                raise ShapeError(f"{name}: shape {arr.shape} vs {p.data.shape}")
            p.data[...] = arr

    def positional(self):
        if self._pe is None:
            self._pe = positional_encoding(self.config.L, self.config.model_dim, self.dtype)
        return self._pe

    def forward(self, x, k=None, training=False, frozen=None):
        return forward(self, x, k, training, frozen)


def build(config, rng=None):
    """Initialize a model; weights are Glorot-uniform, biases zero."""
    config.validate()
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    params = {}
    pb = ParamBuilder(params, rng, np.dtype(config.dtype))
    c = config
    m = {}
    width_in = c.D
    if not c.has("no_conv"):
        m["conv"] = pb.conv("extractor.conv", c.D, c.conv_channels, c.kernel_width)
        width_in = c.conv_channels
    m["embed"] = pb.dense("extractor.embed", width_in, c.model_dim)
    if not c.has("no_transformer"):
        m["encoder"] = pb.encoder("extractor.encoder", c.model_dim, c.ffn_dim)
    if not c.has("no_grn"):
        m["grn"] = pb.grn("extractor.grn", c.model_dim, c.model_dim)
    m["proj"] = pb.dense("extractor.proj", c.model_dim, c.output_dim)
    if c.classifier:
        m["fc1"] = pb.dense("classifier.fc1", c.output_dim, c.hidden_dim)
        if c.confidnet:
            m["aux"] = pb.dense("classifier.aux", c.hidden_dim, c.K)
            half = max(1, c.hidden_dim // 2)
            m["conf1"] = pb.dense("confidnet.fc1", c.hidden_dim, half)
            m["conf2"] = pb.dense("confidnet.fc2", half, 1)
        m["fc2"] = pb.dense("classifier.fc2", c.hidden_dim, c.T * c.K)
    if not c.classifier:
        m["fc3"] = pb.dense("regressor.fc3", c.output_dim, c.T)
    elif c.relative:
        width = c.T * c.K if c.relative_head == "per_class" else c.T
        m["fc3"] = pb.dense("regressor.fc3", c.output_dim, width)
    return PPGFModel(config, params, m)


# ------------------------------------------------------------------- forward


@dataclass
class ForwardOutputs:
    g: Tensor
    h: Tensor | None = None
    aux_logits: Tensor | None = None
    P_aux: Tensor | None = None
    c_star: np.ndarray | None = None  # B, constant target for the confidence net
    c_hat: Tensor | None = None  # B×1; None means the gate is disabled (ĉ ≡ 1)
    h_tilde: Tensor | None = None
    logits_final: Tensor | None = None  # B×T×K
    dy_all: Tensor | None = None  # B×T×K per-group offsets (per_class head)
    dy_hat: Tensor | None = None  # B×T, offsets for the predicted group
    direct: Tensor | None = None  # B×T, standardized y (no_classifier only)


def _dense(x, p):
    return ops.dense(x, p["W"], p["b"])


def extract_features(model, x):
    """x: B×L×D -> g: B×o. conv -> attention encoder -> GRN -> mean-pool -> proj."""
    m, c = model.modules, model.config
    x = as_tensor(np.asarray(x.data if isinstance(x, Tensor) else x, dtype=model.dtype))
    if x.ndim != 3 or x.shape[1:] != (c.L, c.D):
        raise ShapeError(f"expected B×{c.L}×{c.D} input, got {x.shape}")
    h = x
    if "conv" in m:
        h = ops.relu(ops.conv1d(h, m["conv"]["W"], m["conv"]["b"]))
    h = _dense(h, m["embed"])
    if "encoder" in m:
        h = ops.add(h, model.positional())
        h = attention_encoder(h, m["encoder"], c.heads)
    if "grn" in m:
        h = grn(h, m["grn"])
    return _dense(ops.mean(h, axis=1), m["proj"])


def classify_calibrated(model, g, true_k=None, training=False, frozen=None):
    """Classifier branch. ``true_k`` holds 1-based labels (B×T or B).

    ``frozen`` may pin the stop-gradient quantities (``c_star``, ``gate``) to
    given arrays so finite differences see the same surrogate objective that
    backprop differentiates.

    Returns (P_aux, c_star, c_hat, h_tilde, logits_final, h, aux_logits).
    """
    frozen = frozen or {}
    m, c = model.modules, model.config
    if training and true_k is None and c.confidnet:
        raise ValueError("training mode needs true labels to form the TCP target")
    h = _dense(g, m["fc1"])
    B = h.shape[0]
    aux_logits = P_aux = c_star = c_hat = None
    h_tilde = h
    if c.confidnet:
        aux_logits = _dense(h, m["aux"])
        P_aux = ops.softmax(aux_logits, axis=-1)
        if true_k is not None:
            k0 = np.asarray(true_k).reshape(B, -1)[:, 0] - 1
            c_star = P_aux.data[np.arange(B), k0].copy()
            if "c_star" in frozen:
                c_star = np.array(frozen["c_star"], dtype=P_aux.dtype)
        c_hat = ops.sigmoid(_dense(ops.elu(_dense(h, m["conf1"])), m["conf2"]))
        if c.detach_confidence_gate:
            gate = as_tensor(np.array(frozen.get("gate", c_hat.data), dtype=c_hat.dtype))
        else:
            gate = c_hat
        h_tilde = ops.mul(h, gate)
    logits = ops.reshape(_dense(h_tilde, m["fc2"]), (B, c.T, c.K))
    return P_aux, c_star, c_hat, h_tilde, logits, h, aux_logits


def predict_relative(model, g):
    """ΔŶ = ReLU(FC3(g)); non-negative, no upper clamp.

    B×T×K for the per-class head, B×T for the shared one.
    """
    c = model.config
    out = ops.relu(_dense(g, model.modules["fc3"]))
    if c.relative_head == "per_class":
        out = ops.reshape(out, (g.shape[0], c.T, c.K))
    return out


def select_groups(dy_all, k):
    """Pick per-(sample, step) offsets at 0-based groups ``k`` (B×T)."""
    B, T, _ = dy_all.shape
    return dy_all[np.arange(B)[:, None], np.arange(T)[None, :], np.asarray(k)]


def forward(model, x, k=None, training=False, frozen=None):
    c = model.config
    g = extract_features(model, x)
    out = ForwardOutputs(g=g)
    if c.classifier:
        (out.P_aux, out.c_star, out.c_hat, out.h_tilde, out.logits_final, out.h,
         out.aux_logits) = classify_calibrated(model, g, k, training, frozen)
        if c.relative:
            dy = predict_relative(model, g)
            if c.relative_head == "per_class":
                out.dy_all = dy
                out.dy_hat = select_groups(dy, argmax_lowest(out.logits_final.data))
            else:
                out.dy_hat = dy
    else:
        out.direct = _dense(g, model.modules["fc3"])
    return out


# --------------------------------------------------------------------- losses


@dataclass
class LossBreakdown:
    L_conf: float
    L_cls: float
    L_reg: float
    L_total: float
    total: Tensor = field(repr=False, default=None)


def compute_losses(outputs, targets, config):
    """Weighted sum λ1·L_conf + λ2·L_cls + λ3·L_reg, each a batch mean.

    ``targets`` needs ``k`` (1-based, B×T) and ``dy`` (B×T); the
    no_classifier variant needs ``y`` instead.
    """
    terms = {"L_conf": None, "L_cls": None, "L_reg": None}
    if config.classifier:
        k = np.asarray(targets.k)
        logits = outputs.logits_final
        B, T, K = logits.shape
        if k.shape != (B, T):
            raise ShapeError(f"labels {k.shape} vs logits {logits.shape}")
        ce = ops.softmax_cross_entropy(ops.reshape(logits, (B * T, K)), (k - 1).reshape(-1))
        if outputs.aux_logits is not None:
            if outputs.c_star is None:
                raise ValueError("outputs lack the TCP target; run forward with labels")
            w = config.aux_ce_weight
            ce_aux = ops.softmax_cross_entropy(outputs.aux_logits, k[:, 0] - 1)
            ce = ops.mul(ops.add(ce, ops.mul(ce_aux, w)), 1.0 / (1.0 + w))
            c_star = outputs.c_star.reshape(-1, 1).astype(outputs.c_hat.dtype)
            terms["L_conf"] = ops.mse(outputs.c_hat, c_star)
        terms["L_cls"] = ce
        if config.relative:
            # offsets are fit at the true group only
            pred = outputs.dy_hat if outputs.dy_all is None else select_groups(outputs.dy_all, k - 1)
            dy = np.asarray(targets.dy, dtype=pred.dtype)
            terms["L_reg"] = ops.mse(pred, dy)
    else:
        y = (np.asarray(targets.y, dtype=np.float64) - config.target_mean) / config.target_std
        terms["L_reg"] = ops.mse(outputs.direct, y.astype(outputs.direct.dtype))

    weights = {"L_conf": config.lambda1, "L_cls": config.lambda2, "L_reg": config.lambda3}
    total = None
    for name, term in terms.items():
        if term is None:
            continue
        weighted = ops.mul(term, weights[name])
        total = weighted if total is None else ops.add(total, weighted)
    vals = {name: (0.0 if t is None else float(t.data)) for name, t in terms.items()}
    total_val = (config.lambda1 * vals["L_conf"] + config.lambda2 * vals["L_cls"]
                 + config.lambda3 * vals["L_reg"])
    return LossBreakdown(vals["L_conf"], vals["L_cls"], vals["L_reg"], total_val, total)


# ------------------------------------------------------------------ inference


@dataclass
class Inference:
    k_hat: np.ndarray | None  # B×T, 1-based
    y_hat: np.ndarray | None  # B×T raw scale
    c_hat: np.ndarray | None  # B×1
    dy_hat: np.ndarray | None = None
    k_aux: np.ndarray | None = None  # B, pre-calibration prediction

    def __iter__(self):
        return iter((self.k_hat, self.y_hat, self.c_hat))


def argmax_lowest(logits, axis=-1):
    """Argmax with ties resolved toward the lowest index (numpy's rule)."""
    return np.argmax(logits, axis=axis)


def infer_outputs(model, scheme, out):
    c = model.config
    if not c.classifier:
        y = np.asarray(out.direct.data, dtype=np.float64) * c.target_std + c.target_mean
        return Inference(None, y, None)
    k_hat = argmax_lowest(out.logits_final.data) + 1
    c_hat = None if out.c_hat is None else np.asarray(out.c_hat.data, dtype=np.float64)
    k_aux = None if out.aux_logits is None else argmax_lowest(out.aux_logits.data) + 1
    if not c.relative:
        return Inference(k_hat, None, c_hat, None, k_aux)
    dy_hat = np.asarray(out.dy_hat.data, dtype=np.float64)
    y_hat = decode_absolute(scheme, k_hat, dy_hat)
    return Inference(k_hat, np.asarray(y_hat), c_hat, dy_hat, k_aux)


def infer(model, scheme, x, batch_size=512):
    """Per step: k̂ = argmax of the final classifier, ŷ = decode(k̂, ΔŶ)."""
    if model.config.classifier and scheme is not None and scheme.K != model.config.K:
        raise ShapeError(f"scheme has K={scheme.K}, model K={model.config.K}")
    x = np.asarray(x)
    parts = []
    for start in range(0, len(x), batch_size):
        out = forward(model, x[start:start + batch_size])
        parts.append(infer_outputs(model, scheme, out))

    def cat(name):
        vals = [getattr(p, name) for p in parts]
        return None if vals[0] is None else np.concatenate(vals, axis=0)

    return Inference(*(cat(n) for n in ("k_hat", "y_hat", "c_hat", "dy_hat", "k_aux")))
