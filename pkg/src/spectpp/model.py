"""Transformer temporal point process parameterized by interval CDF.

Events are embedded as mark embedding + temporal encoding, passed through
causal attention-plus-residual blocks, and decoded into a log-normal
mixture over the next inter-event interval and a categorical distribution
over the next mark. Three temporal encodings and two attention styles are
supported; all forward math runs on autodiff tensors so the same code
serves sampling (constants) and training (gradients).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from . import autodiff as ad
from .autodiff import Tensor
from .core import EventSequence, RngStream

CHECKPOINT_FORMAT_VERSION = 1
SIGMA_MIN = 1e-4
SIGMA_MAX = 1e4
_LOG_2PI = math.log(2.0 * math.pi)
_ATTENTION_MASK_FILL = -1e30

ENCODINGS = ("thp", "sahp", "attnhp")
ATTENTIONS = ("standard", "attnhp")


class CheckpointFormatError(ValueError):
    """Raised when a checkpoint file has an unsupported format version."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; ``attention`` defaults to the style
    matching the chosen temporal encoding."""

    embed_dim: int = 16
    n_components: int = 8
    n_marks: int = 1
    n_heads: int = 1
    n_layers: int = 1
    encoding: str = "thp"
    attention: str | None = None
    attnhp_m: float = 1.0
    attnhp_big_m: float = 2000.0
    use_feedforward: bool = False

    def __post_init__(self) -> None:
        if self.embed_dim < 2 or self.embed_dim % 2:
            raise ValueError("embed_dim must be even and >= 2")
        if self.embed_dim % self.n_heads:
            raise ValueError("n_heads must divide embed_dim")
        if self.n_components < 1 or self.n_marks < 1 or self.n_layers < 1:
            raise ValueError("n_components, n_marks and n_layers must be >= 1")
        if self.encoding not in ENCODINGS:
            raise ValueError(f"encoding must be one of {ENCODINGS}")
        if self.attention is None:
            object.__setattr__(self, "attention",
                               "attnhp" if self.encoding == "attnhp" else "standard")
        if self.attention not in ATTENTIONS:
            raise ValueError(f"attention must be one of {ATTENTIONS}")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.n_heads

    @property
    def attention_input_dim(self) -> int:
        # attnhp attends over concat(1; z(t); h), everything else over h
        return 2 * self.embed_dim + 1 if self.attention == "attnhp" else self.embed_dim


@dataclass(frozen=True)
class MixtureParams:
    """Log-normal mixture over a positive interval: simplex weights,
    component log-means, positive component scales."""

    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self) -> None:
        for name in ("weights", "means", "scales"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-9 or np.any(self.weights < 0):
            raise ValueError("weights must form a simplex")
        if np.any(self.scales <= 0):
            raise ValueError("scales must be positive")


@dataclass(frozen=True)
class MarkDistribution:
    """Categorical distribution over the K mark values."""

    probabilities: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "probabilities",
                           np.atleast_1d(np.asarray(self.probabilities, dtype=float)))
        if abs(float(np.sum(self.probabilities)) - 1.0) > 1e-9 or np.any(self.probabilities < 0):
            raise ValueError("probabilities must form a simplex")


@dataclass
class ModelCheckpoint:
    """Configuration plus named parameter arrays."""

    config: ModelConfig
    params: dict[str, np.ndarray]

    def param_tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad) for k, v in self.params.items()}

    def copy(self) -> "ModelCheckpoint":
        return ModelCheckpoint(self.config, {k: v.copy() for k, v in self.params.items()})


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, m, k = config.embed_dim, config.n_components, config.n_marks
    shapes: dict[str, tuple[int, ...]] = {
        "mark_embedding": (k, d),
        "initial_context": (d,),
    }
    if config.encoding == "sahp":
        shapes["time_freq"] = (d,)
    for layer in range(config.n_layers):
        for name in ("q", "k", "v"):
            shapes[f"layers.{layer}.{name}"] = (config.attention_input_dim, d)
        if config.use_feedforward:
            shapes[f"layers.{layer}.ff1_w"] = (d, 2 * d)
            shapes[f"layers.{layer}.ff1_b"] = (2 * d,)
            shapes[f"layers.{layer}.ff2_w"] = (2 * d, d)
            shapes[f"layers.{layer}.ff2_b"] = (d,)
    shapes.update({
        "decoder_proj": (3 * d, d),
        "mix_weight_proj": (m, d),
        "mix_weight_bias": (m,),
        "mix_mean_proj": (m, d),
        "mix_mean_bias": (m,),
        "mix_scale_proj": (m, d),
        "mix_scale_bias": (m,),
        "mark_hidden_proj": (d, d),
        "mark_hidden_bias": (d,),
        "mark_out_proj": (k, d),
        "mark_out_bias": (k,),
    })
    return shapes


def init_checkpoint(config: ModelConfig, rng: RngStream) -> ModelCheckpoint:
    """Fan-in uniform init for matrices and the context vector, zero biases,
    unit SAHP frequencies."""
    bound = 1.0 / math.sqrt(config.embed_dim)
    params: dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(config).items():
        if name == "time_freq":
            params[name] = np.ones(shape)
        elif name.endswith("_bias") or name.endswith("_b"):
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.generator.uniform(-bound, bound, size=shape)
    return ModelCheckpoint(config, params)


def save_checkpoint(path: str | Path, checkpoint: ModelCheckpoint) -> None:
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(checkpoint.config),
        "params": {
            name: {"shape": list(value.shape), "data": value.ravel().tolist()}
            for name, value in checkpoint.params.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_checkpoint(path: str | Path) -> ModelCheckpoint:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointFormatError(
            f"unsupported checkpoint format_version {version!r}; "
            f"this build reads version {CHECKPOINT_FORMAT_VERSION}")
    config = ModelConfig(**doc["config"])
    params = {}
    for name, entry in doc["params"].items():
        params[name] = np.asarray(entry["data"], dtype=float).reshape(entry["shape"])
    expected = parameter_shapes(config)
    if set(params) != set(expected):
        raise CheckpointFormatError("checkpoint parameters do not match its configuration")
    for name, shape in expected.items():
        if tuple(params[name].shape) != tuple(shape):
            raise CheckpointFormatError(f"parameter {name!r} has shape {params[name].shape}, "
                                        f"expected {shape}")
        if not np.all(np.isfinite(params[name])):
            raise ValueError(f"parameter {name!r} contains non-finite values")
    return ModelCheckpoint(config, params)


# ---------------------------------------------------------------------------
# temporal encoding
# ---------------------------------------------------------------------------

def _encoding_exponents(config: ModelConfig) -> np.ndarray:
    j = np.arange(config.embed_dim)
    return (j - (j % 2)) / config.embed_dim


def _temporal_encoding_tensor(times: np.ndarray, params: dict[str, Tensor],
                              config: ModelConfig) -> Tensor:
    """Encode times (N,) into an (N, D) tensor; only SAHP carries gradients."""
    expo = _encoding_exponents(config)
    j = np.arange(config.embed_dim)
    even = (j % 2 == 0).astype(float)
    t_col = times.reshape(-1, 1)
    if config.encoding == "thp":
        arg = t_col / np.power(10000.0, expo)
        return Tensor(np.sin(arg) * even + np.cos(arg) * (1.0 - even))
    if config.encoding == "attnhp":
        scale = (1.0 / config.attnhp_m) * np.power(
            5.0 * config.attnhp_big_m / config.attnhp_m, expo)
        return Tensor(np.sin(t_col * scale))
    # sahp: learnable per-dimension frequencies shift a fixed positional phase
    phase = Tensor(j / np.power(10000.0, expo))
    arg = ad.add(phase, ad.mul(params["time_freq"], Tensor(t_col)))
    return ad.add(ad.mul(ad.sin(arg), Tensor(even)),
                  ad.mul(ad.cos(arg), Tensor(1.0 - even)))


def temporal_encoding(t: float, checkpoint: ModelCheckpoint) -> np.ndarray:
    """The (D,) encoding of a single timestamp under the checkpoint's variant."""
    out = _temporal_encoding_tensor(np.array([float(t)]), checkpoint.param_tensors(),
                                    checkpoint.config)
    return out.data[0]


# ---------------------------------------------------------------------------
# encoder
# ---------------------------------------------------------------------------

def _embed_tensor(times: np.ndarray, marks: np.ndarray, params: dict[str, Tensor],
                  config: ModelConfig) -> tuple[Tensor, Tensor]:
    if marks.size and (marks.min() < 0 or marks.max() >= config.n_marks):
        raise ValueError("mark out of range for the checkpoint configuration")
    z = _temporal_encoding_tensor(times, params, config)
    x = ad.add(ad.take(params["mark_embedding"], marks), z)
    return x, z


def _encode_tensor(times: np.ndarray, marks: np.ndarray, params: dict[str, Tensor],
                   config: ModelConfig) -> Tensor:
    x, z = _embed_tensor(times, marks, params, config)
    n = times.size
    mask = np.triu(np.full((n, n), _ATTENTION_MASK_FILL), k=1)
    inv_sqrt = 1.0 / math.sqrt(config.head_dim)
    ones_col = Tensor(np.ones((n, 1)))
    h = x
    for layer in range(config.n_layers):
        if config.attention == "attnhp":
            inputs = ad.concat([ones_col, z, h], axis=1)
        else:
            inputs = h
        head_outputs = []
        for head in range(config.n_heads):
            cols = slice(head * config.head_dim, (head + 1) * config.head_dim)
            q = ad.matmul(inputs, params[f"layers.{layer}.q"][:, cols])
            k = ad.matmul(inputs, params[f"layers.{layer}.k"][:, cols])
            v = ad.matmul(inputs, params[f"layers.{layer}.v"][:, cols])
            scores = ad.add(ad.mul(ad.matmul(q, k.T), inv_sqrt), Tensor(mask))
            kernel = ad.exp(scores)
            totals = ad.tensor_sum(kernel, axis=1, keepdims=True)
            if config.attention == "attnhp":
                head_outputs.append(ad.div(ad.matmul(kernel, v), ad.add(totals, 1.0)))
            else:
                head_outputs.append(ad.matmul(ad.div(kernel, totals), v))
        agg = head_outputs[0] if len(head_outputs) == 1 else ad.concat(head_outputs, axis=1)
        if config.attention == "attnhp":
            agg = ad.tanh(agg)
        h = ad.add(h, agg)
        if config.use_feedforward:
            hidden = ad.relu(ad.add(ad.matmul(h, params[f"layers.{layer}.ff1_w"]),
                                    params[f"layers.{layer}.ff1_b"]))
            h = ad.add(h, ad.add(ad.matmul(hidden, params[f"layers.{layer}.ff2_w"]),
                                 params[f"layers.{layer}.ff2_b"]))
    return h


def _context_tensor(times: np.ndarray, marks: np.ndarray, params: dict[str, Tensor],
                    config: ModelConfig) -> Tensor:
    """Row i is the conditioning context for the (i+1)-th event; row 0 is the
    learned begin-of-sequence context and row N conditions the survival term."""
    init = ad.reshape(params["initial_context"], (1, config.embed_dim))
    if times.size == 0:
        return init
    h = _encode_tensor(times, marks, params, config)
    return ad.concat([init, h], axis=0)


def embed_events(seq: EventSequence, checkpoint: ModelCheckpoint) -> np.ndarray:
    """Mark embedding plus temporal encoding, one row per event."""
    x, _ = _embed_tensor(seq.times, seq.marks, checkpoint.param_tensors(), checkpoint.config)
    return x.data


def encode_history(seq: EventSequence, checkpoint: ModelCheckpoint) -> np.ndarray:
    """(N, D) history embeddings; row i summarizes events up to and including i."""
    if len(seq) == 0:
        raise ValueError("encode_history requires a nonempty prefix")
    return _encode_tensor(seq.times, seq.marks, checkpoint.param_tensors(),
                          checkpoint.config).data


# ---------------------------------------------------------------------------
# decoder heads
# ---------------------------------------------------------------------------

def _head_tensors(ctx: Tensor, params: dict[str, Tensor], config: ModelConfig):
    """Mixture log-weights/means/scales and mark logits for each context row."""
    d = config.embed_dim
    e = ad.matmul(ctx, params["decoder_proj"].T)
    e1, e2, e3 = e[:, :d], e[:, d:2 * d], e[:, 2 * d:]
    w_logits = ad.add(ad.matmul(e1, params["mix_weight_proj"].T), params["mix_weight_bias"])
    log_w = ad.sub(w_logits, ad.logsumexp(w_logits, axis=-1, keepdims=True))
    mu = ad.add(ad.matmul(e2, params["mix_mean_proj"].T), params["mix_mean_bias"])
    sigma = ad.clip(ad.exp(ad.add(ad.matmul(e3, params["mix_scale_proj"].T),
                                  params["mix_scale_bias"])), SIGMA_MIN, SIGMA_MAX)
    hidden = ad.tanh(ad.add(ad.matmul(ctx, params["mark_hidden_proj"].T),
                            params["mark_hidden_bias"]))
    mark_logits = ad.add(ad.matmul(hidden, params["mark_out_proj"].T), params["mark_out_bias"])
    return log_w, mu, sigma, mark_logits


def _mixture_from_rows(log_w: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> MixtureParams:
    return MixtureParams(np.exp(log_w), mu, sigma)


def _mark_from_logits(logits: np.ndarray) -> MarkDistribution:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return MarkDistribution(e / e.sum())


def mixture_head(h: np.ndarray, checkpoint: ModelCheckpoint) -> MixtureParams:
    """Decode one history embedding into interval mixture parameters."""
    ctx = Tensor(np.asarray(h, dtype=float).reshape(1, -1))
    log_w, mu, sigma, _ = _head_tensors(ctx, checkpoint.param_tensors(), checkpoint.config)
    return _mixture_from_rows(log_w.data[0], mu.data[0], sigma.data[0])


def mark_head(h: np.ndarray, checkpoint: ModelCheckpoint) -> MarkDistribution:
    """Decode one history embedding into a mark distribution."""
    ctx = Tensor(np.asarray(h, dtype=float).reshape(1, -1))
    _, _, _, logits = _head_tensors(ctx, checkpoint.param_tensors(), checkpoint.config)
    return _mark_from_logits(logits.data[0])


def position_distributions(events: EventSequence,
                           checkpoint: ModelCheckpoint) -> tuple[list[MixtureParams], list[MarkDistribution]]:
    """Next-event distributions at every position, from one batched forward.

    Entry i conditions on events[:i] (entry 0 is the begin-of-sequence
    context), so the lists have length N+1. Equality of these rows with
    per-prefix recomputation is what makes batched verification valid.
    """
    params = checkpoint.param_tensors()
    ctx = _context_tensor(events.times, events.marks, params, checkpoint.config)
    log_w, mu, sigma, logits = _head_tensors(ctx, params, checkpoint.config)
    mixtures = [_mixture_from_rows(log_w.data[i], mu.data[i], sigma.data[i])
                for i in range(ctx.data.shape[0])]
    marks = [_mark_from_logits(logits.data[i]) for i in range(ctx.data.shape[0])]
    return mixtures, marks


def next_event_distributions(events: EventSequence,
                             checkpoint: ModelCheckpoint) -> tuple[MixtureParams, MarkDistribution]:
    """Distributions of the next interval and mark given the events so far."""
    params = checkpoint.param_tensors()
    config = checkpoint.config
    if len(events) == 0:
        ctx = ad.reshape(params["initial_context"], (1, config.embed_dim))
    else:
        h = _encode_tensor(events.times, events.marks, params, config)
        ctx = h[-1:, :]
    log_w, mu, sigma, logits = _head_tensors(ctx, params, config)
    return (_mixture_from_rows(log_w.data[0], mu.data[0], sigma.data[0]),
            _mark_from_logits(logits.data[0]))


# ---------------------------------------------------------------------------
# mixture density, CDF, sampling
# ---------------------------------------------------------------------------

def mixture_logpdf(tau: float, params: MixtureParams) -> float:
    """Log-density of the log-normal mixture at tau > 0, via log-sum-exp."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    log_tau = math.log(tau)
    z = (log_tau - params.means) / params.scales
    with np.errstate(divide="ignore"):
        comps = np.log(params.weights) - log_tau - np.log(params.scales) \
            - 0.5 * _LOG_2PI - 0.5 * z * z
    m = np.max(comps)
    if not np.isfinite(m):
        return float("-inf")
    return float(m + np.log(np.sum(np.exp(comps - m))))


def mixture_cdf(tau: float, params: MixtureParams) -> float:
    """P(interval <= tau); zero at tau = 0 and monotone to one."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau == 0.0:
        return 0.0
    z = (math.log(tau) - params.means) / params.scales
    return float(np.sum(params.weights * ndtr(z)))


def mixture_survival(tau: float, params: MixtureParams) -> float:
    """P(interval > tau), computed as a mixture of upper normal tails."""
    if tau <= 0.0:
        return 1.0
    z = (math.log(tau) - params.means) / params.scales
    return float(np.sum(params.weights * ndtr(-z)))


def sample_interval(params: MixtureParams, rng: RngStream) -> tuple[float, float]:
    """Draw tau by picking a component then exponentiating a scaled normal;
    returns (tau, log-density of tau under the full mixture)."""
    component = rng.categorical(params.weights)
    eps = float(rng.normal())
    tau = math.exp(params.means[component] + params.scales[component] * eps)
    if tau <= 0.0 or math.isinf(tau):
        raise FloatingPointError("sampled interval under- or overflowed")
    return tau, mixture_logpdf(tau, params)


# ---------------------------------------------------------------------------
# sequence log-likelihood
# ---------------------------------------------------------------------------

def _loglik_tensor(times: np.ndarray, marks: np.ndarray, t_end: float,
                   params: dict[str, Tensor], config: ModelConfig) -> Tensor:
    n = times.size
    taus = np.diff(np.concatenate([[0.0], times]))
    if np.any(taus <= 0.0):
        raise ValueError("inter-event intervals must be positive")
    ctx = _context_tensor(times, marks, params, config)
    log_w, mu, sigma, mark_logits = _head_tensors(ctx, params, config)
    total = Tensor(0.0)
    if n:
        log_taus = np.log(taus).reshape(-1, 1)
        z = ad.div(ad.sub(Tensor(log_taus), mu[:n, :]), sigma[:n, :])
        comp = ad.sub(ad.sub(ad.sub(log_w[:n, :], Tensor(log_taus + 0.5 * _LOG_2PI)),
                             ad.log(sigma[:n, :])),
                      ad.mul(ad.mul(z, z), 0.5))
        total = ad.add(total, ad.tensor_sum(ad.logsumexp(comp, axis=-1)))
        mark_lsm = ad.sub(mark_logits, ad.logsumexp(mark_logits, axis=-1, keepdims=True))
        total = ad.add(total, ad.tensor_sum(mark_lsm[np.arange(n), marks]))
    tail = t_end - (times[-1] if n else 0.0)
    if tail > 0.0:
        z_tail = ad.div(ad.sub(math.log(tail), mu[n:, :]), sigma[n:, :])
        survival = ad.tensor_sum(ad.mul(ad.exp(log_w[n:, :]), ad.normal_cdf(ad.mul(z_tail, -1.0))))
        total = ad.add(total, ad.log(ad.clip(survival, 1e-300, np.inf)))
    return total


def sequence_loglik(seq: EventSequence, checkpoint: ModelCheckpoint) -> float:
    """CDF-form log-likelihood: interval and mark log-densities at each event
    plus the log-probability that no further event occurs before t_end."""
    out = _loglik_tensor(seq.times, seq.marks, seq.t_end,
                         checkpoint.param_tensors(), checkpoint.config)
    return out.item()
