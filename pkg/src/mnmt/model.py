"""Control-token transformer encoder-decoder with exact gradients.

One shared network serves every translation direction: the first source token
selects the target language, embeddings are tied across encoder input,
decoder input, and the output projection, and sinusoidal position rows are a
fixed (non-learned) table.  The forward pass is built from the autodiff
primitives, so ``backward`` returns exact reverse-mode gradients suitable for
finite-difference verification in float64.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, InputError, NumericsError
from .langs import require_registered
from .subword import SubwordModel

NEG_INF = -1e9  # additive attention mask; exp() underflows to exactly 0.0


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and objective knobs for one model instance."""

    vocab_size: int
    d_model: int = 128
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    d_ff: int = 512
    dropout: float = 0.1
    label_smoothing: float = 0.1
    max_len: int = 256
    dtype: str = "float32"

    def __post_init__(self):
        if self.vocab_size < 5:
            raise ConfigError(f"vocab_size must cover the reserved ids, got {self.vocab_size}")
        if self.d_model < 1 or self.d_ff < 1 or self.n_heads < 1:
            raise ConfigError("model dimensions must be positive")
        if self.n_enc_layers < 1 or self.n_dec_layers < 1:
            raise ConfigError("need at least one encoder and one decoder layer")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError(f"label_smoothing must be in [0, 1), got {self.label_smoothing}")
        if self.max_len < 2:
            raise ConfigError(f"max_len must be at least 2, got {self.max_len}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class Parameters:
    """Named tensors of one model; ``pos`` is a fixed (non-trained) buffer."""

    BUFFERS = ("pos",)

    def __init__(self, tensors: dict[str, Tensor]):
        self._tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> tuple[str, ...]:
        return tuple(self._tensors)

    def items(self):
        return self._tensors.items()

    def trainable(self):
        """(name, tensor) pairs the optimizer may update."""
        return ((n, t) for n, t in self._tensors.items() if n not in self.BUFFERS)

    def zero_grads(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._tensors.items()}

    @classmethod
    def from_state_dict(cls, state: dict[str, np.ndarray]) -> "Parameters":
        return cls({n: Tensor(a.copy(), requires_grad=True, name=n) for n, a in state.items()})

    def astype(self, dtype) -> "Parameters":
        return Parameters(
            {n: Tensor(t.data.astype(dtype), requires_grad=True, name=n) for n, t in self.items()}
        )

    def find_nonfinite(self) -> str | None:
        for name, t in self._tensors.items():
            if not np.isfinite(t.data).all():
                return name
        return None


@dataclass
class EncoderState:
    """Encoder output for one source sequence."""

    c: np.ndarray  # S x d_model
    src_mask: np.ndarray  # S bools


def sinusoidal_positions(max_len: int, d_model: int, dtype) -> np.ndarray:
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    idx = np.arange(d_model, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * np.floor(idx / 2.0) / d_model)
    table = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    return table.astype(dtype)


def init_parameters(config: ModelConfig, seed: int = 0) -> Parameters:
    """Deterministic initialization: Xavier-uniform mats, zero biases."""
    rng = np.random.Generator(np.random.PCG64(seed))
    dtype = config.np_dtype

    def xavier(fan_in: int, fan_out: int) -> np.ndarray:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, (fan_in, fan_out)).astype(dtype)

    tensors: dict[str, np.ndarray] = {}
    d, dff = config.d_model, config.d_ff
    tensors["embed"] = rng.normal(0.0, d ** -0.5, (config.vocab_size, d)).astype(dtype)
    tensors["out_bias"] = np.zeros(config.vocab_size, dtype=dtype)
    tensors["pos"] = sinusoidal_positions(config.max_len, d, dtype)

    def attn_block(prefix: str):
        for part in ("wq", "wk", "wv", "wo"):
            tensors[f"{prefix}.{part}"] = xavier(d, d)
        for part in ("bq", "bk", "bv", "bo"):
            tensors[f"{prefix}.{part}"] = np.zeros(d, dtype=dtype)

    def ln_block(prefix: str):
        tensors[f"{prefix}.gamma"] = np.ones(d, dtype=dtype)
        tensors[f"{prefix}.beta"] = np.zeros(d, dtype=dtype)

    def ff_block(prefix: str):
        tensors[f"{prefix}.w1"] = xavier(d, dff)
        tensors[f"{prefix}.b1"] = np.zeros(dff, dtype=dtype)
        tensors[f"{prefix}.w2"] = xavier(dff, d)
        tensors[f"{prefix}.b2"] = np.zeros(d, dtype=dtype)

    for i in range(config.n_enc_layers):
        attn_block(f"enc.{i}.attn")
        ln_block(f"enc.{i}.ln1")
        ff_block(f"enc.{i}.ff")
        ln_block(f"enc.{i}.ln2")
    for i in range(config.n_dec_layers):
        attn_block(f"dec.{i}.self")
        ln_block(f"dec.{i}.ln1")
        attn_block(f"dec.{i}.cross")
        ln_block(f"dec.{i}.ln2")
        ff_block(f"dec.{i}.ff")
        ln_block(f"dec.{i}.ln3")

    return Parameters(
        {name: Tensor(arr, requires_grad=True, name=name) for name, arr in tensors.items()}
    )


# -- forward pass -----------------------------------------------------------


def _check_ids(ids: np.ndarray, config: ModelConfig, what: str) -> None:
    if ids.shape[-1] > config.max_len:
        raise InputError(f"{what} length {ids.shape[-1]} exceeds max_len {config.max_len}")
    if ids.size and int(ids.max()) >= config.vocab_size:
        raise InputError(f"{what} id {int(ids.max())} outside vocabulary of {config.vocab_size}")
    if ids.size and int(ids.min()) < 0:
        raise InputError(f"{what} contains a negative token id")


def _dropout(x: Tensor, p: float, rng) -> Tensor:
    if rng is None or p == 0.0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / np.asarray(1.0 - p, dtype=x.dtype)
    return x * keep


def _mha(params: Parameters, prefix: str, q_in: Tensor, kv_in: Tensor,
         mask_add: np.ndarray, config: ModelConfig) -> Tensor:
    b, tq, d = q_in.shape
    tk = kv_in.shape[1]
    h = config.n_heads
    dh = d // h

    def heads(x: Tensor, t: int) -> Tensor:
        return ad.transpose(ad.reshape(x, (b, t, h, dh)), (0, 2, 1, 3))

    q = heads(q_in @ params[f"{prefix}.wq"] + params[f"{prefix}.bq"], tq)
    k = heads(kv_in @ params[f"{prefix}.wk"] + params[f"{prefix}.bk"], tk)
    v = heads(kv_in @ params[f"{prefix}.wv"] + params[f"{prefix}.bv"], tk)

    scores = q @ ad.transpose(k, (0, 1, 3, 2)) * (1.0 / math.sqrt(dh))
    weights = ad.softmax(scores + mask_add)
    ctx = ad.reshape(ad.transpose(weights @ v, (0, 2, 1, 3)), (b, tq, d))
    return ctx @ params[f"{prefix}.wo"] + params[f"{prefix}.bo"]


def _embed(params: Parameters, config: ModelConfig, ids: np.ndarray, rng) -> Tensor:
    x = ad.embedding(params["embed"], ids) * math.sqrt(config.d_model)
    x = x + ad.slice_rows(params["pos"], ids.shape[1])
    return _dropout(x, config.dropout, rng)


def _pad_mask_add(mask: np.ndarray, dtype) -> np.ndarray:
    # (B, S) booleans -> additive (B, 1, 1, S) mask for attention scores
    return np.where(mask[:, None, None, :], 0.0, NEG_INF).astype(dtype)


def _encoder_forward(params: Parameters, config: ModelConfig,
                     src: np.ndarray, src_mask: np.ndarray, rng=None) -> Tensor:
    _check_ids(src, config, "source")
    x = _embed(params, config, src, rng)
    pad_add = _pad_mask_add(src_mask, config.np_dtype)
    for i in range(config.n_enc_layers):
        a = _mha(params, f"enc.{i}.attn", x, x, pad_add, config)
        x = ad.layer_norm(x + _dropout(a, config.dropout, rng),
                          params[f"enc.{i}.ln1.gamma"], params[f"enc.{i}.ln1.beta"])
        f = _ffn(params, f"enc.{i}.ff", x)
        x = ad.layer_norm(x + _dropout(f, config.dropout, rng),
                          params[f"enc.{i}.ln2.gamma"], params[f"enc.{i}.ln2.beta"])
    return x


def _ffn(params: Parameters, prefix: str, x: Tensor) -> Tensor:
    hidden = ad.relu(x @ params[f"{prefix}.w1"] + params[f"{prefix}.b1"])
    return hidden @ params[f"{prefix}.w2"] + params[f"{prefix}.b2"]


def _decoder_forward(params: Parameters, config: ModelConfig, enc_out: Tensor,
                     src_mask: np.ndarray, tgt_in: np.ndarray,
                     tgt_in_mask: np.ndarray, rng=None) -> Tensor:
    """Causal decoder stack; returns logits over the vocabulary."""
    _check_ids(tgt_in, config, "target prefix")
    b, t = tgt_in.shape
    dtype = config.np_dtype
    y = _embed(params, config, tgt_in, rng)
    causal = np.where(np.triu(np.ones((t, t), dtype=bool), k=1), NEG_INF, 0.0).astype(dtype)
    self_add = _pad_mask_add(tgt_in_mask, dtype) + causal[None, None, :, :]
    cross_add = _pad_mask_add(src_mask, dtype)
    for i in range(config.n_dec_layers):
        a = _mha(params, f"dec.{i}.self", y, y, self_add, config)
        y = ad.layer_norm(y + _dropout(a, config.dropout, rng),
                          params[f"dec.{i}.ln1.gamma"], params[f"dec.{i}.ln1.beta"])
        c = _mha(params, f"dec.{i}.cross", y, enc_out, cross_add, config)
        y = ad.layer_norm(y + _dropout(c, config.dropout, rng),
                          params[f"dec.{i}.ln2.gamma"], params[f"dec.{i}.ln2.beta"])
        f = _ffn(params, f"dec.{i}.ff", y)
        y = ad.layer_norm(y + _dropout(f, config.dropout, rng),
                          params[f"dec.{i}.ln3.gamma"], params[f"dec.{i}.ln3.beta"])
    return y @ ad.transpose(params["embed"], (1, 0)) + params["out_bias"]


# -- public operations --------------------------------------------------------


def encode(params: Parameters, config: ModelConfig, src) -> EncoderState:
    """Run the encoder over one source token sequence."""
    ids = np.asarray(list(src), dtype=np.int64)[None, :]
    mask = np.ones_like(ids, dtype=bool)
    with ad.no_grad():
        out = _encoder_forward(params, config, ids, mask)
    return EncoderState(c=out.data[0], src_mask=mask[0])


def decoder_logprobs(params: Parameters, config: ModelConfig,
                     state: EncoderState, prefix) -> np.ndarray:
    """Log-distribution over the next token given a bos-led prefix."""
    ids = np.asarray(list(prefix), dtype=np.int64)
    if ids.size < 1:
        raise InputError("decoder prefix must start with bos")
    ids = ids[None, :]
    mask = np.ones_like(ids, dtype=bool)
    with ad.no_grad():
        enc = Tensor(state.c[None, :, :])
        logits = _decoder_forward(params, config, enc, state.src_mask[None, :], ids, mask)
        logp = ad.log_softmax(logits)
    return logp.data[0, -1]


def _loss_tensor(params: Parameters, config: ModelConfig, batch, rng=None) -> Tensor:
    tgt_in = batch.tgt[:, :-1]
    tgt_out = batch.tgt[:, 1:]
    out_mask = batch.tgt_mask[:, 1:]
    enc = _encoder_forward(params, config, batch.src, batch.src_mask, rng)
    logits = _decoder_forward(params, config, enc, batch.src_mask, tgt_in,
                              batch.tgt_mask[:, :-1], rng)
    logp = ad.log_softmax(logits)
    mask = out_mask.astype(config.np_dtype)
    n = float(mask.sum())
    if n == 0:
        raise InputError("batch has no target tokens to predict")
    nll = -ad.tsum(ad.gather_last(logp, tgt_out) * mask)
    eps = config.label_smoothing
    if eps > 0.0:
        smooth = -ad.tsum(logp * mask[:, :, None])
        total = nll * (1.0 - eps) + smooth * (eps / config.vocab_size)
    else:
        total = nll
    return total / n


def _raise_if_nonfinite(value: float, params: Parameters) -> None:
    if np.isfinite(value):
        return
    name = params.find_nonfinite()
    detail = f" (parameter {name!r} is non-finite)" if name else ""
    raise NumericsError(f"non-finite loss {value}{detail}")


def loss(params: Parameters, config: ModelConfig, batch) -> float:
    """Mean label-smoothed negative log-likelihood over non-pad targets."""
    with ad.no_grad():
        value = float(_loss_tensor(params, config, batch).data)
    _raise_if_nonfinite(value, params)
    return value


def loss_and_grads(params: Parameters, config: ModelConfig, batch,
                   rng=None) -> tuple[float, dict[str, np.ndarray]]:
    """One forward/backward pass; dropout is active only when rng is given."""
    params.zero_grads()
    out = _loss_tensor(params, config, batch, rng)
    value = float(out.data)
    _raise_if_nonfinite(value, params)
    out.backward()
    grads = {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }
    return value, grads


def backward(params: Parameters, config: ModelConfig, batch) -> dict[str, np.ndarray]:
    """Exact gradients of :func:`loss` for every named tensor."""
    return loss_and_grads(params, config, batch)[1]


def translate_batch(params: Parameters, config: ModelConfig, model: SubwordModel,
                    texts: list[str], tgt: str, max_out: int = 64) -> list[str]:
    """Greedy argmax decoding for a batch of source sentences."""
    require_registered(tgt)
    if not texts:
        return []
    control = model.control_id(tgt)
    rows = []
    for text in texts:
        ids = [control, *model.encode(text), model.eos_id]
        if len(ids) > config.max_len:
            raise InputError(f"source length {len(ids)} exceeds max_len {config.max_len}")
        rows.append(ids)
    b = len(rows)
    s = max(len(r) for r in rows)
    src = np.full((b, s), SubwordModel.pad_id, dtype=np.int64)
    for i, r in enumerate(rows):
        src[i, : len(r)] = r
    src_mask = src != SubwordModel.pad_id

    limit = max(0, min(max_out, config.max_len - 1))
    with ad.no_grad():
        enc = _encoder_forward(params, config, src, src_mask)
        ys = np.full((b, 1), SubwordModel.bos_id, dtype=np.int64)
        alive = np.ones(b, dtype=bool)
        for _ in range(limit):
            mask = ys != SubwordModel.pad_id
            logits = _decoder_forward(params, config, enc, src_mask, ys, mask)
            nxt = np.argmax(logits.data[:, -1, :], axis=-1)  # first max: smallest id
            nxt = np.where(alive, nxt, SubwordModel.pad_id)
            ys = np.concatenate([ys, nxt[:, None]], axis=1)
            alive &= nxt != SubwordModel.eos_id
            if not alive.any():
                break

    outputs = []
    for i in range(b):
        toks = []
        for t in ys[i, 1:]:
            if t in (SubwordModel.eos_id, SubwordModel.pad_id):
                break
            toks.append(int(t))
        outputs.append(model.decode(toks))
    return outputs


def greedy_decode(params: Parameters, config: ModelConfig, model: SubwordModel,
                  src_text: str, tgt: str, max_out: int = 64) -> str:
    """Translate one sentence; per-step argmax, ties to the smallest id."""
    return translate_batch(params, config, model, [src_text], tgt, max_out=max_out)[0]
