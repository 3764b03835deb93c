"""The attention-based seq2seq topic labeller.

Assembles the bidirectional GRU encoder, additive attention, GRU decoder,
and dense-softmax output layer; trains with teacher forcing; decodes
greedily; persists checkpoints; runs random hyperparameter search.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dataset import EOS_ID, PAD_ID, SOS_ID, UNK_ID, EncodedPair
from .errors import DataError, NumericError
from .nn import autodiff as ad
from .nn.layers import (
    AttentionParams,
    GruParams,
    attention,
    decoder_step,
    dropout_apply,
    gru_cell,
    masked_cross_entropy,
    output_distribution,
)
from .nn.optim import Parameter, adam_step, rmsprop_step

CHECKPOINT_MAGIC = b"TLCK"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    term_vocab_size: int
    label_vocab_size: int
    emb_dim: int = 300
    enc_hidden: int = 200
    dec_hidden: int = 200
    enc_layers: int = 1
    dec_layers: int = 1
    align_dim: int = 0  # 0 means "use dec_hidden"
    dropout: float = 0.1
    lr: float = 0.001
    optimizer: str = "adam"
    t_x: int = 30
    max_label_len: int = 10
    batch_size: int = 64
    epochs: int = 10
    seed: int = 0
    early_stop_train_loss: float = 0.0  # 0 disables early stopping

    def validate(self) -> None:
        positive = (
            "term_vocab_size", "label_vocab_size", "emb_dim", "enc_hidden",
            "dec_hidden", "enc_layers", "dec_layers", "t_x", "max_label_len",
            "batch_size",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ValueError(f"config field {name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.optimizer not in ("adam", "rmsprop"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    @property
    def effective_align_dim(self) -> int:
        return self.align_dim if self.align_dim > 0 else self.dec_hidden


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], dtype) -> np.ndarray:
    fan_in = shape[0]
    fan_out = shape[1] if len(shape) > 1 else 1
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Seq2SeqModel:
    """All learnable tensors plus the forward/decode machinery."""

    def __init__(self, config: ModelConfig, dtype=np.float32):
        config.validate()
        self.config = config
        self.dtype = dtype
        self.step = 0
        self.named: dict[str, Parameter] = {}
        self._build()

    # -- parameter construction -------------------------------------------

    def _param(self, name: str, data: np.ndarray) -> Parameter:
        p = Parameter(data, name)
        self.named[name] = p
        return p

    def _zeros_gru(self, prefix: str, in_dim: int, hidden: int) -> GruParams:
        z = lambda shape: np.zeros(shape, dtype=self.dtype)
        return GruParams(
            w_z=self._param(f"{prefix}_w_z", z((in_dim, hidden))),
            u_z=self._param(f"{prefix}_u_z", z((hidden, hidden))),
            b_z=self._param(f"{prefix}_b_z", z((hidden,))),
            w_r=self._param(f"{prefix}_w_r", z((in_dim, hidden))),
            u_r=self._param(f"{prefix}_u_r", z((hidden, hidden))),
            b_r=self._param(f"{prefix}_b_r", z((hidden,))),
            w_h=self._param(f"{prefix}_w_h", z((in_dim, hidden))),
            u_h=self._param(f"{prefix}_u_h", z((hidden, hidden))),
            b_h=self._param(f"{prefix}_b_h", z((hidden,))),
        )

    def _build(self) -> None:
        cfg = self.config
        z = lambda shape: np.zeros(shape, dtype=self.dtype)
        self.term_emb = self._param("term_emb", z((cfg.term_vocab_size, cfg.emb_dim)))
        self.label_emb = self._param("label_emb", z((cfg.label_vocab_size, cfg.emb_dim)))

        self.encoder: list[tuple[GruParams, GruParams]] = []
        in_dim = cfg.emb_dim
        for layer in range(cfg.enc_layers):
            fwd = self._zeros_gru(f"enc{layer}_fwd", in_dim, cfg.enc_hidden)
            bwd = self._zeros_gru(f"enc{layer}_bwd", in_dim, cfg.enc_hidden)
            self.encoder.append((fwd, bwd))
            in_dim = 2 * cfg.enc_hidden

        self.decoder: list[GruParams] = []
        in_dim = cfg.emb_dim + 2 * cfg.enc_hidden
        for layer in range(cfg.dec_layers):
            self.decoder.append(self._zeros_gru(f"dec{layer}", in_dim, cfg.dec_hidden))
            in_dim = cfg.dec_hidden

        align = cfg.effective_align_dim
        self.attn = AttentionParams(
            w_s=self._param("attn_w_s", z((cfg.dec_hidden, align))),
            w_h=self._param("attn_w_h", z((2 * cfg.enc_hidden, align))),
            v=self._param("attn_v", z((align,))),
        )
        self.init_proj = [
            (
                self._param(f"init{layer}_w", z((2 * cfg.enc_hidden, cfg.dec_hidden))),
                self._param(f"init{layer}_b", z((cfg.dec_hidden,))),
            )
            for layer in range(cfg.dec_layers)
        ]
        self.out_w = self._param("out_w", z((cfg.dec_hidden, cfg.label_vocab_size)))
        self.out_b = self._param("out_b", z((cfg.label_vocab_size,)))

    def parameters(self) -> list[Parameter]:
        return list(self.named.values())

    def randomize(self, seed: int) -> None:
        """Glorot-uniform matrices, zero biases, uniform(-0.05, 0.05) embeddings."""
        rng = np.random.default_rng(seed)
        for name, p in self.named.items():
            if name in ("term_emb", "label_emb"):
                p.data[...] = rng.uniform(-0.05, 0.05, size=p.shape).astype(self.dtype)
            elif p.data.ndim >= 2 or name == "attn_v":
                shape = p.shape if p.data.ndim >= 2 else (p.shape[0], 1)
                p.data[...] = _glorot(rng, shape, self.dtype).reshape(p.shape)
            else:
                p.data[...] = 0.0

    # -- forward passes ----------------------------------------------------

    def encode(
        self,
        input_ids: np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[ad.Tensor, np.ndarray, list[ad.Tensor]]:
        """Embed and BiGRU-encode a batch; returns (H, pad mask, per-layer s_0)."""
        cfg = self.config
        input_ids = np.atleast_2d(np.asarray(input_ids))
        mask = input_ids != PAD_ID
        if not mask.any(axis=1).all():
            raise DataError("input row contains only PAD")
        rng = rng or np.random.default_rng(0)

        steps = []
        for t in range(input_ids.shape[1]):
            emb = ad.gather_rows(self.term_emb, input_ids[:, t])
            steps.append(dropout_apply(emb, cfg.dropout, training, rng))

        for fwd, bwd in self.encoder:
            rows, h_fwd, h_bwd = _bigru_rows(steps, fwd, bwd, mask)
            steps = rows
            last_fwd, last_bwd = h_fwd, h_bwd
        h_enc = ad.stack(steps, axis=1)

        summary = ad.concat([last_fwd, last_bwd], axis=1)
        s0 = [
            ad.tanh(summary @ w + b)
            for w, b in self.init_proj
        ]
        return h_enc, mask, s0

    def decode_step(
        self,
        y_prev: np.ndarray,
        states: list[ad.Tensor],
        h_enc: ad.Tensor,
        mask: np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[list[ad.Tensor], ad.Tensor, ad.Tensor]:
        """One decoder step; returns (new states, probs (B,V), attention weights)."""
        rng = rng or np.random.default_rng(0)
        y_emb = dropout_apply(
            ad.gather_rows(self.label_emb, np.asarray(y_prev)),
            self.config.dropout,
            training,
            rng,
        )
        alpha, c = attention(states[-1], h_enc, mask, self.attn)
        new_states = []
        x: ad.Tensor | None = None
        for layer, p in enumerate(self.decoder):
            if layer == 0:
                s = decoder_step(y_emb, states[0], c, p)
            else:
                s = gru_cell(x, states[layer], p)
            new_states.append(s)
            x = s
        probs = output_distribution(new_states[-1], self.out_w, self.out_b)
        return new_states, probs, alpha

    def forward_teacher_forced(
        self,
        input_ids: np.ndarray,
        target_ids: np.ndarray,
        training: bool = True,
        rng: np.random.Generator | None = None,
    ) -> tuple[ad.Tensor, list[ad.Tensor]]:
        """Teacher-forced loss over a batch; feeds gold previous tokens."""
        input_ids = np.atleast_2d(np.asarray(input_ids))
        target_ids = np.atleast_2d(np.asarray(target_ids))
        h_enc, mask, states = self.encode(input_ids, training, rng)
        probs_steps = []
        for t in range(target_ids.shape[1] - 1):
            states, probs, _ = self.decode_step(
                target_ids[:, t], states, h_enc, mask, training, rng
            )
            probs_steps.append(probs)
        batch, n_steps = target_ids.shape[0], len(probs_steps)
        flat = ad.reshape(
            ad.stack(probs_steps, axis=1),
            (batch * n_steps, self.config.label_vocab_size),
        )
        loss = masked_cross_entropy(flat, target_ids[:, 1:].reshape(-1), PAD_ID)
        if not np.isfinite(loss.data):
            raise NumericError("teacher-forced loss is not finite")
        return loss, probs_steps

    def greedy_decode(
        self, input_ids: np.ndarray, max_len: int | None = None
    ) -> list[list[int]]:
        """Argmax decoding (ties -> lowest id); PAD/SOS/UNK are never emitted.

        Accepts a single sequence or a batch; returns label ids without
        SOS/EOS for each row.
        """
        single = np.asarray(input_ids).ndim == 1
        input_ids = np.atleast_2d(np.asarray(input_ids))
        max_len = max_len or self.config.max_label_len
        h_enc, mask, states = self.encode(input_ids, training=False)
        batch = input_ids.shape[0]
        y = np.full(batch, SOS_ID, dtype=np.int64)
        done = np.zeros(batch, dtype=bool)
        outputs: list[list[int]] = [[] for _ in range(batch)]
        for _ in range(max_len):
            states, probs, _ = self.decode_step(y, states, h_enc, mask)
            p = probs.data.copy()
            p[:, [PAD_ID, SOS_ID, UNK_ID]] = -1.0
            y = p.argmax(axis=1)
            for b in range(batch):
                if done[b]:
                    continue
                if y[b] == EOS_ID:
                    done[b] = True
                else:
                    outputs[b].append(int(y[b]))
            if done.all():
                break
        return outputs[0] if single else outputs


def _bigru_rows(
    steps: Sequence[ad.Tensor], fwd: GruParams, bwd: GruParams, mask: np.ndarray
) -> tuple[list[ad.Tensor], ad.Tensor, ad.Tensor]:
    """Per-timestep concatenated BiGRU states plus the two final states.

    PAD positions carry the previous state through unchanged, so decoding
    does not depend on the amount of trailing PAD.
    """
    batch = steps[0].shape[0]
    hidden = fwd.b_z.shape[0]
    dtype = steps[0].data.dtype

    h = ad.Tensor(np.zeros((batch, hidden), dtype=dtype))
    fwd_states = []
    for t, x in enumerate(steps):
        h = ad.select(mask[:, t : t + 1], gru_cell(x, h, fwd), h)
        fwd_states.append(h)
    h = ad.Tensor(np.zeros((batch, hidden), dtype=dtype))
    bwd_states: list[ad.Tensor] = []
    for t in reversed(range(len(steps))):
        h = ad.select(mask[:, t : t + 1], gru_cell(steps[t], h, bwd), h)
        bwd_states.append(h)
    bwd_states.reverse()
    rows = [ad.concat([f, b], axis=1) for f, b in zip(fwd_states, bwd_states)]
    return rows, fwd_states[-1], bwd_states[0]


def init_model(config: ModelConfig, seed: int, dtype=np.float32) -> Seq2SeqModel:
    """Build a model with deterministic seeded initialization."""
    model = Seq2SeqModel(config, dtype=dtype)
    model.randomize(seed)
    return model


def init_decoder_state(model: Seq2SeqModel, h_enc_final: ad.Tensor) -> ad.Tensor:
    """tanh projection of the concatenated final encoder states (layer 0)."""
    w, b = model.init_proj[0]
    return ad.tanh(h_enc_final @ w + b)


# -- training --------------------------------------------------------------


def _batch_arrays(encoded: Sequence[EncodedPair]) -> tuple[np.ndarray, np.ndarray]:
    x = np.array([p.input_ids for p in encoded], dtype=np.int64)
    y = np.array([p.target_ids for p in encoded], dtype=np.int64)
    return x, y


def _mean_loss(model: Seq2SeqModel, x: np.ndarray, y: np.ndarray, batch_size: int) -> float:
    total, count = 0.0, 0
    for start in range(0, len(x), batch_size):
        xb, yb = x[start : start + batch_size], y[start : start + batch_size]
        loss, _ = model.forward_teacher_forced(xb, yb, training=False)
        total += float(loss.data) * len(xb)
        count += len(xb)
    return total / count


def train(
    train_encoded: Sequence[EncodedPair],
    valid_encoded: Sequence[EncodedPair],
    config: ModelConfig,
    model: Seq2SeqModel | None = None,
) -> tuple[Seq2SeqModel, list[dict]]:
    """Teacher-forced minibatch training; keeps the lowest-validation checkpoint.

    With an empty validation set the epoch-mean training loss stands in for
    validation loss. Deterministic for a fixed seed.
    """
    if not train_encoded:
        raise DataError("training set is empty")
    if model is None:
        model = init_model(config, config.seed)
    params = model.parameters()
    rng = np.random.default_rng(config.seed)
    x_train, y_train = _batch_arrays(train_encoded)
    x_valid, y_valid = _batch_arrays(valid_encoded) if valid_encoded else (None, None)

    history: list[dict] = []
    best_loss = np.inf
    best_state: dict[str, np.ndarray] | None = None
    best_step = 0

    for epoch in range(config.epochs):
        perm = rng.permutation(len(x_train))
        epoch_total, epoch_count = 0.0, 0
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start : start + config.batch_size]
            try:
                loss, _ = model.forward_teacher_forced(
                    x_train[idx], y_train[idx], training=True, rng=rng
                )
                ad.backward(loss, params)
            except NumericError as exc:
                raise NumericError(
                    f"divergence at epoch {epoch}, batch {start // config.batch_size}: {exc}"
                ) from exc
            model.step += 1
            if config.optimizer == "adam":
                adam_step(params, model.step, config.lr)
            else:
                rmsprop_step(params, config.lr)
            epoch_total += float(loss.data) * len(idx)
            epoch_count += len(idx)

        train_loss = epoch_total / epoch_count
        if x_valid is not None:
            valid_loss = _mean_loss(model, x_valid, y_valid, config.batch_size)
        else:
            valid_loss = train_loss
        history.append(
            {"epoch": epoch, "train_loss": train_loss, "valid_loss": valid_loss}
        )
        if valid_loss < best_loss:
            best_loss = valid_loss
            best_state = {n: p.data.copy() for n, p in model.named.items()}
            best_step = model.step
        if config.early_stop_train_loss > 0 and train_loss < config.early_stop_train_loss:
            break

    if best_state is not None:
        for name, data in best_state.items():
            model.named[name].data[...] = data
        model.step = best_step
    return model, history


# -- checkpoint persistence ------------------------------------------------


def _config_block(config: ModelConfig, step: int) -> bytes:
    lines = [f"{f.name} = {getattr(config, f.name)}" for f in fields(config)]
    lines.append(f"step = {step}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_config_text(text: str, base: ModelConfig | None = None) -> dict:
    """Parse `key = value` lines ('#' comments) into typed config values."""
    types = {f.name: f.type for f in fields(ModelConfig)}
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "step":
            out["step"] = int(value)
            continue
        if key not in types:
            raise DataError(f"config line {lineno}: unknown key {key!r}")
        ftype = str(types[key])
        if "float" in ftype:
            out[key] = float(value)
        elif "int" in ftype:
            out[key] = int(value)
        else:
            out[key] = value
    return out


def _write_tensor(fh, name: str, data: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<I", data.ndim))
    for dim in data.shape:
        fh.write(struct.pack("<I", dim))
    fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError("truncated checkpoint file")
    return buf


def _read_tensor(fh) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
    name = _read_exact(fh, name_len).decode("utf-8")
    (rank,) = struct.unpack("<I", _read_exact(fh, 4))
    shape = tuple(
        struct.unpack("<I", _read_exact(fh, 4))[0] for _ in range(rank)
    )
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(_read_exact(fh, 4 * count), dtype="<f4").reshape(shape)
    return name, data.copy()


def save_checkpoint(path: str | Path, model: Seq2SeqModel, include_adam: bool = True) -> None:
    """Binary checkpoint: magic, version, config block, named f32 tensors, Adam state."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        block = _config_block(model.config, model.step)
        fh.write(struct.pack("<I", len(block)))
        fh.write(block)
        fh.write(struct.pack("<I", len(model.named)))
        for name, p in model.named.items():
            _write_tensor(fh, name, p.data)
        fh.write(struct.pack("<B", 1 if include_adam else 0))
        if include_adam:
            fh.write(struct.pack("<I", 2 * len(model.named)))
            for name, p in model.named.items():
                _write_tensor(fh, f"{name}.m", p.adam_m)
                _write_tensor(fh, f"{name}.v", p.adam_v)


def load_checkpoint(path: str | Path) -> Seq2SeqModel:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != CHECKPOINT_MAGIC:
            raise DataError(f"{path}: not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        (block_len,) = struct.unpack("<I", _read_exact(fh, 4))
        values = parse_config_text(_read_exact(fh, block_len).decode("utf-8"))
        step = values.pop("step", 0)
        config = ModelConfig(**values)
        model = Seq2SeqModel(config)
        model.step = step
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        for _ in range(count):
            name, data = _read_tensor(fh)
            if name not in model.named:
                raise DataError(f"{path}: unexpected tensor {name!r}")
            if model.named[name].shape != data.shape:
                raise DataError(f"{path}: shape mismatch for tensor {name!r}")
            model.named[name].data[...] = data
        (adam_flag,) = struct.unpack("<B", _read_exact(fh, 1))
        if adam_flag:
            (count,) = struct.unpack("<I", _read_exact(fh, 4))
            for _ in range(count):
                name, data = _read_tensor(fh)
                base, kind = name.rsplit(".", 1)
                if base not in model.named or kind not in ("m", "v"):
                    raise DataError(f"{path}: unexpected optimizer tensor {name!r}")
                if kind == "m":
                    model.named[base].adam_m = data.astype(np.float32)
                else:
                    model.named[base].adam_v = data.astype(np.float32)
    return model


# -- random hyperparameter search ------------------------------------------


@dataclass(frozen=True)
class HParamSpace:
    optimizer: tuple[str, ...] = ("adam", "rmsprop")
    enc_layers: tuple[int, ...] = (1, 2)
    dec_layers: tuple[int, ...] = (1, 2)
    hidden: tuple[int, ...] = (50, 100, 200, 300, 400, 500)
    dropout: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4)
    lr: tuple[float, ...] = (1e-2, 1e-3, 1e-4, 1e-5)
    emb_dim: tuple[int, ...] = (200, 300, 400)

    def sample(self, rng: np.random.Generator) -> dict:
        hidden = self.hidden[rng.integers(len(self.hidden))]
        return {
            "optimizer": self.optimizer[rng.integers(len(self.optimizer))],
            "enc_layers": int(self.enc_layers[rng.integers(len(self.enc_layers))]),
            "dec_layers": int(self.dec_layers[rng.integers(len(self.dec_layers))]),
            "enc_hidden": int(hidden),
            "dec_hidden": int(hidden),
            "dropout": float(self.dropout[rng.integers(len(self.dropout))]),
            "lr": float(self.lr[rng.integers(len(self.lr))]),
            "emb_dim": int(self.emb_dim[rng.integers(len(self.emb_dim))]),
        }


def hyperparameter_search(
    space: HParamSpace,
    n_samples: int,
    seed: int,
    train_fn: Callable[[dict], float],
) -> tuple[dict, list[dict]]:
    """Uniform random search; returns (best overrides, trial log).

    train_fn receives sampled config overrides and returns a validation
    loss (non-finite means the trial diverged). Ties go to the earliest trial.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    log: list[dict] = []
    best: dict | None = None
    best_loss = np.inf
    for trial in range(n_samples):
        overrides = space.sample(rng)
        try:
            loss = float(train_fn(overrides))
        except NumericError:
            loss = float("nan")
        log.append({"trial": trial, "overrides": overrides, "valid_loss": loss})
        if np.isfinite(loss) and loss < best_loss:
            best_loss = loss
            best = overrides
    if best is None:
        raise NumericError("every hyperparameter trial diverged")
    return best, log


def make_trial_train_fn(
    train_encoded: Sequence[EncodedPair],
    valid_encoded: Sequence[EncodedPair],
    base_config: ModelConfig,
    epochs_per_trial: int,
) -> Callable[[dict], float]:
    """Budgeted trainer for hyperparameter_search trials."""

    def run(overrides: dict) -> float:
        config = replace(base_config, epochs=epochs_per_trial, **overrides)
        _, history = train(train_encoded, valid_encoded, config)
        return min(h["valid_loss"] for h in history) if history else float("nan")

    return run
