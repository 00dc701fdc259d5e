"""Binary model checkpoints.

Layout: a fixed header (magic, version, model kind, dimensions,
activation, vocabulary mode, embedding mode, mixture weight), then every
parameter tensor as little-endian 8-byte IEEE floats in row-major
declaration order, then the vocabulary dump as UTF-8 text to the end of
the file. Numbers round-trip bit-exactly.
"""

from __future__ import annotations

import struct

import numpy as np

from .corpus import EmbeddingTable, Vocabulary, format_vocabulary, parse_vocabulary
from .ctx_lm import CtxModelParams, LSTMParams, MixtureConfig
from .docnade import DocNADEParams

MAGIC = b"TTVC"
VERSION = 1

MODEL_KINDS = ("docnade", "ctx-docnade", "ctx-docnadee")
_ACTS = ("sigmoid", "tanh")
_VOCAB_MODES = ("RV", "FV")

_HEADER = struct.Struct("<4sIIIIIIIId")  # magic, version, kind, K, H, depth, act, vmode, emode, lam


class CheckpointError(ValueError):
    """The checkpoint file is unreadable or structurally invalid."""


def model_kind(model) -> str:
    if isinstance(model, DocNADEParams):
        return "docnade"
    if isinstance(model, CtxModelParams):
        return "ctx-docnadee" if model.mix.embedding_mode == "shared_w_plus_e" else "ctx-docnade"
    raise TypeError(f"unsupported model type {type(model).__name__}")


def _tensors(model) -> list[np.ndarray]:
    dn = model.dn if isinstance(model, CtxModelParams) else model
    out = [dn.W, dn.U, dn.b, dn.e, dn.W_deep, dn.e_deep]
    if isinstance(model, CtxModelParams):
        out += [model.lm.Wx, model.lm.Wh, model.lm.bias, model.lm.w_bos]
        if model.mix.embedding_mode == "shared_w_plus_e":
            out.append(model.embeddings.vectors)
    return out


def save_checkpoint(model, vocab: Vocabulary, path: str) -> None:
    kind = model_kind(model)
    dn = model.dn if isinstance(model, CtxModelParams) else model
    lam = model.mix.lam if isinstance(model, CtxModelParams) else 0.0
    emode = (
        1
        if isinstance(model, CtxModelParams) and model.mix.embedding_mode == "shared_w_plus_e"
        else 0
    )
    if vocab.size != dn.vocab_size:
        raise CheckpointError(
            f"vocabulary size {vocab.size} does not match model vocabulary {dn.vocab_size}"
        )
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        MODEL_KINDS.index(kind),
        dn.vocab_size,
        dn.hidden_size,
        dn.depth,
        _ACTS.index(dn.activation),
        _VOCAB_MODES.index(vocab.mode),
        emode,
        lam,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for t in _tensors(model):
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
        fh.write(format_vocabulary(vocab).encode("utf-8"))


def _read_tensor(buf: memoryview, offset: int, shape: tuple, path: str):
    count = int(np.prod(shape)) if shape else 1
    nbytes = count * 8
    if offset + nbytes > len(buf):
        raise CheckpointError(f"{path}: truncated checkpoint (expected tensor of shape {shape})")
    arr = np.frombuffer(buf[offset : offset + nbytes], dtype="<f8").reshape(shape)
    return np.ascontiguousarray(arr, dtype=np.float64), offset + nbytes


def load_checkpoint(path: str):
    """Returns (model, vocabulary); inverse of save_checkpoint."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot open checkpoint {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    magic, version, kind_id, K, H, depth, act_id, vmode_id, emode, lam = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes (not a checkpoint)")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    if kind_id >= len(MODEL_KINDS):
        raise CheckpointError(f"{path}: unknown model kind {kind_id}")
    kind = MODEL_KINDS[kind_id]
    buf = memoryview(blob)
    off = _HEADER.size
    W, off = _read_tensor(buf, off, (H, K), path)
    U, off = _read_tensor(buf, off, (K, H), path)
    b, off = _read_tensor(buf, off, (K,), path)
    e, off = _read_tensor(buf, off, (H,), path)
    W_deep, off = _read_tensor(buf, off, (depth - 1, H, H), path)
    e_deep, off = _read_tensor(buf, off, (depth - 1, H), path)
    dn = DocNADEParams(
        W=W, U=U, b=b, e=e, W_deep=W_deep, e_deep=e_deep, activation=_ACTS[act_id]
    )
    if kind == "docnade":
        model = dn
    else:
        Wx, off = _read_tensor(buf, off, (depth, 4 * H, H), path)
        Wh, off = _read_tensor(buf, off, (depth, 4 * H, H), path)
        bias, off = _read_tensor(buf, off, (depth, 4 * H), path)
        w_bos, off = _read_tensor(buf, off, (H,), path)
        embeddings = None
        mode = "shared_w"
        if emode == 1:
            E, off = _read_tensor(buf, off, (K, H), path)
            covered = np.any(E != 0.0, axis=1)
            embeddings = EmbeddingTable(vectors=E, covered=covered, dimension=H)
            mode = "shared_w_plus_e"
        model = CtxModelParams(
            dn=dn,
            lm=LSTMParams(Wx=Wx, Wh=Wh, bias=bias, w_bos=w_bos),
            mix=MixtureConfig(lam=lam, embedding_mode=mode),
            embeddings=embeddings,
        )
    try:
        vocab = parse_vocabulary(blob[off:].decode("utf-8"), _VOCAB_MODES[vmode_id])
    except (UnicodeDecodeError, ValueError) as exc:
        raise CheckpointError(f"{path}: invalid vocabulary block: {exc}") from exc
    if vocab.size != K:
        raise CheckpointError(f"{path}: vocabulary block has {vocab.size} entries, header says {K}")
    return model, vocab
