"""Single-file checkpoints for decoder banks.

A checkpoint is one ``.npz`` blob: raw float64 parameter arrays plus a JSON
metadata entry (family, vocab, config, RNG state).  Arrays round-trip
bit-exactly, so a reloaded bank reproduces log_prob outputs to the last bit.
"""

from __future__ import annotations

import json

import numpy as np

from .adapter import AdapterLayer
from .base import Vocab
from .neural import SHARED_PARAMS, NeuralBank
from .tabular import TabularBank


def _pack_seqs(seqs: list[tuple[int, ...]]) -> tuple[np.ndarray, np.ndarray]:
    flat = np.asarray([t for s in seqs for t in s], dtype=np.int64)
    lens = np.asarray([len(s) for s in seqs], dtype=np.int64)
    return flat, lens


def _unpack_seqs(flat: np.ndarray, lens: np.ndarray) -> list[tuple[int, ...]]:
    out, pos = [], 0
    for n in lens:
        out.append(tuple(int(x) for x in flat[pos : pos + n]))
        pos += n
    return out


def save_bank(path: str, bank) -> None:
    """Write a self-describing checkpoint for a tabular or neural bank."""
    if bank.family == "neural":
        meta = {
            "family": "neural",
            "vocab_size": bank.vocab.size,
            "n_decoders": bank.n_decoders,
            "d": bank.d,
            "d_inner": bank.d_inner,
            "dropout": bank.dropout,
            "max_context_len": bank.max_context_len,
            "max_response_len": bank.max_response_len,
            "rng_state": bank.rng.bit_generator.state,
        }
        arrays = {name: getattr(bank, name) for name in SHARED_PARAMS}
        arrays["ad_w1"] = np.stack([a.w1 for a in bank.adapters])
        arrays["ad_w2"] = np.stack([a.w2 for a in bank.adapters])
    elif bank.family == "tabular":
        ctx_flat, ctx_lens = _pack_seqs(bank.contexts)
        tpl_flat, tpl_lens = _pack_seqs(bank.templates)
        meta = {
            "family": "tabular",
            "vocab_size": bank.vocab.size,
            "n_decoders": bank.n_decoders,
            "alpha": bank.alpha,
            "rng_state": None,
        }
        arrays = {
            "tables": bank.tables,
            "ctx_flat": ctx_flat,
            "ctx_lens": ctx_lens,
            "tpl_flat": tpl_flat,
            "tpl_lens": tpl_lens,
        }
    else:
        raise ValueError(f"unknown bank family {bank.family!r}")
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_bank(path: str):
    """Restore a bank saved by :func:`save_bank`."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta["family"] == "neural":
            k = meta["n_decoders"]
            adapters = [
                AdapterLayer(w1=data["ad_w1"][i].copy(), w2=data["ad_w2"][i].copy())
                for i in range(k)
            ]
            rng = np.random.default_rng()
            rng.bit_generator.state = meta["rng_state"]
            return NeuralBank(
                vocab=Vocab(meta["vocab_size"]),
                n_decoders=k,
                d=meta["d"],
                d_inner=meta["d_inner"],
                dropout=meta["dropout"],
                adapters=adapters,
                rng=rng,
                max_context_len=meta["max_context_len"],
                max_response_len=meta["max_response_len"],
                **{name: data[name].copy() for name in SHARED_PARAMS},
            )
        if meta["family"] == "tabular":
            return TabularBank(
                vocab=Vocab(meta["vocab_size"]),
                n_decoders=meta["n_decoders"],
                alpha=meta["alpha"],
                contexts=_unpack_seqs(data["ctx_flat"], data["ctx_lens"]),
                templates=_unpack_seqs(data["tpl_flat"], data["tpl_lens"]),
                tables=data["tables"].copy(),
            )
    raise ValueError(f"unknown bank family {meta['family']!r}")
