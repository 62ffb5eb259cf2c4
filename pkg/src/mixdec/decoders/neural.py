"""Tiny recurrent decoder bank with per-decoder residual adapters.

Architecture (all float64, trained by hand-written backprop):

  encoder   cvec = mean of context token embeddings
            h_0  = tanh(W_enc cvec + b_enc)
  state     s_j  = hd_j + W1_k relu(W2_k hd_j)      (adapter of decoder k)
            where hd_j is h_j after (inverted) dropout
  recurrence h_j = tanh(W_xh emb[y_{j-1}] + W_hh s_{j-1} + b_h)   j >= 1
  output    logits_j = W_out s_j + b_out;  predicts token y_j

The recurrence consumes the adapted state, so decoders with different
adapters follow genuinely different trajectories; embeddings, recurrence
and output projection are shared across all K decoders.

Dropout is only applied when a ``dropout_seed`` is passed; masks are a pure
function of that seed, so callers can share one mask per sample across
decoders (keeping tied decoders exactly synchronous) or disable noise
entirely for likelihood scoring.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .adapter import AdapterLayer, init_adapter, relu
from .base import MAX_CONTEXT_LEN, MAX_RESPONSE_LEN, Vocab

FloatArray = NDArray[np.float64]
TokenSeq = tuple[int, ...]

#: names of the parameter tensors shared by all decoders
SHARED_PARAMS = ("emb", "w_enc", "b_enc", "w_xh", "w_hh", "b_h", "w_out", "b_out")


@dataclass
class NeuralBank:
    vocab: Vocab
    n_decoders: int
    d: int
    d_inner: int
    dropout: float
    emb: FloatArray  # (V, d)
    w_enc: FloatArray  # (d, d)
    b_enc: FloatArray  # (d,)
    w_xh: FloatArray  # (d, d)
    w_hh: FloatArray  # (d, d)
    b_h: FloatArray  # (d,)
    w_out: FloatArray  # (V, d)
    b_out: FloatArray  # (V,)
    adapters: list[AdapterLayer]
    rng: np.random.Generator
    max_context_len: int = MAX_CONTEXT_LEN
    max_response_len: int = MAX_RESPONSE_LEN

    @property
    def family(self) -> str:
        return "neural"

    # -- plain forward pieces (eval mode), also used by decoding ------------

    def context_vec(self, context: TokenSeq) -> FloatArray:
        idx = np.asarray(context, dtype=np.int64)
        return self.emb[idx].mean(axis=0)

    def init_state(self, k: int, context: TokenSeq) -> FloatArray:
        h0 = np.tanh(self.w_enc @ self.context_vec(context) + self.b_enc)
        return self._adapt(k, h0)

    def step_state(self, k: int, state: FloatArray, token: int) -> FloatArray:
        h = np.tanh(self.w_xh @ self.emb[token] + self.w_hh @ state + self.b_h)
        return self._adapt(k, h)

    def state_logits(self, state: FloatArray) -> FloatArray:
        return self.w_out @ state + self.b_out

    def _adapt(self, k: int, h: FloatArray) -> FloatArray:
        ad = self.adapters[k]
        return h + ad.w1 @ relu(ad.w2 @ h)


def init_neural_bank(
    vocab: Vocab,
    n_decoders: int,
    d: int = 32,
    d_inner: int = 8,
    dropout: float = 0.1,
    seed: int = 0,
    adapter_init: str = "tied",
    max_context_len: int = MAX_CONTEXT_LEN,
    max_response_len: int = MAX_RESPONSE_LEN,
) -> NeuralBank:
    """Seeded bank construction.

    adapter_init:
      * "tied": one W2 draw copied to every decoder, W1 = 0 — all decoders
        are parametrically identical (the synchronous-collapse condition).
      * "random": independent W2 and W1 draws per decoder.
    """
    if adapter_init not in ("tied", "random"):
        raise ValueError(f"unknown adapter_init {adapter_init!r}")
    if not 0.0 <= dropout < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    v = vocab.size
    bank = NeuralBank(
        vocab=vocab,
        n_decoders=n_decoders,
        d=d,
        d_inner=d_inner,
        dropout=dropout,
        emb=rng.normal(0.0, 0.5, size=(v, d)),
        w_enc=rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, d)),
        b_enc=np.zeros(d),
        w_xh=rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, d)),
        w_hh=rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, d)),
        b_h=np.zeros(d),
        w_out=rng.normal(0.0, 1.0 / np.sqrt(d), size=(v, d)),
        b_out=np.zeros(v),
        adapters=[],
        rng=rng,
        max_context_len=max_context_len,
        max_response_len=max_response_len,
    )
    if adapter_init == "tied":
        proto = init_adapter(d, d_inner, rng, random_w1=False)
        bank.adapters = [
            AdapterLayer(w1=proto.w1.copy(), w2=proto.w2.copy())
            for _ in range(n_decoders)
        ]
    else:
        bank.adapters = [
            init_adapter(d, d_inner, rng, random_w1=True) for _ in range(n_decoders)
        ]
    return bank


def reset_adapters(bank: NeuralBank, adapter_init: str, seed: int) -> NeuralBank:
    """Redraw every adapter in place, leaving the shared body untouched.

    Used between the shared-decoder pretraining pass and EM: the same body
    can then be branched with tied or random adapters.
    """
    if adapter_init not in ("tied", "random"):
        raise ValueError(f"unknown adapter_init {adapter_init!r}")
    rng = np.random.default_rng(seed)
    if adapter_init == "tied":
        proto = init_adapter(bank.d, bank.d_inner, rng, random_w1=False)
        bank.adapters = [
            AdapterLayer(w1=proto.w1.copy(), w2=proto.w2.copy())
            for _ in range(bank.n_decoders)
        ]
    else:
        bank.adapters = [
            init_adapter(bank.d, bank.d_inner, rng, random_w1=True)
            for _ in range(bank.n_decoders)
        ]
    return bank


def _dropout_masks(
    bank: NeuralBank, n_states: int, dropout_seed: int | tuple[int, ...] | None
) -> list[FloatArray] | None:
    if dropout_seed is None or bank.dropout == 0.0:
        return None
    rng = np.random.default_rng(dropout_seed)
    keep = 1.0 - bank.dropout
    return [
        (rng.random(bank.d) < keep).astype(np.float64) / keep for _ in range(n_states)
    ]


def _log_softmax(logits: FloatArray) -> FloatArray:
    z = logits - logits.max()
    return z - np.log(np.exp(z).sum())


def _forward(
    bank: NeuralBank,
    k: int,
    context: TokenSeq,
    response: TokenSeq,
    masks: list[FloatArray] | None,
) -> dict:
    """Run the full pass, keeping every intermediate needed for backprop."""
    ad = bank.adapters[k]
    t_len = len(response)
    cvec = bank.context_vec(context)
    h = [np.empty(0)] * t_len
    hd = [np.empty(0)] * t_len
    u = [np.empty(0)] * t_len
    s = [np.empty(0)] * t_len
    logps = np.empty(t_len)
    lsm = [np.empty(0)] * t_len

    h[0] = np.tanh(bank.w_enc @ cvec + bank.b_enc)
    for j in range(t_len):
        if j > 0:
            h[j] = np.tanh(
                bank.w_xh @ bank.emb[response[j - 1]] + bank.w_hh @ s[j - 1] + bank.b_h
            )
        hd[j] = h[j] * masks[j] if masks is not None else h[j]
        u[j] = ad.w2 @ hd[j]
        s[j] = hd[j] + ad.w1 @ relu(u[j])
        lsm[j] = _log_softmax(bank.w_out @ s[j] + bank.b_out)
        logps[j] = lsm[j][response[j]]

    return {
        "cvec": cvec,
        "h": h,
        "hd": hd,
        "u": u,
        "s": s,
        "lsm": lsm,
        "logp": float(logps.sum()),
    }


def log_prob(
    bank,
    k: int,
    context: TokenSeq,
    response: TokenSeq,
    dropout_seed: int | tuple[int, ...] | None = None,
) -> float:
    """log P(response | decoder k, context); family-dispatched.

    Tabular banks ignore ``dropout_seed``.  For neural banks the value is
    always <= 0 and deterministic given (parameters, inputs, seed).
    """
    if not 0 <= k < bank.n_decoders:
        raise ValueError(f"decoder index {k} out of range")
    if bank.family == "tabular":
        return bank.log_prob(k, context, response)
    masks = _dropout_masks(bank, len(response), dropout_seed)
    return _forward(bank, k, context, response, masks)["logp"]


def grad_step(
    bank: NeuralBank,
    k: int,
    context: TokenSeq,
    response: TokenSeq,
    weight: float,
    lr: float,
    update_shared: bool = False,
    update_adapter: bool = True,
    dropout_seed: int | tuple[int, ...] | None = None,
) -> float:
    """One gradient-ascent step on weight * log P(response | k, context).

    Updates decoder k's adapter in place (and the shared tensors when
    ``update_shared``).  weight == 0 or lr == 0 leaves every parameter
    bit-identical.  Returns the (pre-update) log-probability.

    Raises:
      FloatingPointError: if any gradient entry is non-finite.
    """
    if bank.family != "neural":
        raise ValueError("grad_step applies to the neural family only")
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"weight must lie in [0, 1], got {weight}")
    if weight == 0.0:
        return 0.0

    masks = _dropout_masks(bank, len(response), dropout_seed)
    cache = _forward(bank, k, context, response, masks)
    grads = backward(bank, k, context, response, cache, masks)
    if lr == 0.0:
        return cache["logp"]

    step = lr * weight
    if update_adapter:
        ad = bank.adapters[k]
        ad.w1 += step * grads["w1"]
        ad.w2 += step * grads["w2"]
    if update_shared:
        for name in SHARED_PARAMS:
            arr = getattr(bank, name)
            arr += step * grads[name]
    return cache["logp"]


def backward(
    bank: NeuralBank,
    k: int,
    context: TokenSeq,
    response: TokenSeq,
    cache: dict,
    masks: list[FloatArray] | None,
) -> dict[str, FloatArray]:
    """Gradients of log P w.r.t. every tensor (shared + decoder k's adapter)."""
    ad = bank.adapters[k]
    t_len = len(response)
    h, hd, u, s, lsm = cache["h"], cache["hd"], cache["u"], cache["s"], cache["lsm"]
    cvec = cache["cvec"]

    g = {name: np.zeros_like(getattr(bank, name)) for name in SHARED_PARAMS}
    g["w1"] = np.zeros_like(ad.w1)
    g["w2"] = np.zeros_like(ad.w2)

    carry = np.zeros(bank.d)  # dJ/ds_j flowing back through the recurrence
    for j in range(t_len - 1, -1, -1):
        dlogits = -np.exp(lsm[j])
        dlogits[response[j]] += 1.0
        g["w_out"] += np.outer(dlogits, s[j])
        g["b_out"] += dlogits
        ds = bank.w_out.T @ dlogits + carry

        phi = relu(u[j])
        g["w1"] += np.outer(ds, phi)
        du = (ad.w1.T @ ds) * (u[j] > 0)
        g["w2"] += np.outer(du, hd[j])
        dhd = ds + ad.w2.T @ du
        dh = dhd * masks[j] if masks is not None else dhd
        dpre = dh * (1.0 - h[j] ** 2)

        if j > 0:
            prev_tok = response[j - 1]
            g["w_xh"] += np.outer(dpre, bank.emb[prev_tok])
            g["emb"][prev_tok] += bank.w_xh.T @ dpre
            g["w_hh"] += np.outer(dpre, s[j - 1])
            g["b_h"] += dpre
            carry = bank.w_hh.T @ dpre
        else:
            g["w_enc"] += np.outer(dpre, cvec)
            g["b_enc"] += dpre
            dcvec = bank.w_enc.T @ dpre / len(context)
            np.add.at(g["emb"], np.asarray(context, dtype=np.int64), dcvec)

    for name, arr in g.items():
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(
                f"non-finite gradient in {name} "
                f"(context len {len(context)}, response len {t_len}, decoder {k})"
            )
    return g
