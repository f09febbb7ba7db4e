"""Question encoder and sketch decoder.

The encoder embeds question tokens and runs a bidirectional GRU; each token
vector is the projection of the two direction states plus a residual copy
of the token embedding, and the question vector is their mean. The residual
keeps word identity visible, which is what lets a label encoded on its own
match its mention inside a question. The decoder is a GRU over function-token embeddings
with dot-product attention over the token vectors:

    h_t = GRU(h_{t-1}, W[o_{t-1}])
    alpha, c_t = attention(h_t, x_1..x_n)
    g_t = h_t + c_t
    p(o_t | o_<t, x) = softmax(MLP(g_t))

``g_t`` is also the context vector for scoring the argument of ``o_t``.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import nn
from .program import NUM_TOKENS, FunctionKind, SketchState

__all__ = [
    "tokenize",
    "Vocabulary",
    "ModelConfig",
    "ParserModel",
    "EncoderOutput",
    "DecoderState",
    "Hypothesis",
    "encode",
    "decode_step",
    "initial_state",
    "greedy_decode",
    "beam_search",
    "beam_decode",
    "sample_sketch",
    "sketch_nll",
]

PAD, UNK = "<pad>", "<unk>"
_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list:
    """Lowercase, NFC, split on whitespace and punctuation."""
    return _TOKEN_RE.findall(unicodedata.normalize("NFC", text).lower())


class Vocabulary:
    def __init__(self, tokens: Iterable[str] = ()):
        self.itos = [PAD, UNK]
        self.stoi = {PAD: 0, UNK: 1}
        for tok in tokens:
            self.add(tok)

    @classmethod
    def build(cls, texts: Iterable[str]) -> "Vocabulary":
        """Vocabulary over the tokens of ``texts``, in sorted order."""
        toks = set()
        for text in texts:
            toks.update(tokenize(text))
        return cls(sorted(toks))

    def add(self, tok: str) -> int:
        if tok not in self.stoi:
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)
        return self.stoi[tok]

    @property
    def pad(self) -> int:
        return 0

    @property
    def unk(self) -> int:
        return 1

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, text: str) -> list:
        return [self.stoi.get(t, 1) for t in tokenize(text)]

    def to_json(self) -> list:
        return self.itos[2:]

    @classmethod
    def from_json(cls, items: Sequence[str]) -> "Vocabulary":
        return cls(items)


@dataclass
class ModelConfig:
    vocab_size: int
    emb_dim: int = 64
    enc_hidden: int = 64  # per direction
    d_hat: int = 64  # token / question / candidate vector size
    d: int = 64  # decoder hidden size
    mlp_hidden: int = 64
    max_len: int = 24
    seed: int = 0
    emb_scale: float = 50.0  # lookup multiplier: unit-variance vectors from the 0.02 init

    def to_json(self) -> dict:
        return asdict(self)


class ParserModel:
    """All trainable parameters plus the vocabulary.

    Group ``encoder`` holds the word embeddings and the question encoder;
    group ``default`` everything else.
    """

    def __init__(self, config: ModelConfig, vocab: Vocabulary):
        if config.vocab_size != len(vocab):
            raise ValueError("config.vocab_size must equal the vocabulary size")
        self.config = config
        self.vocab = vocab
        self.store = nn.ParameterStore()
        rng = np.random.default_rng(config.seed)
        c = config
        uni = lambda *shape: rng.uniform(-0.08, 0.08, size=shape)
        s = self.store
        s.add("emb", rng.normal(0.0, 0.02, size=(c.vocab_size, c.emb_dim)), "encoder")
        for d in ("fwd", "bwd"):
            s.add(f"enc_{d}_Wx", uni(c.emb_dim, 3 * c.enc_hidden), "encoder")
            s.add(f"enc_{d}_Uh", uni(c.enc_hidden, 3 * c.enc_hidden), "encoder")
            s.add(f"enc_{d}_b", np.zeros(3 * c.enc_hidden), "encoder")
        s.add("enc_proj_W", uni(2 * c.enc_hidden, c.d_hat), "encoder")
        s.add("enc_proj_b", np.zeros(c.d_hat), "encoder")
        if c.emb_dim != c.d_hat:
            s.add("enc_res_W", uni(c.emb_dim, c.d_hat), "encoder")
        s.add("fun_emb", rng.normal(0.0, 0.02, size=(NUM_TOKENS, c.d)))
        s.add("h0_W", uni(c.d_hat, c.d))
        s.add("h0_b", np.zeros(c.d))
        s.add("dec_Wx", uni(c.d, 3 * c.d))
        s.add("dec_Uh", uni(c.d, 3 * c.d))
        s.add("dec_b", np.zeros(3 * c.d))
        if c.d != c.d_hat:
            s.add("adapt_W", uni(c.d, c.d_hat))
        s.add("mlp_W1", uni(c.d_hat, c.mlp_hidden))
        s.add("mlp_b1", np.zeros(c.mlp_hidden))
        s.add("mlp_W2", uni(c.mlp_hidden, NUM_TOKENS))
        s.add("mlp_b2", np.zeros(NUM_TOKENS))
        self._label_cache: dict = {}

    @property
    def emb_scale(self) -> float:
        return self.config.emb_scale

    @property
    def params(self) -> dict:
        return self.store.params

    def new_grads(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.store.params.items()}

    def clone(self) -> "ParserModel":
        other = ParserModel(ModelConfig(**self.config.to_json()), Vocabulary.from_json(self.vocab.to_json()))
        other.store.load_state({k: v.copy() for k, v in self.store.params.items()})
        return other

    def extend_vocabulary(self, texts: Iterable[str]) -> int:
        """Add unseen tokens of ``texts`` with freshly drawn embeddings.

        New rows come from a generator seeded by the model seed and the
        current vocabulary size, so extension is deterministic. Returns the
        number of tokens added.
        """
        new = sorted({t for text in texts for t in tokenize(text)} - set(self.vocab.stoi))
        if not new:
            return 0
        rng = np.random.default_rng([self.config.seed, len(self.vocab)])
        rows = rng.normal(0.0, 0.02, size=(len(new), self.config.emb_dim))
        for tok in new:
            self.vocab.add(tok)
        self.store.append_rows("emb", rows)
        self.config.vocab_size = len(self.vocab)
        self._label_cache.clear()
        return len(new)

    def describe(self) -> dict:
        return {"config": self.config.to_json(), "vocab": self.vocab.to_json()}

    @classmethod
    def from_description(cls, desc: dict) -> "ParserModel":
        vocab = Vocabulary.from_json(desc["vocab"])
        return cls(ModelConfig(**desc["config"]), vocab)

    def save(self, directory) -> None:
        from pathlib import Path

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        nn.save_checkpoint(directory / "params.bin", self.store.params)
        (directory / "model.json").write_text(json.dumps(self.describe(), indent=1) + "\n")

    @classmethod
    def load(cls, directory) -> "ParserModel":
        from pathlib import Path

        directory = Path(directory)
        model = cls.from_description(json.loads((directory / "model.json").read_text()))
        model.store.load_state(nn.load_checkpoint(directory / "params.bin"))
        return model


# ---------------------------------------------------------------------------
# Encoder
# ---------------------------------------------------------------------------


@dataclass
class EncoderOutput:
    vectors: np.ndarray  # (B, T, d_hat)
    mask: np.ndarray  # (B, T) bool
    pooled: np.ndarray  # (B, d_hat)
    cache: tuple = field(default=None, repr=False)

    def single(self, i: int = 0) -> "EncoderOutput":
        n = int(self.mask[i].sum())
        return EncoderOutput(self.vectors[i:i + 1, :n], self.mask[i:i + 1, :n], self.pooled[i:i + 1])


def pad_batch(seqs: Sequence[Sequence[int]]) -> tuple:
    T = max(len(s) for s in seqs)
    ids = np.zeros((len(seqs), T), dtype=np.int64)
    mask = np.zeros((len(seqs), T), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = True
    return ids, mask


def _residual(model: ParserModel, emb: np.ndarray) -> np.ndarray:
    if "enc_res_W" in model.params:
        return emb @ model.params["enc_res_W"]
    return emb


def encoder_forward(model: ParserModel, ids: np.ndarray, mask: np.ndarray) -> EncoderOutput:
    p = model.params
    B, T = ids.shape
    H = model.config.enc_hidden
    emb = p["emb"][ids] * model.emb_scale
    states, caches = {}, {}
    for d, order in (("fwd", range(T)), ("bwd", range(T - 1, -1, -1))):
        h = np.zeros((B, H))
        hs = np.zeros((B, T, H))
        cs = [None] * T
        for t in order:
            hn, cs[t] = nn.gru_forward(emb[:, t], h, p[f"enc_{d}_Wx"], p[f"enc_{d}_Uh"], p[f"enc_{d}_b"])
            m = mask[:, t:t + 1]
            h = np.where(m, hn, h)
            hs[:, t] = h
        states[d], caches[d] = hs, cs
    both = np.concatenate([states["fwd"], states["bwd"]], axis=-1)
    vectors = both @ p["enc_proj_W"] + p["enc_proj_b"] + _residual(model, emb)
    lengths = mask.sum(axis=1, keepdims=True)
    if np.any(lengths == 0):
        raise ValueError("empty token sequence")
    pooled = (vectors * mask[..., None]).sum(axis=1) / lengths
    nn.check_finite("encoder output", vectors)
    return EncoderOutput(vectors, mask, pooled, (ids, mask, caches, both, lengths))


def encoder_backward(model: ParserModel, out: EncoderOutput, dvectors, dpooled, grads: dict) -> None:
    p = model.params
    ids, mask, caches, both, lengths = out.cache
    B, T = ids.shape
    H = model.config.enc_hidden
    dv = np.zeros_like(out.vectors) if dvectors is None else dvectors.copy()
    if dpooled is not None:
        dv += (dpooled / lengths)[:, None, :] * mask[..., None]
    dv *= mask[..., None]
    grads["enc_proj_W"] += both.reshape(-1, 2 * H).T @ dv.reshape(-1, dv.shape[-1])
    grads["enc_proj_b"] += dv.sum(axis=(0, 1))
    dboth = dv @ p["enc_proj_W"].T
    if "enc_res_W" in p:
        emb = p["emb"][ids] * model.emb_scale
        grads["enc_res_W"] += emb.reshape(-1, emb.shape[-1]).T @ dv.reshape(-1, dv.shape[-1])
        demb = dv @ p["enc_res_W"].T
    else:
        demb = dv.copy()
    for d, order, sl in (("fwd", range(T - 1, -1, -1), slice(0, H)),
                         ("bwd", range(T), slice(H, 2 * H))):
        dh = np.zeros((B, H))
        for t in order:
            dh = dh + dboth[:, t, sl]
            m = mask[:, t:t + 1]
            dx, dprev = nn.gru_backward(np.where(m, dh, 0.0), caches[d][t],
                                        p[f"enc_{d}_Wx"], p[f"enc_{d}_Uh"], grads, f"enc_{d}_")
            demb[:, t] += dx
            dh = np.where(m, dprev, dh)
    np.add.at(grads["emb"], ids[mask], model.emb_scale * demb[mask])


def encode(question: str, model: ParserModel) -> EncoderOutput:
    """Encode one question. Raises ValueError if it has no tokens."""
    ids = model.vocab.encode(question)
    if not ids:
        raise ValueError(f"question has no tokens: {question!r}")
    arr, mask = pad_batch([ids])
    return encoder_forward(model, arr, mask)


def encode_texts(texts: Sequence[str], model: ParserModel) -> EncoderOutput:
    seqs = [model.vocab.encode(t) or [model.vocab.unk] for t in texts]
    ids, mask = pad_batch(seqs)
    return encoder_forward(model, ids, mask)


# ---------------------------------------------------------------------------
# Decoder (teacher forcing, batched)
# ---------------------------------------------------------------------------


def _key(model, h):
    if "adapt_W" in model.params:
        return h @ model.params["adapt_W"]
    return h


def decoder_forward(model: ParserModel, enc: EncoderOutput, inputs: np.ndarray):
    """Run the decoder over teacher-forced ``inputs`` (B, L) of token ids.

    Returns (logits (B, L, |O|), g (B, L, d_hat), cache).
    """
    p = model.params
    B, L = inputs.shape
    h = enc.pooled @ p["h0_W"] + p["h0_b"]
    logits = np.zeros((B, L, NUM_TOKENS))
    G = np.zeros((B, L, model.config.d_hat))
    steps = []
    for t in range(L):
        x = p["fun_emb"][inputs[:, t]]
        h, gcache = nn.gru_forward(x, h, p["dec_Wx"], p["dec_Uh"], p["dec_b"])
        key = _key(model, h)
        _, ctx, acache = nn.attention_forward(key, enc.vectors, enc.mask)
        g = key + ctx
        a1 = g @ p["mlp_W1"] + p["mlp_b1"]
        z = np.maximum(a1, 0.0)
        logits[:, t] = z @ p["mlp_W2"] + p["mlp_b2"]
        G[:, t] = g
        steps.append((gcache, acache, h, g, a1, z))
    nn.check_finite("decoder logits", logits)
    return logits, G, (inputs, steps)


def decoder_backward(model: ParserModel, enc: EncoderOutput, cache, dlogits, dG, grads: dict):
    """Returns (dvectors, dpooled) for the encoder."""
    p = model.params
    inputs, steps = cache
    B, L = inputs.shape
    dvectors = np.zeros_like(enc.vectors)
    dh = np.zeros((B, model.config.d))
    for t in range(L - 1, -1, -1):
        gcache, acache, h, g, a1, z = steps[t]
        dl = dlogits[:, t]
        grads["mlp_W2"] += z.T @ dl
        grads["mlp_b2"] += dl.sum(axis=0)
        da1 = (dl @ p["mlp_W2"].T) * (a1 > 0)
        grads["mlp_W1"] += g.T @ da1
        grads["mlp_b1"] += da1.sum(axis=0)
        dg = da1 @ p["mlp_W1"].T
        if dG is not None:
            dg = dg + dG[:, t]
        dkey, dmem = nn.attention_backward(dg, acache)
        dkey = dkey + dg
        dvectors += dmem
        if "adapt_W" in p:
            grads["adapt_W"] += h.T @ dkey
            dkey = dkey @ p["adapt_W"].T
        dh = dh + dkey
        dx, dh = nn.gru_backward(dh, gcache, p["dec_Wx"], p["dec_Uh"], grads, "dec_")
        np.add.at(grads["fun_emb"], inputs[:, t], dx)
    grads["h0_W"] += enc.pooled.T @ dh
    grads["h0_b"] += dh.sum(axis=0)
    dpooled = dh @ p["h0_W"].T
    return dvectors, dpooled


def teacher_inputs(sketches: Sequence[Sequence[int]]) -> tuple:
    """(inputs, targets, mask), each (B, L): START-shifted inputs, END-terminated targets."""
    L = max(len(s) for s in sketches) + 1
    B = len(sketches)
    inputs = np.full((B, L), int(FunctionKind.END), dtype=np.int64)
    targets = np.full((B, L), int(FunctionKind.END), dtype=np.int64)
    mask = np.zeros((B, L), dtype=bool)
    for i, s in enumerate(sketches):
        seq = [int(t) for t in s]
        inputs[i, 0] = int(FunctionKind.START)
        inputs[i, 1:len(seq) + 1] = seq
        targets[i, :len(seq)] = seq
        targets[i, len(seq)] = int(FunctionKind.END)
        mask[i, :len(seq) + 1] = True
    return inputs, targets, mask


def sketch_nll(question: str, sketch: Sequence[FunctionKind], model: ParserModel,
               grads: dict | None = None) -> float:
    """Teacher-forced ``-log p(sketch | question)``.

    If ``grads`` is given, parameter gradients are accumulated into it.
    """
    enc = encode(question, model)
    inputs, targets, mask = teacher_inputs([list(sketch)])
    logits, _, cache = decoder_forward(model, enc, inputs)
    loss, dlogits, _ = nn.softmax_xent(logits[0], targets[0])
    if grads is not None:
        dvec, dpool = decoder_backward(model, enc, cache, dlogits[None], None, grads)
        encoder_backward(model, enc, dvec, dpool, grads)
    return loss


# ---------------------------------------------------------------------------
# Step-wise decoding
# ---------------------------------------------------------------------------


@dataclass
class DecoderState:
    h: np.ndarray  # (B, d)
    last: np.ndarray  # (B,) token ids
    g: np.ndarray | None = None  # (B, d_hat) from the last step
    step: int = 0


def initial_state(enc: EncoderOutput, model: ParserModel, batch: int = 1) -> DecoderState:
    p = model.params
    h = enc.pooled @ p["h0_W"] + p["h0_b"]
    h = np.repeat(h[:1], batch, axis=0)
    return DecoderState(h, np.full(batch, int(FunctionKind.START)), None, 0)


def decode_step(state: DecoderState, enc: EncoderOutput, model: ParserModel,
                max_len: int | None = None) -> tuple:
    """One decoder step for a batch of hypotheses sharing ``enc``.

    Returns (probabilities (B, |O|), next state with ``last`` unset).
    """
    limit = model.config.max_len if max_len is None else max_len
    if state.step >= limit:
        raise ValueError(f"decoder step {state.step} exceeds max length {limit}")
    p = model.params
    B = state.h.shape[0]
    x = p["fun_emb"][state.last]
    h, _ = nn.gru_forward(x, state.h, p["dec_Wx"], p["dec_Uh"], p["dec_b"])
    key = _key(model, h)
    mem = np.broadcast_to(enc.vectors[:1], (B,) + enc.vectors.shape[1:])
    mask = np.broadcast_to(enc.mask[:1], (B,) + enc.mask.shape[1:])
    _, ctx, _ = nn.attention_forward(key, mem, mask)
    g = key + ctx
    z = np.maximum(g @ p["mlp_W1"] + p["mlp_b1"], 0.0)
    logits = z @ p["mlp_W2"] + p["mlp_b2"]
    probs = nn.softmax(logits)
    return probs, DecoderState(h, state.last.copy(), g, state.step + 1)


@dataclass(frozen=True)
class Hypothesis:
    sketch: tuple  # FunctionKind tokens without END
    logprob: float
    finished: bool = True


def _allowed_mask(states: Sequence[SketchState]) -> np.ndarray:
    mask = np.zeros((len(states), NUM_TOKENS), dtype=bool)
    for i, st in enumerate(states):
        for fn in st.allowed():
            mask[i, int(fn)] = True
    return mask


def greedy_decode(question: str, model: ParserModel, max_len: int | None = None) -> Hypothesis:
    """Argmax decoding restricted to well-formed prefixes; ties -> lowest index.

    If ``max_len`` is reached before END the hypothesis is returned with
    ``finished=False``.
    """
    max_len = model.config.max_len if max_len is None else max_len
    enc = encode(question, model)
    state = initial_state(enc, model)
    grammar = SketchState(typed=True)
    tokens, logp = [], 0.0
    for _ in range(max_len):
        probs, state = decode_step(state, enc, model, max_len)
        allowed = _allowed_mask([grammar])[0]
        masked = np.where(allowed, probs[0], -1.0)
        tok = int(np.argmax(masked))
        logp += float(np.log(probs[0, tok]))
        fn = FunctionKind(tok)
        if fn is FunctionKind.END:
            return Hypothesis(tuple(tokens), logp, True)
        tokens.append(fn)
        grammar = grammar.push(fn)
        state.last = np.array([tok])
    return Hypothesis(tuple(tokens), logp, False)


def beam_search(step_fn: Callable, init, beam: int, max_len: int, end_token: int,
                allowed_fn: Callable | None = None) -> list:
    """Generic length-bounded beam search.

    ``step_fn(states, prefixes)`` returns (log-probs (B, V), new states) for
    the batch of alive hypotheses. ``allowed_fn(prefix)`` gives a boolean
    mask of admissible next tokens. Returns ``[(tokens, score, finished)]``
    best first; ties go to the lexicographically smaller token sequence.
    Hypotheses still alive at ``max_len`` fill the list only when fewer than
    ``beam`` finished ones exist.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    alive = [((), 0.0, init)]
    finished = []
    for _ in range(max_len):
        if not alive:
            break
        prefixes = [a[0] for a in alive]
        logp, new_states = step_fn([a[2] for a in alive], prefixes)
        cands = []
        for i, (prefix, score, _) in enumerate(alive):
            row = logp[i]
            ok = allowed_fn(prefix) if allowed_fn else np.ones(len(row), dtype=bool)
            for tok in np.flatnonzero(ok):
                cands.append((score + float(row[tok]), prefix + (int(tok),), i))
        cands.sort(key=lambda c: (-c[0], c[1]))
        alive = []
        for score, seq, i in cands[:beam]:
            if seq[-1] == end_token:
                finished.append((seq[:-1], score))
            else:
                alive.append((seq, score, new_states[i]))
        if len(finished) >= beam:
            best_alive = max((a[1] for a in alive), default=-np.inf)
            worst_kept = sorted(s for _, s in finished)[-beam]
            if best_alive < worst_kept:
                break
    out = sorted(((seq, score, True) for seq, score in finished), key=lambda f: (-f[1], f[0]))
    if len(out) < beam:
        rest = sorted(((a[0], a[1], False) for a in alive), key=lambda f: (-f[1], f[0]))
        out += rest[:beam - len(out)]
    return out[:beam]


def beam_decode(question: str, model: ParserModel, beam: int = 5,
                max_len: int | None = None, enc: EncoderOutput | None = None) -> list:
    """Top sketches by total log-probability, restricted to well-formed prefixes."""
    max_len = model.config.max_len if max_len is None else max_len
    enc = encode(question, model) if enc is None else enc
    grammar_cache: dict = {(): SketchState(typed=True)}

    def grammar(prefix):
        if prefix not in grammar_cache:
            grammar_cache[prefix] = grammar(prefix[:-1]).push(FunctionKind(prefix[-1]))
        return grammar_cache[prefix]

    def allowed(prefix):
        return _allowed_mask([grammar(prefix)])[0]

    def step(states, prefixes):
        h = np.concatenate([s[0] for s in states], axis=0)
        last = np.array([p[-1] if p else int(FunctionKind.START) for p in prefixes])
        st = DecoderState(h, last, None, len(prefixes[0]))
        probs, nxt = decode_step(st, enc, model, max_len)
        with np.errstate(divide="ignore"):
            logp = np.log(probs)
        return logp, [(nxt.h[i:i + 1],) for i in range(len(states))]

    init = (initial_state(enc, model).h,)
    found = beam_search(step, init, beam, max_len, int(FunctionKind.END), allowed)
    return [Hypothesis(tuple(FunctionKind(t) for t in seq), score, done) for seq, score, done in found]


def sample_sketch(question: str, model: ParserModel, rng: np.random.Generator,
                  temperature: float = 1.0, max_len: int | None = None,
                  enc: EncoderOutput | None = None) -> Hypothesis:
    """Sample from the policy restricted to well-formed prefixes.

    ``logprob`` is under the renormalized (masked) distribution. Temperature
    0 gives the greedy sketch.
    """
    max_len = model.config.max_len if max_len is None else max_len
    enc = encode(question, model) if enc is None else enc
    state = initial_state(enc, model)
    grammar = SketchState(typed=True)
    tokens, logp = [], 0.0
    for _ in range(max_len):
        probs, state = decode_step(state, enc, model, max_len)
        allowed = _allowed_mask([grammar])[0]
        if temperature == 0:
            tok = int(np.argmax(np.where(allowed, probs[0], -1.0)))
        else:
            with np.errstate(divide="ignore"):
                logits = np.log(probs[0]) / temperature
            q = nn.softmax(logits, allowed)
            tok = int(rng.choice(NUM_TOKENS, p=q))
        renorm = probs[0] * allowed
        logp += float(np.log(renorm[tok] / renorm.sum()))
        fn = FunctionKind(tok)
        if fn is FunctionKind.END:
            return Hypothesis(tuple(tokens), logp, True)
        tokens.append(fn)
        grammar = grammar.push(fn)
        state.last = np.array([tok])
    return Hypothesis(tuple(tokens), logp, False)
