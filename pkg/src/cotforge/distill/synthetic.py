"""Bundled synthetic sentiment-reasoning task for desk-scale distillation runs.

Each prompt mixes filler words with sentiment cue words; the label is the
majority polarity (neutral when balanced).  The reasoning target is a short
templated sentence built from the first cue and the label, so both heads
have a learnable signal.
"""
from __future__ import annotations

import numpy as np

from dataclasses import replace

from ..kernels import IGNORE_INDEX
from .losses import LossWeights, TokenizedExample
from .model import ToyModel
from .train import ASSISTANT, DESK_CONFIG, STUDENT, TrainConfig, accuracy, train

SPECIAL = ["<pad>", "<unk>", "<bos>", "<sep>", "<eos>"]
POS = ["good", "great", "love", "happy", "win"]
NEG = ["bad", "sad", "hate", "angry", "lost"]
FILLER = ["the", "a", "today", "city", "game", "photo", "team", "news", "my", "we"]
GLUE = ["text", "says", "image", "agrees", "so", "overall", "none"]
LABEL_WORDS = ["negative", "neutral", "positive"]
VOCAB = SPECIAL + POS + NEG + FILLER + GLUE + LABEL_WORDS
STOI = {w: i for i, w in enumerate(VOCAB)}


def vocab_size() -> int:
    return len(VOCAB)


def make_example(rng: np.random.Generator, prompt_words: int = 6) -> TokenizedExample:
    label = int(rng.integers(0, 3))
    n_cue = int(rng.integers(1, 3))
    if label == 2:
        cues = list(rng.choice(POS, n_cue))
    elif label == 0:
        cues = list(rng.choice(NEG, n_cue))
    else:
        cues = [str(rng.choice(POS)), str(rng.choice(NEG))] if rng.random() < 0.5 else []
    fill = list(rng.choice(FILLER, prompt_words - len(cues)))
    words = fill + cues
    rng.shuffle(words)
    first_cue = next((w for w in words if w in POS or w in NEG), "none")
    chain = ["text", "says", first_cue, "image", "agrees", "so", "overall", LABEL_WORDS[label]]
    seq = [STOI["<bos>"]] + [STOI[w] for w in words] + [STOI["<sep>"]] + [STOI[w] for w in chain] + [STOI["<eos>"]]
    inp = np.array(seq[:-1], dtype=np.int64)
    tgt = np.array(seq[1:], dtype=np.int64)
    p = len(words) + 2
    tgt[:p - 1] = IGNORE_INDEX
    return TokenizedExample(inp, tgt, label, p)


def generate(n: int, seed: int) -> list[TokenizedExample]:
    rng = np.random.default_rng(seed)
    return [make_example(rng) for _ in range(n)]


def desk_run(seed: int, lambdas=(0.3, 0.0), n_train: int = 200, n_test: int = 300, assistant_dim: int = 16,
             student_dim: int = 12, cfg: TrainConfig = DESK_CONFIG) -> dict:
    """Train one assistant, then one student per soft-label weight, on a fresh synthetic split.

    Returns test accuracies and the student training logs keyed by lambda.
    """
    cfg = replace(cfg, seed=seed)
    data = generate(n_train, seed)
    test = generate(n_test, seed + 10_000)
    V = vocab_size()
    assistant = ToyModel(V, assistant_dim, seed=seed)
    train(assistant, data, cfg, LossWeights(), ASSISTANT)
    out = {"assistant": accuracy(assistant, test), "students": {}}
    for lam in lambdas:
        student = ToyModel(V, student_dim, seed=seed + 500)
        res = train(student, data, cfg, LossWeights(lambda_kd=lam), STUDENT, assistant)
        out["students"][lam] = {"accuracy": accuracy(student, test), "log": res.log}
    return out
