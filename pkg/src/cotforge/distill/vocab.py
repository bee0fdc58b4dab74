"""Word-level vocabulary and conversion of reasoning datasets to training examples."""
from __future__ import annotations

import json
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..core import ReasoningDataset, Sample
from ..kernels import IGNORE_INDEX
from ..text import tokenize
from .losses import TokenizedExample

PAD, UNK, BOS, SEP, EOS = "<pad>", "<unk>", "<bos>", "<sep>", "<eos>"
SPECIALS = (PAD, UNK, BOS, SEP, EOS)


class Vocab:
    def __init__(self, tokens: Sequence[str]):
        self.itos = list(tokens)
        if self.itos[:len(SPECIALS)] != list(SPECIALS):
            raise ValueError("vocabulary must start with the special tokens")
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    @classmethod
    def build(cls, texts: Iterable[str], min_count: int = 1, max_size: int | None = None) -> "Vocab":
        counts = Counter(tok for t in texts for tok in tokenize(t))
        words = sorted((w for w, c in counts.items() if c >= min_count and w not in SPECIALS),
                       key=lambda w: (-counts[w], w))
        if max_size is not None:
            words = words[:max(0, max_size - len(SPECIALS))]
        return cls(list(SPECIALS) + sorted(words))

    def encode(self, text: str) -> list[int]:
        unk = self.stoi[UNK]
        return [self.stoi.get(t, unk) for t in tokenize(text)]

    def decode(self, ids: Iterable[int]) -> str:
        return " ".join(self.itos[i] for i in ids if self.itos[i] not in SPECIALS)

    def id(self, token: str) -> int:
        return self.stoi[token]

    def to_json(self) -> str:
        return json.dumps({"tokens": self.itos}, ensure_ascii=False)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        return cls(json.loads(Path(path).read_text(encoding="utf-8"))["tokens"])


def prompt_text(sample: Sample) -> str:
    return sample.text if sample.aspect is None else f"{sample.text} aspect : {sample.aspect}"


def prompt_ids(sample: Sample, vocab: Vocab, max_prompt: int = 32) -> list[int]:
    return [vocab.id(BOS)] + vocab.encode(prompt_text(sample))[:max_prompt] + [vocab.id(SEP)]


def encode_example(sample: Sample, reasoning: str, vocab: Vocab, class_target: int | None = None,
                   max_prompt: int = 32, max_chain: int = 48) -> TokenizedExample:
    """Teacher-forced example: ``[bos] prompt [sep] reasoning [eos]`` shifted by one.

    Targets that fall inside the prompt are masked with -100.
    """
    head = prompt_ids(sample, vocab, max_prompt)
    seq = head + vocab.encode(reasoning)[:max_chain] + [vocab.id(EOS)]
    inp = np.array(seq[:-1], dtype=np.int64)
    tgt = np.array(seq[1:], dtype=np.int64)
    p = len(head)
    tgt[:p - 1] = IGNORE_INDEX
    label = sample.gold_label.index if class_target is None else class_target
    return TokenizedExample(inp, tgt, label, p)


def dataset_texts(ds: ReasoningDataset) -> list[str]:
    return [t for s, r in ds for t in (prompt_text(s), r.chain.as_text())]


def encode_dataset(ds: ReasoningDataset, vocab: Vocab, **kw) -> list[TokenizedExample]:
    """Class targets are the gold labels; every record in a training set agrees with gold."""
    return [encode_example(s, r.chain.as_text(), vocab, **kw) for s, r in ds]
