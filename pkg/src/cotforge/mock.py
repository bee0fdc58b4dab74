"""Deterministic stand-ins for the teacher, assistant and embedding endpoints.

These let the full pipeline run offline.  Labels come from a small sentiment
lexicon; reasoning text is assembled from fixed phrases so that toy models
have something learnable to imitate.
"""
from __future__ import annotations

import hashlib
import re

import numpy as np

from .core import ReasoningChain, SentimentLabel
from .parsing import format_response

POSITIVE_WORDS = frozenset(
    "good great love happy win wonderful amazing best beautiful proud excited fun enjoy awesome thanks glad".split()
)
NEGATIVE_WORDS = frozenset(
    "bad sad hate angry terrible awful worst lost fear crash sick broken cry pain disaster ugly".split()
)

_TEXT_RE = re.compile(r"^Text:\s*(.*)$", re.MULTILINE)
_ASPECT_RE = re.compile(r"^Aspect term:\s*(.*)$", re.MULTILINE)
_GOLD_RE = re.compile(r"^Annotated label:\s*(\w+)", re.MULTILINE)


def words(text: str) -> list[str]:
    return re.findall(r"[a-z0-9']+", text.lower())


def lexicon_label(text: str) -> SentimentLabel:
    toks = words(text)
    pos = sum(t in POSITIVE_WORDS for t in toks)
    neg = sum(t in NEGATIVE_WORDS for t in toks)
    if pos > neg:
        return SentimentLabel.POSITIVE
    if neg > pos:
        return SentimentLabel.NEGATIVE
    return SentimentLabel.NEUTRAL


def _digest(*parts) -> int:
    h = hashlib.sha256("\x1f".join(map(str, parts)).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "little")


def simulated_chain(text: str, label: SentimentLabel, aspect: str | None = None, has_image: bool = True) -> ReasoningChain:
    toks = words(text)
    cues = [t for t in toks if t in POSITIVE_WORDS or t in NEGATIVE_WORDS]
    cue_txt = " and ".join(cues[:3]) if cues else "no strong words"
    target = f"the aspect {aspect}" if aspect else "the post"
    mood = {"positive": "a warm and bright", "negative": "a dark and tense", "neutral": "a plain and calm"}[label.value]
    return ReasoningChain(
        text_analysis=f"the text about {target} uses {cue_txt} so the words lean {label.value}",
        image_analysis=f"the image shows {mood} scene" if has_image else "N/A",
        conflict_resolution=f"text and image agree so the {label.value} cue dominates",
        conclusion=f"overall {target} is {label.value}",
    )


class SimulatedEndpoint:
    """Responder for :class:`~cotforge.gateway.MockTransport`.

    ``defect_rate`` makes a deterministic fraction of responses malformed
    (keyed on the request body, so ARC retries with a new seed can succeed).
    ``flip_rate`` makes the same kind of fraction of label-free predictions wrong.
    """

    def __init__(self, defect_rate: float = 0.0, flip_rate: float = 0.0, salt: str = "", dim: int = 32):
        self.defect_rate = defect_rate
        self.flip_rate = flip_rate
        self.salt = salt
        self.dim = dim

    def __call__(self, path: str, body: dict):
        if path.endswith("/embeddings"):
            return [hashed_embedding(t, self.dim) for t in body["input"]]
        user = body["messages"][-1]["content"]
        if isinstance(user, list):
            has_image = any(part.get("type") == "image_url" for part in user)
            user = "\n".join(part.get("text", "") for part in user if part.get("type") == "text")
        else:
            has_image = False
        m = _TEXT_RE.search(user)
        text = m.group(1) if m else user
        am = _ASPECT_RE.search(user)
        aspect = am.group(1).strip() if am else None
        gm = _GOLD_RE.search(user)
        key = _digest(self.salt, text, aspect, body.get("seed"), body.get("temperature"), body.get("model"))
        if gm:
            label = SentimentLabel.parse(gm.group(1))
        else:
            label = lexicon_label(text)
            if (key % 1000) / 1000.0 < self.flip_rate:
                label = SentimentLabel.from_index((label.index + 1 + (key >> 10) % 2) % 3)
        chain = simulated_chain(text, label, aspect, has_image)
        out = format_response(chain, label)
        if ((key >> 20) % 1000) / 1000.0 < self.defect_rate:
            out = out.replace("Conflict Resolution:", "Resolution notes:")
        return out


def hashed_embedding(text: str, dim: int = 32) -> list[float]:
    """Bag-of-words hashed into ``dim`` buckets, L2-normalised."""
    v = np.zeros(dim)
    for w in words(text):
        h = _digest("emb", w)
        v[h % dim] += 1.0 if (h >> 32) & 1 else -1.0
    n = np.linalg.norm(v)
    if n > 0:
        v /= n
    return [float(x) for x in v]
