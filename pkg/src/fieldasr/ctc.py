"""Character-level CTC: loss, analytic gradient, and decoding.

The loss marginalizes over every frame-level path whose collapse (merge
adjacent repeats, then delete blanks) equals the target string.  The
forward/backward recursions run over the blank-extended target entirely
in log space; log-add always goes through numpy's logaddexp so -inf
(impossible state) propagates without producing NaN.

Targets that cannot be aligned to the available frames yield +inf loss
rather than an exception from ctc_nll: during training a mislabeled
short clip is skipped, not fatal.  ctc_grad does raise, since there is
no gradient to take.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleTargetError

BLANK = "<blank>"
BLANK_INDEX = 0


@dataclass(frozen=True)
class Vocab:
    """Ordered CTC alphabet. Index 0 is the blank, which never appears in text."""

    symbols: tuple[str, ...]

    def __post_init__(self):
        if not self.symbols or self.symbols[0] != BLANK:
            raise ValueError(f"vocab must start with the blank symbol {BLANK!r}")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("vocab symbols must be unique")

    def __len__(self) -> int:
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        cached = self.__dict__.get("_index_cache")
        if cached is None:
            cached = {s: i for i, s in enumerate(self.symbols)}
            self.__dict__["_index_cache"] = cached
        return cached[symbol]

    def encode(self, text: str) -> list[int]:
        """Greedy longest-match encoding of text into label indices (no blank)."""
        out: list[int] = []
        i, n = 0, len(text)
        max_len = max(len(s) for s in self.symbols[1:]) if len(self.symbols) > 1 else 1
        while i < n:
            for l in range(min(max_len, n - i), 0, -1):
                try:
                    idx = self.index(text[i:i + l])
                except KeyError:
                    continue
                if idx == BLANK_INDEX:
                    continue
                out.append(idx)
                i += l
                break
            else:
                raise ValueError(f"text not encodable at position {i}: {text[i]!r}")
        return out

    def decode(self, indices: list[int]) -> str:
        return "".join(self.symbols[i] for i in indices)


@dataclass(frozen=True)
class LogProbMatrix:
    """T x V per-frame log-probabilities, each row normalized."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 2:
            raise ValueError("log-prob matrix must be 2-D (frames x vocab)")
        row = _logsumexp_rows(v)
        if not np.all(np.abs(row) <= 1e-6):
            raise ValueError(f"rows not normalized: worst logsumexp {row[np.argmax(np.abs(row))]:.3g}")
        if np.any(v > 1e-9):
            raise ValueError("log-probabilities must be <= 0")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def V(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_logits(cls, logits: np.ndarray) -> "LogProbMatrix":
        logits = np.asarray(logits, dtype=np.float64)
        m = logits.max(axis=1, keepdims=True)
        shifted = logits - m
        lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        return cls(shifted - lse)


def _logsumexp_rows(v: np.ndarray) -> np.ndarray:
    m = v.max(axis=1)
    return m + np.log(np.exp(v - m[:, None]).sum(axis=1))


def collapse_path(path: list[int]) -> list[int]:
    """Merge adjacent repeats, then delete blanks; label indices only."""
    out: list[int] = []
    prev = None
    for idx in path:
        if idx != prev and idx != BLANK_INDEX:
            out.append(idx)
        prev = idx
    return out


def collapse(path: list[int], vocab: Vocab) -> str:
    """Merge adjacent repeats, then delete blanks; return the label string."""
    n = len(vocab)
    for idx in path:
        if not 0 <= idx < n:
            raise IndexError(f"path index {idx} out of range for vocab of size {n}")
    return vocab.decode(collapse_path(path))


def _check_target(lp: LogProbMatrix, target: list[int]) -> None:
    for idx in target:
        if idx == BLANK_INDEX:
            raise ValueError("target must not contain the blank index")
        if not 0 < idx < lp.V:
            raise IndexError(f"target index {idx} out of range for vocab of size {lp.V}")


def _extend(target: list[int]) -> np.ndarray:
    """Blank-extended target: blank between and around every label."""
    ext = np.full(2 * len(target) + 1, BLANK_INDEX, dtype=np.int64)
    ext[1::2] = target
    return ext


def _min_frames(target: list[int]) -> int:
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def _skip_allowed(ext: np.ndarray) -> np.ndarray:
    """Mask of extended states reachable by the two-step transition."""
    allowed = np.zeros(len(ext), dtype=bool)
    allowed[2:] = (ext[2:] != BLANK_INDEX) & (ext[2:] != ext[:-2])
    return allowed


def _forward(lp: np.ndarray, ext: np.ndarray) -> np.ndarray:
    T = lp.shape[0]
    S = len(ext)
    skip = _skip_allowed(ext)
    alpha = np.full((T, S), -np.inf)
    alpha[0, 0] = lp[0, ext[0]]
    if S > 1:
        alpha[0, 1] = lp[0, ext[1]]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.logaddexp(acc[2:], np.where(skip[2:], prev[:-2], -np.inf))
        alpha[t] = acc + lp[t, ext]
    return alpha


def _backward(lp: np.ndarray, ext: np.ndarray) -> np.ndarray:
    T = lp.shape[0]
    S = len(ext)
    skip = _skip_allowed(ext)
    beta = np.full((T, S), -np.inf)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + lp[t + 1, ext]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.logaddexp(acc[:-2], np.where(skip[2:], nxt[2:], -np.inf))
        beta[t] = acc
    return beta


def ctc_nll(lp: LogProbMatrix, target: list[int]) -> float:
    """Negative log-likelihood of ``target`` under the CTC marginalization.

    Empty targets are legal (all-blank paths).  Infeasible targets (too
    few frames) return +inf.
    """
    _check_target(lp, target)
    if lp.T < _min_frames(target):
        return math.inf
    ext = _extend(target)
    alpha = _forward(lp.values, ext)
    total = alpha[-1, -1]
    if len(ext) > 1:
        total = np.logaddexp(total, alpha[-1, -2])
    return float(-total)


def ctc_grad(lp: LogProbMatrix, target: list[int]) -> np.ndarray:
    """d(NLL)/d(logits), a T x V matrix: softmax(logits) minus the state
    posterior.  Rows sum to zero analytically."""
    _check_target(lp, target)
    if lp.T < _min_frames(target):
        raise InfeasibleTargetError(
            f"target of length {len(target)} needs >= {_min_frames(target)} frames, got {lp.T}"
        )
    ext = _extend(target)
    v = lp.values
    alpha = _forward(v, ext)
    beta = _backward(v, ext)
    total = alpha[-1, -1]
    if len(ext) > 1:
        total = np.logaddexp(total, alpha[-1, -2])
    if not np.isfinite(total):
        raise InfeasibleTargetError("target has zero probability under these frames")
    # state posteriors, accumulated per vocab index in the prob domain
    gamma = np.exp(alpha + beta - total)
    posterior = np.zeros_like(v)
    np.add.at(posterior, (slice(None), ext), gamma)
    return np.exp(v) - posterior


def brute_force_nll(lp: LogProbMatrix, target: list[int]) -> float:
    """Verification oracle: enumerate every V^T path and sum the exact
    probabilities of those collapsing to the target."""
    _check_target(lp, target)
    if lp.V ** lp.T > 10 ** 6:
        raise ValueError(f"instance too large to enumerate: V^T = {lp.V ** lp.T}")
    probs = np.exp(lp.values)
    want = list(target)
    total = 0.0
    for path in itertools.product(range(lp.V), repeat=lp.T):
        # independent collapse: groupby-dedupe, then drop blanks
        label = [k for k, _ in itertools.groupby(path) if k != BLANK_INDEX]
        if label == want:
            p = 1.0
            for t, idx in enumerate(path):
                p *= probs[t, idx]
            total += p
    return math.inf if total == 0.0 else -math.log(total)


def greedy_decode(lp: LogProbMatrix, vocab: Vocab) -> str:
    """Per-frame argmax (ties to the lowest index) followed by collapse."""
    if len(vocab) != lp.V:
        raise ValueError("vocab size does not match matrix width")
    path = np.argmax(lp.values, axis=1).tolist()
    return collapse(path, vocab)


def beam_decode(lp: LogProbMatrix, vocab: Vocab, width: int) -> str:
    """Prefix beam search, merging blank/non-blank mass per prefix.

    The surviving prefixes are rescored with the exact marginal (ctc_nll)
    before the best is returned: in-beam mass undercounts paths that left
    the beam, and ranking survivors by true probability is what makes a
    wider beam never score worse.  width=1 follows the single best prefix
    and need not equal greedy decoding (greedy commits per frame, the
    beam per prefix).
    """
    if width < 1:
        raise ValueError("beam width must be >= 1")
    if len(vocab) != lp.V:
        raise ValueError("vocab size does not match matrix width")
    v = lp.values
    # prefix -> (log P(ending in blank), log P(ending in non-blank))
    beams: dict[tuple[int, ...], tuple[float, float]] = {(): (0.0, -np.inf)}
    for t in range(lp.T):
        nxt: dict[tuple[int, ...], tuple[float, float]] = {}

        def add(prefix, pb, pnb):
            old_pb, old_pnb = nxt.get(prefix, (-np.inf, -np.inf))
            nxt[prefix] = (np.logaddexp(old_pb, pb), np.logaddexp(old_pnb, pnb))

        for prefix, (pb, pnb) in beams.items():
            total = np.logaddexp(pb, pnb)
            # blank keeps the prefix
            add(prefix, total + v[t, BLANK_INDEX], -np.inf)
            for k in range(1, lp.V):
                p = v[t, k]
                if prefix and prefix[-1] == k:
                    # repeat merges unless a blank intervened
                    add(prefix, -np.inf, pnb + p)
                    add(prefix + (k,), -np.inf, pb + p)
                else:
                    add(prefix + (k,), -np.inf, total + p)
        ranked = sorted(nxt.items(), key=lambda kv: -np.logaddexp(*kv[1]))
        beams = dict(ranked[:width])
    best = min(beams, key=lambda prefix: ctc_nll(lp, list(prefix)))
    return vocab.decode(list(best))
