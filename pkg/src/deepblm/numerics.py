"""Dense float64 numerics, stable special functions, and the seeded RNG contract.

Matrices and vectors are plain C-contiguous ``numpy`` float64 arrays.
Everything in this module is pure: the same inputs (including the same
:class:`RngState`) produce bit-identical outputs, so values can be shared
freely across threads.

Probabilities cross module boundaries in log space; linear-space values are
clamped explicitly wherever they must stay inside (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.special import expit

# Probability clamp for cross-entropy; avoids -inf without measurably
# biasing desk-scale likelihoods.
XENT_EPS = 1e-12

# Default cap on the number of units on the enumerated side of a state sum
# (2^ENUM_LIMIT states); guards accidental 2^500 loops.
ENUM_LIMIT = 20

# States per block when sweeping an exponential state space.
STATE_BLOCK = 4096


@dataclass(frozen=True)
class RngState:
    """Counter-based splittable random stream.

    Identical ``(seed, counter)`` pairs yield identical draw sequences;
    distinct pairs key independent Philox streams.  Derive sub-streams with
    :meth:`child` using disjoint offsets; never reuse an offset for two
    different consumers.
    """

    seed: int
    counter: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) % 2**64)
        object.__setattr__(self, "counter", int(self.counter) % 2**64)

    def child(self, offset: int) -> "RngState":
        return RngState(self.seed, self.counter + int(offset))

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.counter], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def sigmoid(x):
    """Logistic function, stable on both tails; sigmoid(-x) == 1 - sigmoid(x)."""
    return expit(x)


def softplus(x):
    """log(1 + e^x) without overflow."""
    return np.logaddexp(0.0, x)


def log_sigmoid(x):
    return -softplus(-np.asarray(x, dtype=np.float64))


def log_sum_exp(v, axis=None):
    """log(sum(exp(v))) by max-shifting.

    Tolerates -inf entries (empty mass) but not NaN; never overflows for
    finite inputs.  Raises on an empty reduction.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0 or (axis is not None and v.shape[axis] == 0):
        raise ValueError("empty reduction")
    shift = np.max(v, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(v - shift), axis=axis, keepdims=True)) + shift
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def bernoulli_xent(target, p):
    """sum_i [t_i ln p_i + (1-t_i) ln(1-p_i)] along the last axis.

    A log-likelihood, hence <= 0.  ``p`` is clamped to
    [XENT_EPS, 1-XENT_EPS] before taking logs; ``target`` may be soft.
    """
    target = np.asarray(target, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if target.shape[-1] != p.shape[-1]:
        raise ValueError(
            f"length mismatch: target has {target.shape[-1]} entries, p has {p.shape[-1]}"
        )
    p = np.clip(p, XENT_EPS, 1.0 - XENT_EPS)
    out = np.sum(target * np.log(p) + (1.0 - target) * np.log1p(-p), axis=-1)
    if out.ndim == 0:
        return float(out)
    return out


def bernoulli_logpmf_logits(x, logits):
    """log prod_i Bern(x_i; sigmoid(logits_i)) along the last axis.

    Uses the identity t*log(sig(a)) + (1-t)*log(sig(-a)) = t*a - softplus(a),
    which is exact for soft x and immune to probability underflow.
    """
    x = np.asarray(x, dtype=np.float64)
    logits = np.asarray(logits, dtype=np.float64)
    return np.sum(x * logits - softplus(logits), axis=-1)


def binary_states(n: int, limit: int = ENUM_LIMIT) -> np.ndarray:
    """All 2^n binary vectors as a (2^n, n) float array.

    Row s holds the little-endian bits of s.  Refuses n beyond ``limit``.
    """
    _check_enum(n, limit)
    idx = np.arange(2**n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.float64)


def binary_state_blocks(
    n: int, block: int = STATE_BLOCK, limit: int = ENUM_LIMIT
) -> Iterator[np.ndarray]:
    """Yield the 2^n binary state vectors in fixed-order blocks.

    Sharding keeps peak memory at O(block * n) so reductions over the state
    space stay deterministic (fixed order) without materializing 2^n rows.
    """
    _check_enum(n, limit)
    total = 2**n
    cols = np.arange(n)
    for start in range(0, total, block):
        idx = np.arange(start, min(start + block, total), dtype=np.int64)
        yield ((idx[:, None] >> cols) & 1).astype(np.float64)


def _check_enum(n: int, limit: int) -> None:
    if n < 0:
        raise ValueError(f"negative state count: {n}")
    if n > limit:
        raise ValueError(f"enumeration too large: 2^{n} states exceeds limit 2^{limit}")
