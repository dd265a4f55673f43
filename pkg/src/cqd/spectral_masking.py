"""Adaptive spectral masking: relative-threshold rank selection and budget control."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_core import (
    HosvdFactorization,
    MODES,
    Ranks3,
    as_tensor3,
    hosvd,
    multi_mode_product,
)

# Online threshold controller constants: multiplicative up/down steps and the
# clamp keeping eps inside (0, 1).
EPS_INCREASE = 1.1
EPS_DECREASE = 0.9
EPS_MIN = 1e-6
EPS_MAX = 0.999


def _check_eps(eps_rel: float) -> float:
    eps_rel = float(eps_rel)
    if not 0.0 < eps_rel < 1.0:
        raise ValueError(f"eps_rel must lie in (0, 1), got {eps_rel}")
    return eps_rel


@dataclass(frozen=True)
class SpectralMaskSet:
    """Per-mode keep/drop masks induced by a relative singular-value threshold."""

    eps_rel: float
    masks: tuple[np.ndarray, np.ndarray, np.ndarray]
    ranks: Ranks3

    def __post_init__(self):
        for mask, r in zip(self.masks, self.ranks):
            kept = int(np.count_nonzero(mask))
            if kept != r:
                raise ValueError(f"rank {r} does not match mask popcount {kept}")
            # Descending svals with a monotone threshold force a ones-prefix.
            if kept and not np.all(mask[:kept]):
                raise ValueError("mask must be a prefix of ones followed by zeros")


@dataclass(frozen=True)
class CompressedState:
    """Masked core plus the retained factor columns that reproduce the projection."""

    masked_core: np.ndarray
    masked_factors: tuple[np.ndarray, np.ndarray, np.ndarray]
    maskset: SpectralMaskSet

    @property
    def shape(self):
        return tuple(u.shape[0] for u in self.masked_factors)


def spectral_mask(svals, eps_rel: float) -> np.ndarray:
    """Keep singular value i iff sigma_i >= eps_rel * sigma_1 (inclusive).

    A zero leading singular value marks a zero state, which keeps nothing:
    the literal indicator would keep everything (0 >= 0), but a null state
    carries no information worth budget.
    """
    eps_rel = _check_eps(eps_rel)
    s = np.asarray(svals, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError("svals must be a vector")
    if s.size == 0:
        return np.zeros(0, dtype=bool)
    if np.any(s < 0) or np.any(np.diff(s) > 0):
        raise ValueError("svals must be nonnegative and sorted descending")
    if s[0] <= 0.0:
        return np.zeros(s.size, dtype=bool)
    return s >= eps_rel * s[0]


def mask_factorization(f: HosvdFactorization, eps_rel: float) -> CompressedState:
    """Apply spectral masking to an existing factorization."""
    masks = tuple(spectral_mask(f.svals[mode], eps_rel) for mode in MODES)
    ranks = tuple(int(np.count_nonzero(m)) for m in masks)
    maskset = SpectralMaskSet(eps_rel=_check_eps(eps_rel), masks=masks, ranks=ranks)
    core = f.core[: ranks[0], : ranks[1], : ranks[2]]
    factors = tuple(f.factors[mode][:, : ranks[mode]] for mode in MODES)
    return CompressedState(masked_core=core, masked_factors=factors, maskset=maskset)


def asm_compress(x, eps_rel: float) -> CompressedState:
    """Compress a tensor by masking each mode's singular directions.

    The represented tensor equals X x_n (U_n M_n U_n^T) over all three
    modes; the stored core is that projection contracted by the retained
    factor columns, so its shape is exactly (r1, r2, r3).
    """
    return mask_factorization(hosvd(as_tensor3(x)), eps_rel)


def masked_tensor(cs: CompressedState) -> np.ndarray:
    """Ambient-shape tensor represented by a compressed state."""
    return multi_mode_product(cs.masked_core, cs.masked_factors)


def budget(ranks) -> int:
    """Query budget proxy: the retained core size r1 * r2 * r3."""
    r1, r2, r3 = (int(r) for r in ranks)
    if min(r1, r2, r3) < 0:
        raise ValueError("ranks must be nonnegative")
    return r1 * r2 * r3


def adapt_epsilon(eps_rel: float, achieved_budget: int, tau: int) -> float:
    """One controller step: raise eps over budget, lower it under, hold at par."""
    eps_rel = _check_eps(eps_rel)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if achieved_budget > tau:
        eps_rel *= EPS_INCREASE
    elif achieved_budget < tau:
        eps_rel *= EPS_DECREASE
    return min(max(eps_rel, EPS_MIN), EPS_MAX)


def compress_within_budget(
    f: HosvdFactorization, eps_rel: float, tau: int, max_steps: int = 200
) -> tuple[CompressedState, float]:
    """Raise eps until the rank product fits the budget cap tau.

    Returns the accepted compression and the eps that produced it. For
    tau >= 1 and a nonzero tensor a feasible eps always exists because
    EPS_MAX keeps at most the leading direction per mode; max_steps only
    guards the degenerate tie case of exactly equal singular values.
    """
    cs = mask_factorization(f, eps_rel)
    for _ in range(max_steps):
        achieved = budget(cs.maskset.ranks)
        if achieved <= tau:
            break
        bumped = adapt_epsilon(eps_rel, achieved, tau)
        if bumped == eps_rel:  # clamped at EPS_MAX, nothing left to cut
            break
        eps_rel = bumped
        cs = mask_factorization(f, eps_rel)
    return cs, eps_rel
