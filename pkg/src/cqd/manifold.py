"""Stiefel and fixed multilinear-rank geometry: tangent projections and retractions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_core import (
    MODES,
    Ranks3,
    _mode_mult,
    _mode_svd,
    _multi_mult,
    _unfold,
    as_matrix,
    as_tensor3,
)

ORTHO_TOL = 1e-10
# QR/HOSVD diagonal entries at or below this are treated as rank collapse.
SINGULARITY_TOL = 1e-12


class RankDeficiencyError(ArithmeticError):
    """A factor or iterate lost the rank the manifold requires."""


@dataclass(frozen=True)
class StiefelPoint:
    """An n x p matrix with orthonormal columns."""

    u: np.ndarray

    def __post_init__(self):
        u = as_matrix(self.u)
        object.__setattr__(self, "u", u)
        p = u.shape[1]
        if np.max(np.abs(u.T @ u - np.eye(p))) > ORTHO_TOL:
            raise ValueError("columns are not orthonormal within tolerance")

    @property
    def shape(self):
        return self.u.shape


@dataclass(frozen=True)
class TuckerPoint:
    """Point on the fixed multilinear-rank manifold: core plus orthonormal factors."""

    core: np.ndarray
    factors: tuple[StiefelPoint, StiefelPoint, StiefelPoint]

    def __post_init__(self):
        core = as_tensor3(self.core)
        object.__setattr__(self, "core", core)
        for mode in MODES:
            if self.factors[mode].shape[1] != core.shape[mode]:
                raise ValueError(
                    f"factor {mode} has {self.factors[mode].shape[1]} columns, "
                    f"core dim is {core.shape[mode]}"
                )

    @property
    def ranks(self) -> Ranks3:
        return self.core.shape

    @property
    def shape(self):
        return tuple(f.shape[0] for f in self.factors)


@dataclass(frozen=True)
class TuckerTangent:
    """Tangent vector in horizontal form: core direction plus gauge-fixed factor directions."""

    core_dir: np.ndarray
    factor_dirs: tuple[np.ndarray, np.ndarray, np.ndarray]

    def scaled(self, alpha: float) -> "TuckerTangent":
        return TuckerTangent(
            core_dir=alpha * self.core_dir,
            factor_dirs=tuple(alpha * d for d in self.factor_dirs),
        )


def sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def tangent_project_stiefel(point: StiefelPoint, g) -> np.ndarray:
    """Project an ambient matrix onto the Stiefel tangent space at `point`."""
    g = as_matrix(g)
    u = point.u
    if g.shape != u.shape:
        raise ValueError(f"gradient shape {g.shape} does not match point shape {u.shape}")
    return g - u @ sym(u.T @ g)


def qr_retraction(y) -> StiefelPoint:
    """Orthonormalize via reduced QR, sign-corrected to a nonnegative R diagonal."""
    y = as_matrix(y)
    q, r = np.linalg.qr(y)
    diag = np.diagonal(r)
    if np.any(np.abs(diag) <= SINGULARITY_TOL):
        raise RankDeficiencyError("input is rank deficient: |diag(R)| <= 1e-12")
    return StiefelPoint(q * np.where(diag < 0, -1.0, 1.0))


def stiefel_step(point: StiefelPoint, g, eta: float) -> StiefelPoint:
    """One retraction step along the negative projected gradient."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    return qr_retraction(point.u - eta * tangent_project_stiefel(point, g))


def tucker_to_tensor(p: TuckerPoint) -> np.ndarray:
    """Ambient tensor represented by a Tucker point."""
    return _multi_mult(p.core, tuple(f.u for f in p.factors))


def _truncated_point(x: np.ndarray, ranks: Ranks3) -> TuckerPoint:
    """Truncated-HOSVD projection without revalidating the ambient tensor."""
    factors = []
    core = x
    for mode in MODES:
        r = int(ranks[mode])
        if not 1 <= r <= x.shape[mode]:
            raise ValueError(f"rank {r} out of range [1, {x.shape[mode]}] for mode {mode}")
        # Factor signs cancel between core and factor, so no sign convention
        # is needed for the represented tensor.
        u, s = _mode_svd(x, mode, fix_signs=False)
        if r > s.size or s[r - 1] <= SINGULARITY_TOL:
            raise RankDeficiencyError(
                f"mode-{mode} singular value at position {r} is below 1e-12"
            )
        u = u[:, :r]
        factors.append(StiefelPoint(u))
        core = _mode_mult(core, u.T, mode)
    return TuckerPoint(core=core, factors=tuple(factors))


def tucker_from_tensor(x, ranks) -> TuckerPoint:
    """Truncated-HOSVD projection of an ambient tensor onto the rank-`ranks` manifold."""
    return _truncated_point(as_tensor3(x), tuple(int(r) for r in ranks))


def riemannian_grad_tucker(p: TuckerPoint, euclid_grad) -> TuckerTangent:
    """Project an ambient gradient onto the tangent space at `p`.

    The horizontal representation is (core direction, factor directions)
    with each factor direction orthogonal to the current factor columns;
    the factor normal equations use the core Gram matrices, so the core
    unfoldings must have full row rank.
    """
    z = as_tensor3(euclid_grad)
    if z.shape != p.shape:
        raise ValueError(f"gradient shape {z.shape} does not match point shape {p.shape}")
    us = tuple(f.u for f in p.factors)
    # Shared partial contractions: each mode needs z contracted by the other
    # two factors, and the core direction contracts all three.
    z1 = _mode_mult(z, us[0].T, 0)
    partials = (
        _mode_mult(_mode_mult(z, us[1].T, 1), us[2].T, 2),
        _mode_mult(z1, us[2].T, 2),
        _mode_mult(z1, us[1].T, 1),
    )
    core_dir = _mode_mult(partials[0], us[0].T, 0)
    factor_dirs = []
    for mode in MODES:
        b = _unfold(partials[mode], mode)
        g_n = _unfold(p.core, mode)
        w = b @ g_n.T
        coeff = np.linalg.solve(g_n @ g_n.T, w.T).T
        factor_dirs.append(coeff - us[mode] @ (us[mode].T @ coeff))
    return TuckerTangent(core_dir=core_dir, factor_dirs=tuple(factor_dirs))


def tangent_to_ambient(p: TuckerPoint, t: TuckerTangent) -> np.ndarray:
    """Embed a horizontal tangent vector into the ambient tensor space."""
    us = tuple(f.u for f in p.factors)
    out = _multi_mult(t.core_dir, us)
    for mode in MODES:
        mats = tuple(t.factor_dirs[mode] if m == mode else us[m] for m in MODES)
        out = out + _multi_mult(p.core, mats)
    return out


def tangent_norm_sq(p: TuckerPoint, t: TuckerTangent) -> float:
    """Squared norm of a gauge-fixed tangent vector.

    The core component and the three factor components are mutually
    orthogonal in the ambient embedding, so the norm splits into
    ||dG||^2 + sum_n ||dU_n G_(n)||^2.
    """
    total = float(np.sum(t.core_dir**2))
    for mode in MODES:
        total += float(np.sum((t.factor_dirs[mode] @ _unfold(p.core, mode)) ** 2))
    return total


def zero_tangent(p: TuckerPoint) -> TuckerTangent:
    return TuckerTangent(
        core_dir=np.zeros(p.ranks),
        factor_dirs=tuple(np.zeros(f.shape) for f in p.factors),
    )


def tucker_retract(p: TuckerPoint, direction: TuckerTangent, eta: float) -> TuckerPoint:
    """Move by eta * direction in ambient space, then project back by truncated HOSVD.

    Raises RankDeficiencyError when the moved tensor no longer supports the
    manifold's ranks (singular value at position r_n at or below 1e-12).
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    moved = tucker_to_tensor(p) + eta * tangent_to_ambient(p, direction)
    return _truncated_point(moved, p.ranks)
