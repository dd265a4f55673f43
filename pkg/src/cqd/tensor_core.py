"""Dense third-order tensor algebra: unfoldings, mode products, HOSVD, truncation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Shape3 = tuple[int, int, int]
Ranks3 = tuple[int, int, int]

MODES = (0, 1, 2)

# Fixed einsum programs per mode; the hot paths below avoid the per-call
# validation of the public wrappers.
_MODE_SUBSCRIPTS = ("ai,ijk->ajk", "aj,ijk->iak", "ak,ijk->ija")
_MODE_ORDER = ((0, 1, 2), (1, 0, 2), (2, 0, 1))


def as_tensor3(data) -> np.ndarray:
    """Coerce to a C-contiguous float64 third-order array; reject NaN/Inf."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected a third-order tensor, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor entries must be finite")
    return arr


def as_matrix(data) -> np.ndarray:
    """Coerce to a C-contiguous float64 matrix; reject NaN/Inf."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    return arr


def _check_mode(mode: int) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode}")


def _unfold(x: np.ndarray, mode: int) -> np.ndarray:
    cols = 1
    for i in MODES:
        if i != mode:
            cols *= x.shape[i]
    if mode == 0:
        return x.reshape(x.shape[0], cols)
    return x.transpose(_MODE_ORDER[mode]).reshape(x.shape[mode], cols)


def _mode_mult(x: np.ndarray, a: np.ndarray, mode: int) -> np.ndarray:
    if 0 in x.shape or 0 in a.shape:
        shape = list(x.shape)
        shape[mode] = a.shape[0]
        return np.zeros(shape)
    return np.einsum(_MODE_SUBSCRIPTS[mode], a, x)


def _multi_mult(x: np.ndarray, mats, transpose: bool = False) -> np.ndarray:
    out = x
    for mode, a in enumerate(mats):
        out = _mode_mult(out, a.T if transpose else a, mode)
    return out


def unfold(x, mode: int) -> np.ndarray:
    """Mode-n unfolding: move axis `mode` first, flatten the rest in order.

    The returned matrix has shape (I_mode, product of the other two dims);
    column j corresponds to the remaining indices enumerated row-major in
    their original relative order.
    """
    x = as_tensor3(x)
    _check_mode(mode)
    return np.ascontiguousarray(_unfold(x, mode))


def fold(m, mode: int, shape: Shape3) -> np.ndarray:
    """Exact inverse of :func:`unfold` for the given mode and target shape."""
    m = as_matrix(m)
    _check_mode(mode)
    if len(shape) != 3 or any(int(s) < 0 for s in shape):
        raise ValueError(f"invalid tensor shape {shape}")
    rest = tuple(int(shape[i]) for i in MODES if i != mode)
    expected = (int(shape[mode]), int(np.prod(rest)))
    if m.shape != expected:
        raise ValueError(
            f"matrix shape {m.shape} inconsistent with shape={shape}, mode={mode}"
        )
    return np.ascontiguousarray(
        np.moveaxis(m.reshape((expected[0],) + rest), 0, mode)
    )


def mode_n_product(x, a, mode: int) -> np.ndarray:
    """Mode-n product X x_mode A: multiply every mode-n fiber by the matrix A."""
    x = as_tensor3(x)
    a = as_matrix(a)
    _check_mode(mode)
    if a.shape[1] != x.shape[mode]:
        raise ValueError(
            f"matrix has {a.shape[1]} columns, tensor dim {mode} is {x.shape[mode]}"
        )
    return _mode_mult(x, a, mode)


def multi_mode_product(x, mats, transpose: bool = False) -> np.ndarray:
    """Apply one matrix per mode in sequence (optionally transposed)."""
    out = as_tensor3(x)
    for mode, a in enumerate(mats):
        out = mode_n_product(out, a.T if transpose else a, mode)
    return out


@dataclass(frozen=True)
class HosvdFactorization:
    """Full HOSVD of a third-order tensor.

    core has the source shape; factor n is the square I_n x I_n matrix of
    left singular vectors of the mode-n unfolding; svals[n] holds that
    unfolding's singular values in non-increasing order.
    """

    core: np.ndarray
    factors: tuple[np.ndarray, np.ndarray, np.ndarray]
    svals: tuple[np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self):
        for s in self.svals:
            if s.size and (s[-1] < 0 or np.any(np.diff(s) > 0)):
                raise ValueError("singular values must be nonnegative and non-increasing")

    @property
    def shape(self) -> Shape3:
        return self.core.shape


def _fix_signs(u: np.ndarray) -> np.ndarray:
    # Reproducibility convention: largest-magnitude entry of each column >= 0.
    if u.size == 0:
        return u
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[idx, np.arange(u.shape[1])] < 0, -1.0, 1.0)
    return u * signs


def _mode_svd(x: np.ndarray, mode: int, fix_signs: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Left singular vectors (square) and svals of one unfolding."""
    xn = _unfold(x, mode)
    # full_matrices only matters when rows exceed columns; avoid the big V'.
    u, s, _ = np.linalg.svd(xn, full_matrices=xn.shape[0] > xn.shape[1])
    return (_fix_signs(u) if fix_signs else u), s


def hosvd(x) -> HosvdFactorization:
    """Higher-order SVD with square orthonormal factors and exact core.

    The core satisfies X = core x_1 U1 x_2 U2 x_3 U3 up to floating point;
    factor columns follow the nonnegative-largest-entry sign convention.
    """
    x = as_tensor3(x)
    factors = []
    svals = []
    for mode in MODES:
        u, s = _mode_svd(x, mode)
        factors.append(u)
        svals.append(s)
    core = _multi_mult(x, factors, transpose=True)
    return HosvdFactorization(core=core, factors=tuple(factors), svals=tuple(svals))


def reconstruct(f: HosvdFactorization) -> np.ndarray:
    """Assemble the tensor represented by a factorization."""
    return _multi_mult(f.core, f.factors)


def _check_ranks(f: HosvdFactorization, ranks) -> Ranks3:
    if len(ranks) != 3:
        raise ValueError(f"expected three ranks, got {ranks}")
    out = []
    for mode in MODES:
        r = int(ranks[mode])
        dim = f.factors[mode].shape[0]
        if not 0 <= r <= dim:
            raise ValueError(f"rank {r} out of range [0, {dim}] for mode {mode}")
        out.append(r)
    return tuple(out)


def truncated_reconstruct(f: HosvdFactorization, ranks) -> np.ndarray:
    """Project onto the top-r_n left singular subspace of each unfolding.

    Equivalent to X x_1 P1 x_2 P2 x_3 P3 with P_n the rank-r_n projector;
    computed from the sliced core and factor columns.
    """
    r1, r2, r3 = _check_ranks(f, ranks)
    core = f.core[:r1, :r2, :r3]
    mats = (f.factors[0][:, :r1], f.factors[1][:, :r2], f.factors[2][:, :r3])
    return _multi_mult(core, mats)


def tail_energy(f: HosvdFactorization, ranks) -> float:
    """Sum of squared discarded singular values across the three modes."""
    checked = _check_ranks(f, ranks)
    return float(sum(np.sum(f.svals[mode][checked[mode]:] ** 2) for mode in MODES))
