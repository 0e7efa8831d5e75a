"""Monomial feature encoding of multiperiod trading strategies.

A strategy that is polynomial in past returns is represented as a flat
coefficient vector paired with a fixed catalogue of return monomials, so
that the realized portfolio return of the whole horizon is the inner
product of the two.  The catalogue has up to three contiguous blocks:

* linear block, one entry per (asset ``i``, period ``t``): the constant
  part of the weight of asset ``i`` at period ``t``; monomial ``R[t,i]``.
* quadratic block, one entry per (past asset ``c``, past period ``d``,
  asset ``i``, period ``t``): the loading of weight (``i``, ``t``) on the
  single past return ``R[d,c]``; monomial ``R[d,c] * R[t,i]``.
* cubic block (second-order encoding only), one entry per (``a``, ``b``,
  ``c``, ``d``, ``i``, ``t``): the loading on the product of two past
  returns; monomial ``R[b,a] * R[d,c] * R[t,i]``.

Positions inside a block are 1-based with the first past-asset index
fastest, then its period, then the target asset, then the target period.
Coefficients whose past-return factors are not realized strictly before
the target period are structurally zero (see ``predictability_mask``);
the monomials themselves are never masked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import HistoryTooShort

__all__ = [
    "MonomialEncoding",
    "MultiIndex",
    "build_encoding",
    "flat_index",
    "unflatten",
    "monomial_vector",
    "predictability_mask",
    "strategy_weights",
]


@dataclass(frozen=True)
class MonomialEncoding:
    """Shape metadata for one monomial catalogue.

    Attributes
    ----------
    n_assets : int
        Number of risky assets per period.
    horizon : int
        Number of trading periods.
    order : int
        Polynomial order of the strategy in past returns (1 or 2).
    """

    n_assets: int
    horizon: int
    order: int

    @property
    def linear_size(self) -> int:
        return self.n_assets * self.horizon

    @property
    def quad_size(self) -> int:
        return self.linear_size**2

    @property
    def cubic_size(self) -> int:
        return self.linear_size**3 if self.order == 2 else 0

    @property
    def dim(self) -> int:
        """Total catalogue length."""
        return self.linear_size + self.quad_size + self.cubic_size

    def block_offset(self, degree: int) -> int:
        """0-based offset of a degree block inside the flat vector."""
        if degree == 1:
            return 0
        if degree == 2:
            return self.linear_size
        if degree == 3 and self.order == 2:
            return self.linear_size + self.quad_size
        raise ValueError(f"degree {degree} not present at order {self.order}")

    def block_size(self, degree: int) -> int:
        return (self.linear_size, self.quad_size, self.cubic_size)[degree - 1]


@dataclass(frozen=True)
class MultiIndex:
    """Named index of one catalogue entry.

    ``target_asset``/``target_period`` identify the weight being formed;
    the ``first_*`` and ``second_*`` legs identify the past returns that
    multiply it (absent for lower degrees).  All fields are 1-based.
    """

    degree: int
    target_asset: int
    target_period: int
    first_asset: Optional[int] = None
    first_period: Optional[int] = None
    second_asset: Optional[int] = None
    second_period: Optional[int] = None


def build_encoding(n_assets: int, horizon: int, order: int = 1) -> MonomialEncoding:
    """Construct the catalogue metadata for ``n_assets`` and ``horizon``.

    Parameters
    ----------
    order : int
        1 keeps linear and quadratic blocks, 2 adds the cubic block.
    """
    if n_assets < 1:
        raise ValueError(f"n_assets must be >= 1, got {n_assets}")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    return MonomialEncoding(n_assets=n_assets, horizon=horizon, order=order)


def _check_range(name: str, value: int, upper: int) -> None:
    if not 1 <= value <= upper:
        raise ValueError(f"{name}={value} outside 1..{upper}")


def flat_index(enc: MonomialEncoding, idx: MultiIndex) -> int:
    """1-based position of ``idx`` inside its degree block.

    The first past-asset leg runs fastest, then its period, then the
    target asset, then the target period.
    """
    n, T = enc.n_assets, enc.horizon
    _check_range("target_asset", idx.target_asset, n)
    _check_range("target_period", idx.target_period, T)
    i, t = idx.target_asset, idx.target_period
    if idx.degree == 1:
        return (t - 1) * n + i
    _check_range("first_asset", idx.first_asset, n)
    _check_range("first_period", idx.first_period, T)
    c, d = idx.first_asset, idx.first_period
    if idx.degree == 2:
        return (t - 1) * n * n * T + (i - 1) * n * T + (d - 1) * n + c
    if idx.degree == 3:
        if enc.order < 2:
            raise ValueError("degree-3 entries require a second-order encoding")
        _check_range("second_asset", idx.second_asset, n)
        _check_range("second_period", idx.second_period, T)
        a, b = idx.second_asset, idx.second_period
        nT = n * T
        return (
            (t - 1) * n * nT * nT
            + (i - 1) * nT * nT
            + (d - 1) * n * nT
            + (c - 1) * nT
            + (b - 1) * n
            + a
        )
    raise ValueError(f"degree must be 1, 2 or 3, got {idx.degree}")


def unflatten(enc: MonomialEncoding, degree: int, position: int) -> MultiIndex:
    """Inverse of :func:`flat_index` for a 1-based block-local position."""
    n, T = enc.n_assets, enc.horizon
    if degree not in (1, 2, 3) or (degree == 3 and enc.order < 2):
        raise ValueError(f"degree {degree} not present at order {enc.order}")
    if not 1 <= position <= enc.block_size(degree):
        raise ValueError(f"position {position} outside degree-{degree} block")
    rem = position - 1
    if degree == 1:
        rem, i = divmod(rem, n)
        return MultiIndex(1, target_asset=i + 1, target_period=rem + 1)
    if degree == 2:
        rem, c = divmod(rem, n)
        rem, d = divmod(rem, T)
        t, i = divmod(rem, n)
        return MultiIndex(
            2,
            target_asset=i + 1,
            target_period=t + 1,
            first_asset=c + 1,
            first_period=d + 1,
        )
    rem, a = divmod(rem, n)
    rem, b = divmod(rem, T)
    rem, c = divmod(rem, n)
    rem, d = divmod(rem, T)
    t, i = divmod(rem, n)
    return MultiIndex(
        3,
        target_asset=i + 1,
        target_period=t + 1,
        first_asset=c + 1,
        first_period=d + 1,
        second_asset=a + 1,
        second_period=b + 1,
    )


def _as_path_matrix(enc: MonomialEncoding, path) -> np.ndarray:
    """Coerce a flat or (horizon, n_assets) path to matrix form."""
    arr = np.asarray(path, dtype=float)
    n, T = enc.n_assets, enc.horizon
    if arr.shape == (T, n):
        return arr
    if arr.shape == (T * n,):
        return arr.reshape(T, n)
    raise ValueError(f"path shape {arr.shape} incompatible with ({T}, {n})")


def monomial_vector(enc: MonomialEncoding, path) -> np.ndarray:
    """Evaluate every catalogue monomial on one return path.

    ``path`` holds the horizon's returns, period-major with the asset
    index fastest.  The linear block is the path itself; higher blocks
    are outer products of it.
    """
    x = _as_path_matrix(enc, path).ravel()
    blocks = [x, np.outer(x, x).ravel()]
    if enc.order == 2:
        blocks.append(np.einsum("u,v,w->uvw", x, x, x).ravel())
    return np.concatenate(blocks)


def predictability_mask(enc: MonomialEncoding) -> np.ndarray:
    """Boolean vector marking coefficients that must be zero.

    A weight formed at period ``t`` may only load on returns realized at
    periods strictly before ``t``; quadratic entries with
    ``first_period >= target_period`` and cubic entries with either past
    period ``>= target_period`` are masked.  Linear entries never are.
    """
    n, T = enc.n_assets, enc.horizon
    nT = n * T
    period = np.repeat(np.arange(1, T + 1), n)  # period of each linear slot
    lin = np.zeros(nT, dtype=bool)
    quad = (period[None, :] >= period[:, None]).ravel()
    parts = [lin, quad]
    if enc.order == 2:
        bad_first = period[None, :, None] >= period[:, None, None]
        bad_second = period[None, None, :] >= period[:, None, None]
        parts.append((bad_first | bad_second).ravel())
    return np.concatenate(parts)


def strategy_weights(enc: MonomialEncoding, coeffs, history, t: int) -> np.ndarray:
    """Portfolio weights of period ``t`` given the realized history.

    Parameters
    ----------
    coeffs : array_like
        Flat coefficient vector of length ``enc.dim``.
    history : array_like
        Realized returns, shape ``(k, n_assets)`` with ``k >= t - 1``
        (rows beyond ``t - 1`` are ignored) or the equivalent flat vector.
    t : int
        1-based period whose weights are formed.

    Notes
    -----
    Past-return slots at periods ``>= t`` are zeroed before contraction,
    so the result never depends on returns at or after period ``t`` even
    if ``coeffs`` violates the predictability mask.
    """
    n, T = enc.n_assets, enc.horizon
    nT = n * T
    if not 1 <= t <= T:
        raise ValueError(f"period t={t} outside 1..{T}")
    values = np.asarray(coeffs, dtype=float)
    if values.shape != (enc.dim,):
        raise ValueError(f"coefficient shape {values.shape} != ({enc.dim},)")

    hist = np.asarray(history, dtype=float).reshape(-1)
    if hist.size % n != 0:
        raise ValueError(f"history length {hist.size} not a multiple of n={n}")
    rows = hist.size // n
    if rows < t - 1:
        raise HistoryTooShort(f"period {t} needs {t - 1} return rows, got {rows}")
    past = np.zeros(nT)
    past[: (t - 1) * n] = hist[: (t - 1) * n]

    rows_t = slice((t - 1) * n, t * n)
    weights = values[:nT][rows_t].copy()
    quad = values[nT : nT + nT * nT].reshape(nT, nT)
    weights += quad[rows_t] @ past
    if enc.order == 2:
        cubic = values[nT + nT * nT :].reshape(nT, nT, nT)
        weights += cubic[rows_t] @ past @ past
    return weights
