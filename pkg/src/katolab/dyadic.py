"""Dyadic parabolic cubes on the lattice.

A cube at scale ``j`` has spatial side ``Lx 2^-j`` and time side ``Lt 4^-j``
(the parabolic side ``l^2`` for unit periods), anchored at the lattice origin,
so children partition parents ``2^n``-way in space and 4-way in time.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .lattice import GridSpec

__all__ = ["DyadicDecomposition", "scale_index"]


def _log2(m: int) -> int:
    return int(m).bit_length() - 1


def scale_index(grid: GridSpec, lam: float) -> int:
    """The ``j`` with ``lam <= Lx 2^-j < 2 lam``."""
    if lam <= 0:
        raise ValueError("scale must be positive")
    return int(np.floor(np.log2(grid.Lx / lam) + 1e-12))


@dataclass(frozen=True)
class DyadicDecomposition:
    """Scales ``0..j_max``.

    By default ``j_max`` keeps both sides at least one lattice cell.  With
    ``clamp_time`` the spatial side alone limits ``j_max`` and time sides
    shorter than one cell are widened to one cell.
    """

    grid: GridSpec
    j_max: int | None = None
    clamp_time: bool = False

    def __post_init__(self):
        g = self.grid
        limit = _log2(g.Nx) if self.clamp_time else min(_log2(g.Nx), _log2(g.Nt) // 2)
        if self.j_max is None:
            object.__setattr__(self, "j_max", limit)
        elif not (0 <= self.j_max <= limit):
            raise ValueError(f"j_max={self.j_max} exceeds lattice resolution ({limit}) for {g}")

    @property
    def scales(self) -> range:
        return range(self.j_max + 1)

    def side(self, j: int) -> float:
        return self.grid.Lx * 2.0**-j

    def time_side(self, j: int) -> float:
        return max(self.grid.Lt * 4.0**-j, self.grid.ht) if self.clamp_time else self.grid.Lt * 4.0**-j

    def cells(self, j: int) -> tuple[int, int]:
        """Lattice cells per cube side ``(space, time)``."""
        self._check(j)
        g = self.grid
        return g.Nx >> j, max(g.Nt >> (2 * j), 1)

    def counts(self, j: int) -> tuple[int, int]:
        """Cubes per axis ``(space, time)``."""
        cx, ct = self.cells(j)
        return self.grid.Nx // cx, self.grid.Nt // ct

    def volume(self, j: int) -> float:
        cx, ct = self.cells(j)
        return self.grid.cell_volume * cx**self.grid.n * ct

    def _check(self, j: int) -> None:
        if not (0 <= j <= self.j_max):
            raise ValueError(f"scale {j} outside 0..{self.j_max}")

    def _blocked(self, f: np.ndarray, j: int) -> tuple[np.ndarray, tuple[int, ...], int]:
        g = self.grid
        cx, ct = self.cells(j)
        bx, bt = self.counts(j)
        lead = f.shape[: f.ndim - g.n - 1]
        shp = list(lead)
        for _ in range(g.n):
            shp += [bx, cx]
        shp += [bt, ct]
        return f.reshape(shp), lead, len(lead)

    def block_means(self, f: np.ndarray, j: int) -> np.ndarray:
        """Cube averages, shape ``lead + (bx,)*n + (bt,)``."""
        B, lead, nl = self._blocked(np.asarray(f), j)
        inner = tuple(nl + 2 * a + 1 for a in range(self.grid.n + 1))
        return B.mean(axis=inner)

    def block_sums_sq(self, f: np.ndarray, j: int) -> np.ndarray:
        """Per-cube quadrature of ``|f|^2`` (cell volume included)."""
        B, lead, nl = self._blocked(np.abs(np.asarray(f)) ** 2, j)
        inner = tuple(nl + 2 * a + 1 for a in range(self.grid.n + 1))
        return self.grid.cell_volume * B.sum(axis=inner)

    def expand(self, means: np.ndarray, j: int) -> np.ndarray:
        """Piecewise-constant field from cube values."""
        cx, ct = self.cells(j)
        out = means
        nl = means.ndim - self.grid.n - 1
        for a in range(self.grid.n):
            out = np.repeat(out, cx, axis=nl + a)
        return np.repeat(out, ct, axis=nl + self.grid.n)

    def average(self, f: np.ndarray, j: int) -> np.ndarray:
        return self.expand(self.block_means(f, j), j)

    def cubes(self, j: int):
        """Index tuples ``(i_1..i_n, i_t)`` of all cubes at scale ``j``."""
        bx, bt = self.counts(j)
        return product(*([range(bx)] * self.grid.n + [range(bt)]))

    def slices(self, j: int, index) -> tuple[slice, ...]:
        cx, ct = self.cells(j)
        out = [slice(i * cx, (i + 1) * cx) for i in index[:-1]]
        out.append(slice(index[-1] * ct, (index[-1] + 1) * ct))
        return tuple(out)

    def mask(self, j: int, index) -> np.ndarray:
        m = np.zeros(self.grid.shape, dtype=bool)
        m[self.slices(j, index)] = True
        return m

    def center(self, j: int, index) -> tuple[float, ...]:
        cx, ct = self.cells(j)
        g = self.grid
        xs = tuple((i + 0.5) * cx * g.hx for i in index[:-1])
        return xs + ((index[-1] + 0.5) * ct * g.ht,)
