"""Arc masses of weighted point sets on ``R / pi Z``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SortedPoints:
    """Points on the circle of length ``pi``, sorted, with cumulative weights.

    The points are tiled three times (shifted by ``-pi, 0, pi``) so that any
    arc shorter than ``pi`` can be read off with two binary searches.
    """

    angles: np.ndarray
    weights: np.ndarray
    ext: np.ndarray
    cum: np.ndarray

    @classmethod
    def build(cls, angles, weights=None) -> "SortedPoints":
        angles = np.asarray(angles, dtype=float)
        if weights is None:
            weights = np.ones(angles.size)
        weights = np.asarray(weights, dtype=float)
        order = np.argsort(angles, kind="stable")
        s = angles[order]
        w = weights[order]
        ext = np.concatenate([s - np.pi, s, s + np.pi])
        cum = np.concatenate([[0.0], np.cumsum(np.concatenate([w, w, w]))])
        return cls(s, w, ext, cum)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def arc_mass(self, centers, halfwidth: float):
        """Weight and point count in the closed arcs ``[c - h, c + h]``.

        ``centers`` must lie in ``[0, pi)``; ``halfwidth >= pi/2`` returns
        the total.
        """
        centers = np.asarray(centers, dtype=float)
        m = self.angles.size
        if halfwidth >= np.pi / 2 or m == 0:
            return (np.full(centers.shape, self.total), np.full(centers.shape, m, dtype=np.int64))
        lo = np.searchsorted(self.ext, centers - halfwidth, side="left")
        hi = np.searchsorted(self.ext, centers + halfwidth, side="right")
        return self.cum[hi] - self.cum[lo], hi - lo

    def sup_arc_mass(self, halfwidth: float, centers=None):
        """``sup_x`` of the arc mass and an argmax center.

        With ``centers=None`` the supremum is exact: an optimal closed arc
        can always be slid until its left end sits on a point, so it is
        enough to try arcs ``[s_i, s_i + 2h]``.
        """
        m = self.angles.size
        if m == 0:
            return 0.0, 0, 0.0
        if halfwidth >= np.pi / 2:
            return self.total, m, 0.0
        if centers is None:
            left = self.angles
            i0 = np.arange(m) + m
            hi = np.searchsorted(self.ext, left + 2 * halfwidth, side="right")
            mass = self.cum[hi] - self.cum[i0]
            count = hi - i0
            k = int(np.argmax(mass))
            c = float(np.mod(left[k] + halfwidth, np.pi))
            return float(mass[k]), int(count[k]), c
        mass, count = self.arc_mass(centers, halfwidth)
        k = int(np.argmax(mass))
        return float(mass[k]), int(count[k]), float(np.asarray(centers)[k])
