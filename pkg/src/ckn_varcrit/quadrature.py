"""Triangle quadrature, including a composite rule for triangles touching the origin.

Rules are stored as barycentric nodes (rows sum to one) and weights that
sum to one; callers scale weights by the triangle area.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Dunavant degree-5 rule, 7 points
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_W0, _W1, _W2 = 0.225, 0.132394152788506, 0.125939180544827

DUNAVANT7_NODES = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_A1, _B1, _B1],
        [_B1, _A1, _B1],
        [_B1, _B1, _A1],
        [_A2, _B2, _B2],
        [_B2, _A2, _B2],
        [_B2, _B2, _A2],
    ]
)
DUNAVANT7_WEIGHTS = np.array([_W0, _W1, _W1, _W1, _W2, _W2, _W2])

# interior 3-point rule, exact for quadratics
STRANG3_NODES = np.array(
    [
        [2 / 3, 1 / 6, 1 / 6],
        [1 / 6, 2 / 3, 1 / 6],
        [1 / 6, 1 / 6, 2 / 3],
    ]
)
STRANG3_WEIGHTS = np.full(3, 1 / 3)


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric nodes and weights relative to a parent triangle."""

    nodes: np.ndarray  # (k, 3)
    weights: np.ndarray  # (k,), sums to 1

    def __len__(self):
        return len(self.weights)


def _subtriangle_rule(corners_bary: np.ndarray, base: QuadratureRule) -> tuple[np.ndarray, np.ndarray, float]:
    """Map ``base`` onto a sub-triangle given by the parent-barycentric
    coordinates of its corners. Returns nodes, weights and the area ratio."""
    c = corners_bary
    nodes = base.nodes @ c
    # area ratio of the sub-triangle in barycentric coordinates
    m = np.array([[c[1, 1] - c[0, 1], c[2, 1] - c[0, 1]], [c[1, 2] - c[0, 2], c[2, 2] - c[0, 2]]])
    ratio = abs(np.linalg.det(m))
    return nodes, base.weights * ratio, ratio


def origin_composite_rule(layers: int = 6, ratio: float = 0.5, base: QuadratureRule | None = None) -> QuadratureRule:
    """Composite rule for a triangle whose first vertex is the singular point.

    The triangle is cut into ``layers`` trapezoidal bands
    ``ratio^(l+1) <= s <= ratio^l`` (``s`` the scaling toward vertex 0),
    each split in two sub-triangles, plus the innermost triangle
    ``s <= ratio^layers``. Every sub-triangle uses ``base`` (default: the
    3-point interior rule), so no node lands on vertex 0.
    """
    if base is None:
        base = QuadratureRule(STRANG3_NODES, STRANG3_WEIGHTS)

    def pt(s, which):
        # point s*V_which + (1-s)*V_0 in barycentric coordinates
        out = np.array([1.0 - s, 0.0, 0.0])
        out[which] = s
        return out

    nodes, weights = [], []
    for layer in range(layers):
        hi = ratio**layer
        lo = ratio ** (layer + 1)
        for tri in (
            np.array([pt(hi, 1), pt(hi, 2), pt(lo, 2)]),
            np.array([pt(hi, 1), pt(lo, 2), pt(lo, 1)]),
        ):
            n, w, _ = _subtriangle_rule(tri, base)
            nodes.append(n)
            weights.append(w)
    s = ratio**layers
    n, w, _ = _subtriangle_rule(np.array([pt(0.0, 1), pt(s, 1), pt(s, 2)]), base)
    nodes.append(n)
    weights.append(w)
    return QuadratureRule(np.concatenate(nodes), np.concatenate(weights))


DUNAVANT7 = QuadratureRule(DUNAVANT7_NODES, DUNAVANT7_WEIGHTS)
