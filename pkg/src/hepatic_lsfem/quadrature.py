"""Quadrature rules on the reference triangle and on edges."""

import numpy as np

# Symmetric 6-point rule, exact to degree 4 (Strang & Fix).
_A1, _W1 = 0.445948490915965, 0.223381589678011
_A2, _W2 = 0.091576213509771, 0.109951743655322

TRI_POINTS = np.array([
    [_A1, _A1], [1 - 2 * _A1, _A1], [_A1, 1 - 2 * _A1],
    [_A2, _A2], [1 - 2 * _A2, _A2], [_A2, 1 - 2 * _A2],
])
# weights sum to 1: multiply by the triangle area
TRI_WEIGHTS = np.array([_W1, _W1, _W1, _W2, _W2, _W2])

# 3-point Gauss-Legendre on [0, 1]
EDGE_POINTS = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
EDGE_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


def triangle_rule():
    return TRI_POINTS, TRI_WEIGHTS


def edge_rule():
    return EDGE_POINTS, EDGE_WEIGHTS
