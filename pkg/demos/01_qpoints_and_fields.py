"""Q-points, their distance, and splitting a field into separated parts."""

import math

import numpy as np

from qgmt import QPoint, SampledQField, decompose, distance, lipschitz_estimate, optimal_matching

# Two copies of the origin against a symmetric pair: every matching costs 2.
A, B = QPoint([0.0], [2]), QPoint([1.0, -1.0])
print("G(2[[0]], [[1]] + [[-1]]) =", distance(A, B), "sqrt(2) =", math.sqrt(2))
print("lexicographically first optimal matching:", optimal_matching(A.expanded(), B.expanded()).tolist())

# A 3-valued field on [0, 1]: a doubled sheet and a single sheet far above it.
axes = [np.linspace(0.0, 1.0, 11)]
u = SampledQField.from_sheets(axes, [lambda p: p[0], lambda p: p[0] + 20.0], [2, 1])
print("Lip(u) estimate:", lipschitz_estimate(u))
u1, u2 = decompose(u, 0, 0, 1)
print("parts have Q =", u1.Q, "and", u2.Q)

# With a gap of only 10 the separation test (gap > 3 Q Lip diam) is not met.
close = SampledQField.from_sheets(axes, [lambda p: p[0], lambda p: p[0] + 10.0], [2, 1])
print("gap 10:", decompose(close, 0, 0, 1))
