"""Integer chains, push-forward by a two-valued map, and the LP flat norm."""

import numpy as np

from qgmt import (
    PLQField,
    SimplicialChain,
    boundary,
    check_boundary_commutation,
    grid_complex,
    qpushforward,
    simplicial_flat_norm,
)

unit = SimplicialChain.simplex([[0.0], [1.0]])
print("boundary of [0,1]:", boundary(unit).to_json()["terms"])

# u(x) = [[x]] + [[-x]] on [0, 1]; its push-forward is two segments.
u = PLQField([[0.0], [1.0]], [[0, 1]], [[[[0.0], [1.0]], [[0.0], [-1.0]]]])
image = qpushforward(u, unit)
print("u#[0,1] terms:", [(v.ravel().tolist(), c) for v, c in image.terms])
rep = check_boundary_commutation(u, unit)
print("boundary commutes:", rep.passed, "->", [(v.ravel().tolist(), c) for v, c in rep.lhs.terms])

# The flat norm of [[1]] - [[0]] on one segment: fill it for cost 1.
K = grid_complex(1, 1)
res = simplicial_flat_norm(boundary(unit), K)
print("flat norm:", res.value, "integral filling:", res.integral)

# Boundary of the unit square: cheaper to fill (area 1) than to keep (length 4).
square = grid_complex(2, 2)
print("flat norm of the square's boundary:", simplicial_flat_norm(boundary(square.fundamental_chain()), square).value)
