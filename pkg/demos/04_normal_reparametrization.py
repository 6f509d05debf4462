"""Rewrite a two-valued graph as a field of normal vectors over a curved surface."""

from qgmt import GraphSurface, SheetField, build_normal_field, verify_estimates, verify_graph_identity
from qgmt.polynomial import Polynomial

# phi(x, y) = 0.001 (x^2 - y^2), f = [[0.001 x + 0.002]] + [[0.001 y - 0.002]]
phi = Polynomial([[0, 0], [2, 0], [0, 2]], [[0.0], [0.001], [-0.001]])
surface = GraphSurface(phi, s=0.5)
f = SheetField([Polynomial.affine([[0.001, 0.0]], [0.002]), Polynomial.affine([[0.0, 0.001]], [-0.002])])

N = build_normal_field(surface, f, c0=0.01, r=1.0, resolution=33)
print("vertices:", len(N.points), "fibre masses:", set(N.fiber_mass().tolist()))
print("largest Newton residual:", N.fibers.residuals.max(), "normality defect:", N.normality())

est = verify_estimates(N)
print("estimates pass:", est.passed)
for name in ("C_lipschitz", "C_center", "C_vertical"):
    print(f"  {name} = {est.constants[name]:.4f}")
print("  |N| / G(f, Q[[phi]]) ranges over", est.checks["th2_ratio_min"], "..", est.checks["th2_ratio_max"])

graph = verify_graph_identity(N)
print("graph identity:", graph.passed, "Hausdorff", graph.hausdorff, "<= bound", graph.bound)
print("probe crossing counts:", graph.probe_counts_F)
