"""Multisections: coherence, the cone condition and the Lipschitz bound."""

import numpy as np

from qgmt import SampledQField, check_coherence, check_cone, from_qfield, lipschitz_from_cone

axes = [np.linspace(-1.0, 1.0, 21)]

jump = from_qfield(SampledQField.from_sheets(axes, [lambda p: np.sign(p[0])]))
print("sign jump coherent:", check_coherence(jump, 0.5).coherent)

steep = from_qfield(SampledQField.from_sheets(axes, [lambda p: 2 * p[0]]))
print("[[2x]] cone constant:", check_cone(steep, np.inf).cone_constant)

double = from_qfield(SampledQField.from_sheets(axes, [lambda p: p[0]], [2]))
rep = lipschitz_from_cone(double)
print(f"2[[x]]: Lip = {rep.lipschitz:.6f}, sqrt(Q) * cone constant = {rep.bound:.6f}")
