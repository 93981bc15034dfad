"""How the correlation curve settles in the tails.

The widest component takes over far from the centre.  When the widest sd is
shared the direction matters, and with equal sds there is a closed form.
"""

import numpy as np

from heritcurves import fixtures
from heritcurves.mixture import (
    BivariateMixture,
    correlation_curve,
    equal_sd_tail_limits,
    global_moments,
    tail_limits,
)


def show(name, model):
    g = global_moments(model)
    tl = tail_limits(model)
    far = correlation_curve(model, g.mu + g.sigma * np.array([-4.0, -10.0, -30.0, 4.0, 10.0, 30.0]))
    print(f"{name}: case {tl.case}, K_left={tl.left.K}, K_right={tl.right.K}")
    print(f"  limits {tl.left.rho_tilde:.4f} / {tl.right.rho_tilde:.4f}")
    print("  rho at mu -4, -10, -30 sd:", np.round(far[:3], 4))
    print("  rho at mu +4, +10, +30 sd:", np.round(far[3:], 4))


show("three components", fixtures.three_component_example())

shared = BivariateMixture.from_arrays([0.3, 0.4, 0.3], [-1.0, 0.0, 2.0], [1.5, 0.6, 1.5], [0.2, 0.5, 0.7])
show("shared widest sd", shared)

a = np.sqrt(4.5)
equal = BivariateMixture.from_arrays([1 / 3] * 3, [-a, 0.0, a], [1.0] * 3, [0.5, 0.2, 0.8])
show("equal sds", equal)
print("  closed form:", tuple(round(v, 4) for v in equal_sd_tail_limits(equal)))
