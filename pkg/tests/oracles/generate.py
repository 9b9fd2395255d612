"""Regenerate frozen oracle values (run by hand; results are committed).

Oracles are computed independently of the package's quadrature paths:
adaptive scipy quadrature over the analytic phantom in polar coordinates
about the disk center.

    python3 tests/oracles/generate.py > tests/oracles/values.json
"""

from __future__ import annotations

import json
import math

import numpy as np
from scipy import integrate

from robinscatter.field_synth import default_components
from robinscatter.grid import Disk

EPS = 0.5
POINTS = [[1.5, 0.0, 0.5], [0.0, -2.0, 1.0], [1.2, 1.2, 0.3], [-3.0, 0.5, 2.0], [1.1, 0.2, 0.1]]


def _R(x, convention):
    disk = Disk()

    def f(phi, rho):
        z1, z2 = rho * math.cos(phi), rho * math.sin(phi)
        a1, a2, a3 = default_components(z1, z2, disk)
        d1, d2 = z1 - x[0], z2 - x[1]
        r = math.hypot(d1, d2)
        c, s = d1 / r, d2 / r
        b = a1 * c * c + a2 * s * s + 2 * a3 * c * s
        D2 = r * r + x[2] ** 2
        if convention == "area":
            return rho * b / D2 ** 2 / (4.0 ** (4 + EPS) * math.pi ** 2)
        return rho * b * (D2 / (r * r)) ** (1 + EPS) / D2 ** 2 / (2.0 ** (6 + 2 * EPS) * math.pi ** 4)

    # the phantom vanishes beyond 0.95 R
    return integrate.dblquad(f, 0.0, 0.95, 0.0, 2 * math.pi, epsabs=0, epsrel=1e-9)[0]


def main():
    out = {"epsilon": EPS, "points": POINTS,
           "R_derived": [_R(np.array(p), "derived") for p in POINTS],
           "R_area": [_R(np.array(p), "area") for p in POINTS]}
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
