"""Ambient domain handling: plane with compact support, or unit flat torus.

All geometry below lives in R^2 (curves in the plane, n=1).  On the torus the
period is 1 in both coordinates and displacements use the minimum-image
convention; every length scale in the rest of the code (kernel truncation,
bump widths, Huisken windows) is kept below the half-period so this is exact
for the quantities we integrate.
"""

from dataclasses import dataclass

import numpy as np

PLANE = "plane"
TORUS = "torus"


@dataclass(frozen=True)
class Domain:
    kind: str  # PLANE or TORUS
    # bounding box for plane mode, (xmin, ymin, xmax, ymax); geometry must stay
    # inside it (the weight handles unboundedness, not the geometry)
    bbox: tuple = (-8.0, -8.0, 8.0, 8.0)

    @property
    def periodic(self):
        return self.kind == TORUS

    @property
    def area(self):
        if self.periodic:
            return 1.0
        x0, y0, x1, y1 = self.bbox
        return (x1 - x0) * (y1 - y0)

    def wrap(self, x):
        """Map points into the fundamental cell [0,1)^2 (no-op in the plane)."""
        x = np.asarray(x, dtype=float)
        if self.periodic:
            return x - np.floor(x)
        return x

    def delta(self, a, b):
        """Displacement b - a, minimum image on the torus."""
        d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        if self.periodic:
            d = d - np.round(d)
        return d

    def distance(self, a, b):
        d = self.delta(a, b)
        return np.sqrt(np.sum(d * d, axis=-1))


def plane(bbox=(-8.0, -8.0, 8.0, 8.0)):
    return Domain(PLANE, tuple(float(v) for v in bbox))


def torus():
    return Domain(TORUS)
