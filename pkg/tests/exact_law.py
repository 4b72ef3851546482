"""Exact nuisance functions of a finite discrete law, for enumeration tests.

Rows carry the index of W in their single covariate column and the index of
Z in their single mediator column.
"""

import itertools

import numpy as np

from natdirect.oracle import observed_tables


class ExactNuisance:
    def __init__(self, law, contrast=(-1.0, 1.0), d=None):
        self.p_w, self.g_a, self.g_z, self.q = observed_tables(law)
        self.contrast = contrast
        self._d = d

    @staticmethod
    def _idx(x):
        return np.asarray(x, dtype=float)[:, 0].astype(int)

    def prop(self, w):
        return self.g_a[self._idx(w)]

    def prop_med(self, w, z):
        wi, zi = self._idx(w), self._idx(z)
        g = self.g_a[wi]
        num = g * self.g_z[wi, 1, zi]
        return num / (num + (1 - g) * self.g_z[wi, 0, zi])

    def outcome(self, w, a, z):
        wi, zi = self._idx(w), self._idx(z)
        a = np.broadcast_to(np.asarray(a, dtype=float), wi.shape).astype(int)
        return self.q[wi, a, zi]

    def pseudo(self, w):
        wi = self._idx(w)
        c0, c1 = self.contrast
        inner = c0 * self.q[:, 0, :] + c1 * self.q[:, 1, :]
        return (self.g_z[:, 0, :] * inner).sum(axis=1)[wi]

    def cond_eif(self, w, a, y):
        if self._d is None:
            return np.zeros(np.asarray(w).shape[0])
        return self._d(self._idx(w), np.asarray(a, int), np.asarray(y, int))


def support(law):
    """Arrays (w, a, z, y, prob) enumerating the observed law with binary Y."""
    p_w, g_a, g_z, q = observed_tables(law)
    rows = []
    for wi, a, zi, y in itertools.product(range(p_w.size), (0, 1), range(g_z.shape[2]), (0, 1)):
        pa = g_a[wi] if a else 1 - g_a[wi]
        py = q[wi, a, zi] if y else 1 - q[wi, a, zi]
        rows.append((wi, a, zi, y, p_w[wi] * pa * g_z[wi, a, zi] * py))
    arr = np.array(rows, dtype=float)
    return arr[:, :1], arr[:, 1], arr[:, 2:3], arr[:, 3], arr[:, 4]
