"""Exact enumeration of direct-effect functionals on finite discrete laws.

A :class:`DiscreteLaw` describes the structural model

    W ~ p_w,  V ~ p_v (independent of W),  A | W, V ~ Bern(p_a[w, v]),
    Z | W, V, A ~ p_z[w, v, a, :],  E[Y | W, V, A, Z] = m_v[w, v, a, z]

with V unmeasured. When the outcome mean does not depend on V (``m`` given
instead of ``m_v``) the observed-data functional built only from
(W, A, Z, Y) recovers the causal direct effect exactly; laws with a direct
V -> Y path serve as negative controls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteLaw:
    p_w: np.ndarray
    p_v: np.ndarray
    p_a: np.ndarray
    p_z: np.ndarray
    m: Optional[np.ndarray] = None
    m_v: Optional[np.ndarray] = None
    z_values: Optional[np.ndarray] = None

    def __post_init__(self):
        p_w = np.asarray(self.p_w, dtype=float)
        p_v = np.asarray(self.p_v, dtype=float)
        p_a = np.asarray(self.p_a, dtype=float)
        p_z = np.asarray(self.p_z, dtype=float)
        nw, nv = p_w.size, p_v.size
        if p_a.shape != (nw, nv):
            raise ValueError(f"p_a must have shape {(nw, nv)}")
        if p_z.ndim != 4 or p_z.shape[:3] != (nw, nv, 2):
            raise ValueError(f"p_z must have shape {(nw, nv, 2)} + (n_z,)")
        for name, arr in (("p_w", p_w), ("p_v", p_v), ("p_a", p_a), ("p_z", p_z)):
            if np.any(arr < 0) or np.any(arr > 1):
                raise ValueError(f"{name} has entries outside [0, 1]")
        for name, arr in (("p_w", p_w), ("p_v", p_v), ("p_z", p_z)):
            if np.max(np.abs(arr.sum(axis=-1) - 1.0)) > NORMALIZATION_TOL:
                raise ValueError(f"{name} rows must sum to one")
        nz = p_z.shape[3]
        if (self.m is None) == (self.m_v is None):
            raise ValueError("give exactly one of m (V-free outcome means) or m_v")
        if self.m is not None:
            m = np.asarray(self.m, dtype=float)
            if m.shape != (nw, 2, nz):
                raise ValueError(f"m must have shape {(nw, 2, nz)}")
            object.__setattr__(self, "m", m)
        else:
            m_v = np.asarray(self.m_v, dtype=float)
            if m_v.shape != (nw, nv, 2, nz):
                raise ValueError(f"m_v must have shape {(nw, nv, 2, nz)}")
            object.__setattr__(self, "m_v", m_v)
        z_values = np.arange(nz, dtype=float) if self.z_values is None else np.asarray(self.z_values, float)
        if z_values.shape != (nz,):
            raise ValueError("z_values must list one label per mediator level")
        for name, arr in (("p_w", p_w), ("p_v", p_v), ("p_a", p_a), ("p_z", p_z), ("z_values", z_values)):
            object.__setattr__(self, name, arr)

    @property
    def shape(self):
        return self.p_w.size, self.p_v.size, self.p_z.shape[3]

    @property
    def v_to_y(self) -> bool:
        return self.m_v is not None

    def outcome_v(self) -> np.ndarray:
        """Outcome means indexed [w, v, a, z]."""
        if self.m_v is not None:
            return self.m_v
        nv = self.p_v.size
        return np.broadcast_to(self.m[:, None, :, :], (self.m.shape[0], nv) + self.m.shape[1:])

    def joint(self) -> np.ndarray:
        """P(W=w, V=v, A=a, Z=z) indexed [w, v, a, z]."""
        pa = np.stack([1.0 - self.p_a, self.p_a], axis=-1)
        return self.p_w[:, None, None, None] * self.p_v[None, :, None, None] * pa[..., None] * self.p_z

    def positivity(self) -> float:
        """Smallest of P(A=a | W) and P(Z=z | W, A=a) over the support."""
        j = self.joint()
        p_wa = j.sum(axis=(1, 3))
        g = p_wa / p_wa.sum(axis=1, keepdims=True)
        gz = j.sum(axis=1) / p_wa[..., None]
        return float(min(g.min(), gz.min()))

    def to_dict(self) -> dict:
        out = {"p_w": self.p_w.tolist(), "p_v": self.p_v.tolist(), "p_a": self.p_a.tolist(),
               "p_z": self.p_z.tolist(), "z_values": self.z_values.tolist()}
        if self.m is not None:
            out["m"] = self.m.tolist()
        else:
            out["m_v"] = self.m_v.tolist()
        return out

    @classmethod
    def from_dict(cls, d) -> "DiscreteLaw":
        keys = {"p_w", "p_v", "p_a", "p_z", "m", "m_v", "z_values"}
        unknown = set(d) - keys
        if unknown:
            raise ValueError(f"unknown law fields {sorted(unknown)}")
        return cls(**{k: np.asarray(v, dtype=float) for k, v in d.items()})


def load_law(path) -> DiscreteLaw:
    """Read a law from a TOML file with array-valued keys named as the fields."""
    from ._toml import load_toml

    doc = load_toml(path)
    return DiscreteLaw.from_dict(doc.get("law", doc))


# --------------------------------------------------------------------------
# observed-data pieces


def observed_tables(law: DiscreteLaw):
    """(p(w), g_A(w) = P(A=1|w), g_Z(z|w,a), Q(w,a,z)) of the observed law.

    Q marginalizes V given the observed (w, a, z); g_Z is the observed mediator
    law within exposure arms.
    """
    j = law.joint()
    p_waz = j.sum(axis=1)
    p_wa = p_waz.sum(axis=2)
    g_a = p_wa[:, 1] / p_wa.sum(axis=1)
    g_z = p_waz / p_wa[..., None]
    q = (j * law.outcome_v()).sum(axis=1) / p_waz
    return law.p_w, g_a, g_z, q


def identified_components(law: DiscreteLaw):
    """(psi_0, psi_1) with psi_a = E[ E[Q(W, a, Z) | W, A=0] ]."""
    p_w, _, g_z, q = observed_tables(law)
    inner = (g_z[:, 0, None, :] * q).sum(axis=2)
    return float(p_w @ inner[:, 0]), float(p_w @ inner[:, 1])


def identified_functional(law: DiscreteLaw) -> float:
    psi0, psi1 = identified_components(law)
    return psi1 - psi0


def identified_rr(law: DiscreteLaw) -> float:
    psi0, psi1 = identified_components(law)
    if psi0 < 1e-12:
        raise ValueError("denominator risk is zero")
    return psi1 / psi0


def cde_functional(law: DiscreteLaw, z) -> float:
    """E[Q(W, 1, z) - Q(W, 0, z)] at the mediator level labelled ``z``."""
    hits = np.flatnonzero(law.z_values == z)
    if hits.size != 1:
        raise ValueError(f"z={z!r} is not in the mediator support")
    p_w, _, _, q = observed_tables(law)
    k = hits[0]
    return float(p_w @ (q[:, 1, k] - q[:, 0, k]))


def cde_average(law: DiscreteLaw) -> float:
    """Average of W-specific controlled effects over the A=0 mediator law."""
    p_w, _, g_z, q = observed_tables(law)
    cde_w = q[:, 1, :] - q[:, 0, :]
    return float(p_w @ (g_z[:, 0, :] * cde_w).sum(axis=1))


# --------------------------------------------------------------------------
# causal quantities


def _p_v_given_w_a0(law):
    j = law.p_v[None, :] * (1.0 - law.p_a)
    return j / j.sum(axis=1, keepdims=True)


def true_nde(law: DiscreteLaw) -> float:
    """Causal direct effect with the mediator drawn from its A=0 law given W.

    ``E[Y(a, z) | w]`` averages the structural outcome mean over V's own
    distribution; the mediator law is ``sum_v p(z | w, v, 0) p(v | w, A=0)``.
    """
    pv0 = _p_v_given_w_a0(law)
    g_z0 = np.einsum("wv,wvz->wz", pv0, law.p_z[:, :, 0, :])
    ey = np.einsum("v,wvaz->waz", law.p_v, law.outcome_v())
    return float(law.p_w @ (g_z0 * (ey[:, 1, :] - ey[:, 0, :])).sum(axis=1))


def causal_ate(law: DiscreteLaw) -> float:
    """E[Y(1) - Y(0)] with the mediator following its own intervened law."""
    my = law.outcome_v()
    ey = np.einsum("v,wvaz,wvaz->wa", law.p_v, law.p_z, my)
    return float(law.p_w @ (ey[:, 1] - ey[:, 0]))


def ate_equivalence_check(law: DiscreteLaw, tol: float = 1e-12) -> dict:
    """Compare intervened mediator laws and the resulting total-effect estimands.

    ``holds`` is whether Z(1) and Z(0) share their law given W.
    ``gap`` is |E_W E_{Z|W}[Q(W,1,Z) - Q(W,0,Z)] - E[Y(1) - Y(0)]|, the
    total-effect estimand built from the observed regression and the
    exposure-marginal mediator law; ``nde_gap`` compares the direct-effect
    functional with the causal total effect.
    """
    z0 = np.einsum("v,wvz->wz", law.p_v, law.p_z[:, :, 0, :])
    z1 = np.einsum("v,wvz->wz", law.p_v, law.p_z[:, :, 1, :])
    mediator_gap = float(np.max(np.abs(np.cumsum(z1, axis=1) - np.cumsum(z0, axis=1))))
    p_w, _, _, q = observed_tables(law)
    j = law.joint()
    p_z_w = j.sum(axis=(1, 2)) / p_w[:, None]
    estimand = float(p_w @ (p_z_w * (q[:, 1, :] - q[:, 0, :])).sum(axis=1))
    ate = causal_ate(law)
    return {
        "holds": mediator_gap <= tol,
        "gap": abs(estimand - ate),
        "mediator_gap": mediator_gap,
        "nde_gap": abs(identified_functional(law) - ate),
    }


# --------------------------------------------------------------------------
# random and discretized laws


def _simplex(rng, shape, k, floor):
    if floor * k >= 1:
        raise ValueError("floor too large for the number of levels")
    x = rng.dirichlet(np.ones(k), size=shape)
    return floor + (1.0 - floor * k) * x


def random_law(rng, n_w: int = 3, n_v: int = 3, n_z: int = 3, floor: float = 0.05,
               v_to_y: float = 0.0) -> DiscreteLaw:
    """Random law with every probability at least ``floor``.

    With ``v_to_y > 0`` the outcome mean moves by ``v_to_y`` between the
    first and last level of V on top of a random (w, a, z) table, creating
    a direct V -> Y path.
    """
    p_w = _simplex(rng, (), n_w, floor)
    p_v = _simplex(rng, (), n_v, floor)
    p_a = rng.uniform(floor, 1.0 - floor, (n_w, n_v))
    p_z = _simplex(rng, (n_w, n_v, 2), n_z, floor)
    if v_to_y <= 0:
        return DiscreteLaw(p_w, p_v, p_a, p_z, m=rng.uniform(floor, 1.0 - floor, (n_w, 2, n_z)))
    if v_to_y > 1 - 2 * floor:
        raise ValueError("v_to_y too large for outcome means in [floor, 1 - floor]")
    base = rng.uniform(floor, 1.0 - floor - v_to_y, (n_w, 2, n_z))
    shift = v_to_y * np.linspace(0.0, 1.0, n_v)
    return DiscreteLaw(p_w, p_v, p_a, p_z, m_v=base[:, None, :, :] + shift[None, :, None, None])


def discretize_confounding(gamma: float, v_points: int = 5, w_points: int = 3) -> DiscreteLaw:
    """Confounding-study law on quadrature grids for W1, W2 and V.

    Mediator and exposure models are the continuous ones evaluated at the
    nodes; outcome means are 3A + W1 + W2 + Z. Only for oracle checks.
    """
    from scipy.special import expit

    u, uw = np.polynomial.legendre.leggauss(w_points)
    x, xw = np.polynomial.hermite_e.hermegauss(w_points)
    v, vw = np.polynomial.hermite_e.hermegauss(v_points)
    w1 = np.repeat(u, w_points)
    w2 = np.tile(x, w_points)
    p_w = np.repeat(uw / uw.sum(), w_points) * np.tile(xw / xw.sum(), w_points)
    p_v = vw / vw.sum()
    lin = (w1 + w2)[:, None]
    p_a = expit(lin + v[None, :])
    pz1 = np.stack([expit(lin + gamma * v[None, :] + 3.0 * a) for a in (0, 1)], axis=2)
    p_z = np.stack([1.0 - pz1, pz1], axis=-1)
    z = np.array([0.0, 1.0])
    m = 3.0 * np.array([0.0, 1.0])[None, :, None] + (w1 + w2)[:, None, None] + z[None, None, :]
    return DiscreteLaw(p_w, p_v, p_a, p_z, m=m, z_values=z)


def oracle_suite(n_laws: int = 100, n_violations: int = 20, seed: int = 0,
                 v_to_y: float = 0.5, threshold: float = 1e-3) -> dict:
    """Identification checks on random conforming laws and V -> Y violation laws."""
    rng = np.random.default_rng(seed)
    gaps = []
    for _ in range(n_laws):
        law = random_law(rng)
        gaps.append(abs(identified_functional(law) - true_nde(law)))
    vgaps = []
    for _ in range(n_violations):
        law = random_law(rng, v_to_y=v_to_y)
        vgaps.append(abs(identified_functional(law) - true_nde(law)))
    vgaps = np.array(vgaps)
    return {
        "conforming_max_gap": float(max(gaps)) if gaps else 0.0,
        "conforming_gaps": gaps,
        "violation_gaps": vgaps.tolist(),
        "violations_detected": int(np.sum(vgaps > threshold)),
        "threshold": threshold,
    }
