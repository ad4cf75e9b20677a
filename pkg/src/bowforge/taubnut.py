"""Multi-Taub-NUT geometry and the closed-form abelian instantons on it.

Coordinates are (t1, t2, t3, tau).  The metric is

    g = V dt.dt + (dtau + eta)^2 / V,    V = ell + sum_s 1 / (2 |t - nu_s|)

with orientation V dt1 dt2 dt3 dtau.  Each monopole form eta_s is read off the
spinor section used by the Dirac operator,

    eta_s = -Im(b_s^dag db_s) / (2 |t - nu_s|),   b_s = spinor_from_vector(t - nu_s, 0, patch),

which in spherical coordinates about nu_s is -(1 - cos th)/2 dphi in the north
chart and (1 + cos th)/2 dphi in the south chart, and satisfies
d eta_s = *d(1/(2 r_s)).

A real covector ``a`` (components on dt1, dt2, dt3, dtau) stands for the
U(1) connection d + i a; its curvature is F = i da.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.special import roots_legendre

from .quat import SingularInputError

# Sign of the monopole forms relative to the spinor section.  It is fixed by
# the section formula above; the tests re-derive it from cigar ch1.
ETA_SIGN = 1.0
# Orientation flag for the Hodge star: +1 means V dt1 dt2 dt3 dtau is positive.
ORIENTATION = 1.0
# Circumference of the tau circle: one full turn of a spinor phase.
TAU_PERIOD = 2 * np.pi


@dataclass(frozen=True)
class TaubNutConfig:
    ell: float
    nuts: np.ndarray  # (k, 3)

    def __post_init__(self):
        nuts = np.atleast_2d(np.asarray(self.nuts, dtype=float))
        object.__setattr__(self, "nuts", nuts)
        object.__setattr__(self, "ell", float(self.ell))
        if self.ell <= 0:
            raise ValueError("ell must be positive")
        for i in range(len(nuts)):
            for j in range(i):
                if np.allclose(nuts[i], nuts[j]):
                    raise ValueError(f"NUT positions {i} and {j} coincide")

    @property
    def k(self) -> int:
        return len(self.nuts)


@dataclass(frozen=True)
class BasePoint:
    t: np.ndarray
    tau: float = 0.0
    patches: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))


@dataclass(frozen=True)
class AbelianInstanton:
    lam: float
    v: tuple

    def __post_init__(self):
        v = tuple(int(x) for x in self.v)
        if any(float(a) != b for a, b in zip(self.v, v)):
            raise ValueError("abelian charges must be integers")
        object.__setattr__(self, "v", v)


def choose_patches(cfg: TaubNutConfig, t) -> tuple:
    """Per-NUT chart whose excluded axis is farther from t."""
    r = np.asarray(t, dtype=float) - cfg.nuts
    return tuple("north" if ri[2] >= 0 else "south" for ri in r)


def _patches(cfg, point_or_patches, t):
    if isinstance(point_or_patches, BasePoint):
        p = point_or_patches.patches
    else:
        p = point_or_patches
    if p is None:
        return choose_patches(cfg, t)
    if isinstance(p, str):
        return (p,) * cfg.k
    return tuple(p)


def _offsets(cfg, t):
    r = np.asarray(t, dtype=float) - cfg.nuts
    rn = np.linalg.norm(r, axis=1)
    if np.any(rn == 0):
        raise SingularInputError("point coincides with a NUT")
    return r, rn


def potential(cfg: TaubNutConfig, t) -> float:
    _, rn = _offsets(cfg, t)
    return cfg.ell + float(np.sum(0.5 / rn))


def potential_gradient(cfg: TaubNutConfig, t) -> np.ndarray:
    r, rn = _offsets(cfg, t)
    return -0.5 * np.sum(r / rn[:, None] ** 3, axis=0)


def left_potential(cfg: TaubNutConfig, p_points, v, t, inclusive=False) -> float:
    """V_l(v) = v + sum over p_s < v of 1/(2 r_s); ``inclusive`` also counts p_s = v."""
    _, rn = _offsets(cfg, t)
    p = np.asarray([float(x) for x in p_points])
    mask = p <= v if inclusive else p < v
    return float(v) + float(np.sum(0.5 / rn[mask]))


def eta_components(cfg: TaubNutConfig, t, patches=None) -> np.ndarray:
    """Array (k, 3) with the dt^j components of each eta_s."""
    r, rn = _offsets(cfg, t)
    patches = _patches(cfg, patches, t)
    out = np.zeros((cfg.k, 3))
    for s, (ri, ni, patch) in enumerate(zip(r, rn, patches)):
        x, y, z = ri
        if patch == "north":
            d = ni + z
            if d <= 1e-14 * ni:
                raise SingularInputError(f"point lies on the excluded axis of NUT {s} in the north chart")
            c = -1.0 / (2 * ni * d)
        elif patch == "south":
            d = ni - z
            if d <= 1e-14 * ni:
                raise SingularInputError(f"point lies on the excluded axis of NUT {s} in the south chart")
            c = 1.0 / (2 * ni * d)
        else:
            raise ValueError(f"unknown patch {patch!r}")
        # c (x dy - y dx)
        out[s] = ETA_SIGN * c * np.array([-y, x, 0.0])
    return out


def eta(cfg: TaubNutConfig, point) -> np.ndarray:
    t = point.t if isinstance(point, BasePoint) else point
    return eta_components(cfg, t, point if isinstance(point, BasePoint) else None).sum(axis=0)


def metric(cfg: TaubNutConfig, point) -> np.ndarray:
    t = point.t if isinstance(point, BasePoint) else np.asarray(point, dtype=float)
    V = potential(cfg, t)
    et = eta(cfg, point)
    g = np.zeros((4, 4))
    g[:3, :3] = V * np.eye(3) + np.outer(et, et) / V
    g[:3, 3] = g[3, :3] = et / V
    g[3, 3] = 1.0 / V
    return g


def coframe(cfg: TaubNutConfig, t, patches=None) -> np.ndarray:
    """Orthonormal coframe E with e^a = E[a, mu] dx^mu."""
    V = potential(cfg, t)
    et = eta_components(cfg, t, patches).sum(axis=0)
    E = np.zeros((4, 4))
    E[:3, :3] = np.sqrt(V) * np.eye(3)
    E[3, :3] = et / np.sqrt(V)
    E[3, 3] = 1.0 / np.sqrt(V)
    return E


_EPS4 = np.zeros((4, 4, 4, 4))
for _p in permutations(range(4)):
    _EPS4[_p] = np.linalg.det(np.eye(4)[list(_p)])


def to_frame(F, E) -> np.ndarray:
    """Coordinate components F[mu, nu, ...] -> orthonormal-frame components."""
    Einv = np.linalg.inv(E)  # Einv[mu, a]
    return np.einsum("ma,nb,mn...->ab...", Einv, Einv, F)


def hodge_frame(Ff) -> np.ndarray:
    return ORIENTATION * 0.5 * np.einsum("abcd,cd...->ab...", _EPS4, Ff)


def asd_residual(F, cfg: TaubNutConfig, t, patches=None) -> float:
    """||F + *F|| / ||F|| in the orthonormal frame (F indexed [mu, nu, ...])."""
    Ff = to_frame(np.asarray(F), coframe(cfg, t, patches))
    num = np.linalg.norm((Ff + hodge_frame(Ff)).ravel())
    den = np.linalg.norm(Ff.ravel())
    return float(num / den) if den > 0 else 0.0


def curvature_norm(F, cfg: TaubNutConfig, t, patches=None) -> float:
    """Pointwise metric norm sqrt(sum_{a<b} |F_ab|^2) with Frobenius on matrix entries."""
    Ff = to_frame(np.asarray(F), coframe(cfg, t, patches))
    return float(np.sqrt(0.5) * np.linalg.norm(Ff.ravel()))


def taut_connection(cfg: TaubNutConfig, p_points, v, point) -> np.ndarray:
    """a_v = V_l(v) (dtau + eta) / V - sum_{p_s < v} eta_s, as a real covector."""
    t = point.t if isinstance(point, BasePoint) else np.asarray(point, dtype=float)
    V = potential(cfg, t)
    Vl = left_potential(cfg, p_points, v, t)
    ec = eta_components(cfg, t, point if isinstance(point, BasePoint) else None)
    left = np.asarray([float(p) < float(v) for p in p_points])
    a = np.zeros(4)
    a[:3] = Vl / V * ec.sum(axis=0) - ec[left].sum(axis=0)
    a[3] = Vl / V
    return a


def _harmonic(cfg, inst, t):
    r, rn = _offsets(cfg, t)
    v = np.asarray(inst.v, dtype=float)
    H = inst.lam + float(np.sum(0.5 * v / rn))
    dH = -0.5 * np.sum(v[:, None] * r / rn[:, None] ** 3, axis=0)
    return H, dH


def abelian_connection(cfg: TaubNutConfig, inst: AbelianInstanton, point) -> np.ndarray:
    """a = sum_s v_s eta_s - (H/V)(dtau + eta) with H = lam + sum_s v_s/(2 r_s)."""
    t = point.t if isinstance(point, BasePoint) else np.asarray(point, dtype=float)
    V = potential(cfg, t)
    H, _ = _harmonic(cfg, inst, t)
    ec = eta_components(cfg, t, point if isinstance(point, BasePoint) else None)
    v = np.asarray(inst.v, dtype=float)
    a = np.zeros(4)
    a[:3] = v @ ec - H / V * ec.sum(axis=0)
    a[3] = -H / V
    return a


def abelian_curvature(cfg: TaubNutConfig, inst: AbelianInstanton, point) -> np.ndarray:
    """Exact f = da (4x4 antisymmetric); the curvature is i f."""
    t = point.t if isinstance(point, BasePoint) else np.asarray(point, dtype=float)
    r, rn = _offsets(cfg, t)
    V = potential(cfg, t)
    dV = potential_gradient(cfg, t)
    H, dH = _harmonic(cfg, inst, t)
    q = H / V
    dq = (dH * V - H * dV) / V**2
    ec = eta_components(cfg, t, point if isinstance(point, BasePoint) else None)
    et = ec.sum(axis=0)
    v = np.asarray(inst.v, dtype=float)
    grads = -0.5 * r / rn[:, None] ** 3  # d(1/(2 r_s))
    star = ETA_SIGN * np.einsum("s,sc->c", v - q, grads)  # sum (v_s - q) * d(1/2r_s)
    f = np.zeros((4, 4))
    eps3 = _EPS4[:3, :3, :3, 3]
    f[:3, :3] = np.einsum("abc,c->ab", eps3, star) - (np.outer(dq, et) - np.outer(et, dq))
    f[:3, 3] = -dq
    f[3, :3] = dq
    return f


def cigar_ch1(cfg: TaubNutConfig, inst: AbelianInstanton, sigma: int, direction,
              n_u: int = 200, n_tau: int = 64, scale: float = 1.0) -> float:
    """(i/2pi) times the integral of F over the cigar above the ray nu_sigma + u n."""
    n = np.asarray(direction, dtype=float)
    n = n / np.linalg.norm(n)
    _check_ray(cfg, sigma, n)
    x, w = roots_legendre(n_u)
    th = 0.25 * np.pi * (x + 1.0)
    wth = 0.25 * np.pi * w
    u = scale * np.tan(th)
    du = scale / np.cos(th) ** 2
    taus = np.arange(n_tau) * (TAU_PERIOD / n_tau)
    total = 0.0
    for tau in taus:
        vals = np.empty(n_u)
        for i, ui in enumerate(u):
            t = cfg.nuts[sigma] + ui * n
            f = abelian_curvature(cfg, inst, BasePoint(t, tau, choose_patches(cfg, t)))
            vals[i] = n @ f[:3, 3]  # f(d/du, d/dtau)
        total += float(np.sum(vals * du * wth)) * (TAU_PERIOD / n_tau)
    # (i/2pi) * i f = -f / 2pi
    return -total / (2 * np.pi)


def _check_ray(cfg, sigma, n):
    for rho, nu in enumerate(cfg.nuts):
        if rho == sigma:
            continue
        d = nu - cfg.nuts[sigma]
        along = d @ n
        if along > 0 and np.linalg.norm(d - along * n) < 1e-9 * max(1.0, np.linalg.norm(d)):
            raise ValueError(f"ray from NUT {sigma} hits NUT {rho}; choose another direction")


def ch2_abelian(cfg: TaubNutConfig, inst: AbelianInstanton) -> float:
    x = inst.lam / cfg.ell
    v = np.asarray(inst.v, dtype=float)
    return float(-0.5 * x**2 * cfg.k + x * v.sum() - 0.5 * np.sum(v**2))


def ch2_abelian_quadrature(cfg: TaubNutConfig, inst: AbelianInstanton, n_r: int = 64,
                           n_theta: int = 24, n_phi: int = 24) -> float:
    """(1/2)(i/2pi)^2 int F^F by volume quadrature.

    The integrand does not depend on tau.  Space is split by the smooth
    partition of unity w_s = r_s^-4 / sum r^-4 and each piece is integrated
    in spherical coordinates about its own NUT (radius u = tan th).
    """
    xr, wr = roots_legendre(n_r)
    th = 0.25 * np.pi * (xr + 1.0)
    rad = np.tan(th)
    wrad = 0.25 * np.pi * wr / np.cos(th) ** 2
    xc, wc = roots_legendre(n_theta)
    phis = np.arange(n_phi) * (2 * np.pi / n_phi)
    wphi = 2 * np.pi / n_phi
    total = 0.0
    for s in range(cfg.k):
        acc = 0.0
        for ri, wri in zip(rad, wrad):
            for ci, wci in zip(xc, wc):
                si = np.sqrt(1 - ci**2)
                for ph in phis:
                    dirv = np.array([si * np.cos(ph), si * np.sin(ph), ci])
                    t = cfg.nuts[s] + ri * dirv
                    dist = np.linalg.norm(t - cfg.nuts, axis=1)
                    part = dist[s] ** -4 / np.sum(dist**-4.0)
                    f = abelian_curvature(cfg, inst, BasePoint(t, 0.0, choose_patches(cfg, t)))
                    dens = f[0, 1] * f[2, 3] - f[0, 2] * f[1, 3] + f[0, 3] * f[1, 2]
                    acc += part * dens * ri**2 * wri * wci * wphi
        total += acc
    # (1/2)(i/2pi)^2 * int (i f)^(i f) = (1/8pi^2) int f^f, f^f = 2 dens d^4x, tau integral 2pi
    return float(total * TAU_PERIOD * 2 / (8 * np.pi**2))


def charfe(p_points, s, sigma: int | None = None):
    """(ch1 over each cigar, ch2) of the tautological bundle at bow position s."""
    p = [float(x) for x in p_points]
    ch1 = tuple(1 if x < float(s) else 0 for x in p)
    ch2 = -0.5 * sum(ch1)
    if sigma is not None:
        return ch1[sigma], ch2
    return ch1, ch2


def charfe_instanton(p_points, s) -> AbelianInstanton:
    """Charges (lam, v) for which the abelian connection equals a_s."""
    return AbelianInstanton(-float(s), tuple(-1 if float(x) < float(s) else 0 for x in p_points))


@dataclass(frozen=True)
class TopologyTable:
    k: int

    def intersection_matrix(self) -> np.ndarray:
        """Rows/columns: cigars C_1..C_k then the sphere at infinity."""
        m = -np.eye(self.k + 1, dtype=int)
        m[: self.k, self.k] = m[self.k, : self.k] = -1
        m[self.k, self.k] = -self.k
        return m
