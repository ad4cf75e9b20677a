"""The Up transform: kernel frames over base points, the induced connection,
its curvature and the asymptotic and topological diagnostics.

A kernel element has components at bow positions: chi at s, w at its
lambda-point, n_plus at p- and n_minus at p+.  The fiber coordinate of the
small representation acts on a component at position v through

    grad_mu psi = d_mu psi + i w_mu(v) psi,
    w_tau(v) = -V_l(v)/V,    w_j(v) = sum_{p_s < v} eta_s^j - (V_l(v)/V) eta^j,

so the connection matrices are A_mu = <psi, d_mu psi> + i <psi, w_mu psi>.
Coordinates are ordered (t1, t2, t3, tau).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
import scipy.linalg as sla

from .bow import derived_counts
from .dirac import KernelBasis, NonGenericPointError, matching_kernel, pairing, twist_point
from .nahm import BowSolution
from .taubnut import TaubNutConfig, asd_residual, choose_patches, curvature_norm, eta_components, potential


def taub_nut_of(sol: BowSolution) -> TaubNutConfig:
    return TaubNutConfig(float(sol.rep.ell), sol.nu)


@dataclass
class FiberWeights:
    """w_mu as a linear function of s on every arc and a value per point component."""

    arc_const: dict  # arc index -> (4,) value at the arc start
    arc_slope: dict  # arc index -> (4,) d w / d s
    points: np.ndarray  # (n_points, 4)


def fiber_weights(sol: BowSolution, cfg: TaubNutConfig, t, patches, components) -> FiberWeights:
    t = np.asarray(t, dtype=float)
    r = np.linalg.norm(t - cfg.nuts, axis=1)
    V = potential(cfg, t)
    ec = eta_components(cfg, t, patches)
    eta = ec.sum(axis=0)
    p = np.array([float(x) for x in sol.rep.bow.p_points])

    def weight(v, left):
        Vl = v + float(np.sum(0.5 / r[left]))
        w = np.empty(4)
        w[:3] = ec[left].sum(axis=0) - Vl / V * eta
        w[3] = -Vl / V
        return w

    slope = np.concatenate([-eta / V, [-1.0 / V]])
    const, slopes = {}, {}
    for a in sol.rep.arcs():
        s0 = float(a.start)
        const[a.index] = weight(s0, p <= s0 if a.index else p < 0)
        slopes[a.index] = slope
    pts = np.zeros((len(components), 4))
    for i, c in enumerate(components):
        left = p < c.position
        if c.include_own_p:
            left = left.copy()
            left[c.index] = True
        pts[i] = weight(c.position, left)
    return FiberWeights(const, slopes, pts)


@dataclass
class FramePoint:
    """A kernel frame at (t, tau) together with its fiber weights."""

    t: np.ndarray
    tau: float
    patches: tuple
    basis: KernelBasis
    weights: FiberWeights
    V: float

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.t, [self.tau]])


def frame_at(sol: BowSolution, x, patches=None, cfg: TaubNutConfig | None = None, **kw) -> FramePoint:
    cfg = cfg or taub_nut_of(sol)
    x = np.asarray(x, dtype=float)
    t, tau = x[:3], float(x[3]) if len(x) > 3 else 0.0
    if patches is None:
        patches = choose_patches(cfg, t)
    pt = twist_point(sol.nu, t, tau, patches)
    K = matching_kernel(sol, pt, **kw)
    return FramePoint(t, tau, tuple(patches), K, fiber_weights(sol, cfg, t, patches, K.components),
                      potential(cfg, t))


def weighted_pairing(a: FramePoint, b: FramePoint, mu: int) -> np.ndarray:
    """<psi_a, w_mu psi_b> using the weights of a (a and b are normally the same point)."""
    W = a.weights

    def arc_weight(i):
        return (W.arc_const[i][mu], W.arc_slope[i][mu], 0.0, 0.0)

    return pairing(a.basis, b.basis, arc_weight, W.points[:, mu])


def link(a: FramePoint, b: FramePoint, unitary: bool = True) -> np.ndarray:
    """<psi_a, exp(i int w) psi_b> along the straight segment a -> b (trapezoid in w).

    The overlap falls short of unitary at second order in the step; by
    default it is replaced by its polar (unitary) factor.
    """
    dx = b.x - a.x
    Wa, Wb = a.weights, b.weights

    def arc_weight(i):
        c = 0.5 * (Wa.arc_const[i] + Wb.arc_const[i]) @ dx
        s = 0.5 * (Wa.arc_slope[i] + Wb.arc_slope[i]) @ dx
        return (1.0, 0.0, c, s)

    ph = np.exp(1j * 0.5 * (Wa.points + Wb.points) @ dx)
    L = pairing(a.basis, b.basis, arc_weight, ph)
    if unitary:
        X, _, Yh = np.linalg.svd(L)
        L = X @ Yh
    return L


def align(new: FramePoint, ref: FramePoint) -> tuple[FramePoint, float]:
    """Rotate the frame of ``new`` to the Lowdin-orthonormalized projection of ``ref``.

    Returns the aligned frame and the defect ||psi_new - psi_ref||.
    """
    S = pairing(ref.basis, new.basis)  # <ref_i, new_j>
    X, sv, Yh = np.linalg.svd(S)
    U = Yh.conj().T @ X.conj().T
    aligned = FramePoint(new.t, new.tau, new.patches, new.basis.transformed(U), new.weights, new.V)
    defect = float(np.sqrt(max(0.0, 2 * new.basis.dim - 2 * float(np.sum(sv)))))
    return aligned, defect


@dataclass
class FrameField:
    points: dict  # key -> FramePoint (aligned)
    parent: dict  # key -> key of the frame it was aligned to (None for the root)
    defects: dict


def frame_field(sol: BowSolution, grid: dict, neighbors: dict, root, patches=None, **kw) -> FrameField:
    """Frames on a graph of base points, gauge-aligned along a breadth-first sweep.

    ``grid`` maps keys to 4-vectors (t1, t2, t3, tau); ``neighbors`` maps keys
    to adjacent keys.
    """
    cfg = taub_nut_of(sol)
    expected = len(sol.rep.lambda_points)
    raw = {}
    for key, x in grid.items():
        try:
            raw[key] = frame_at(sol, x, patches, cfg, expected_dim=expected, **kw)
        except NonGenericPointError as exc:
            raise NonGenericPointError(f"kernel dimension jump at grid point {key}: {exc}",
                                       exc.singular_values) from exc
    out, parent, defects = {root: raw[root]}, {root: None}, {root: 0.0}
    queue = deque([root])
    while queue:
        k = queue.popleft()
        for nb in neighbors.get(k, ()):
            if nb in out:
                continue
            out[nb], defects[nb] = align(raw[nb], out[k])
            parent[nb] = k
            queue.append(nb)
    return FrameField(out, parent, defects)


def connection_local(center: FramePoint, plus: dict, minus: dict, steps) -> np.ndarray:
    """A_mu at the center, shape (4, n, n).

    ``plus[mu]`` / ``minus[mu]`` are aligned frames at x +/- steps[mu] e_mu; a
    missing entry falls back to a one-sided difference.
    """
    n = center.basis.dim
    A = np.zeros((4, n, n), dtype=complex)
    for mu in range(4):
        p, m = plus.get(mu), minus.get(mu)
        if p is not None and m is not None:
            d = (pairing(center.basis, p.basis) - pairing(center.basis, m.basis)) / (2 * steps[mu])
        elif p is not None:
            d = (pairing(center.basis, p.basis) - np.eye(n)) / steps[mu]
        elif m is not None:
            d = (np.eye(n) - pairing(center.basis, m.basis)) / steps[mu]
        else:
            d = np.zeros((n, n))
        A[mu] = d + 1j * weighted_pairing(center, center, mu)
    return A


def connection_tau(center: FramePoint, plus=None, minus=None, step: float = 1.0) -> np.ndarray:
    """A_tau = <psi, d_tau psi> - i <psi, (V_l/V) psi>; the derivative term is
    dropped when no tau-neighbors are given."""
    n = center.basis.dim
    d = np.zeros((n, n), dtype=complex)
    if plus is not None and minus is not None:
        d = (pairing(center.basis, plus.basis) - pairing(center.basis, minus.basis)) / (2 * step)
    return d + 1j * weighted_pairing(center, center, 3)


def connection_t(center: FramePoint, plus: FramePoint, minus: FramePoint, j: int, step: float) -> np.ndarray:
    d = (pairing(center.basis, plus.basis) - pairing(center.basis, minus.basis)) / (2 * step)
    return d + 1j * weighted_pairing(center, center, j)


# --- curvature ----------------------------------------------------------------


def _offsets():
    """Stencil offsets: center, +/- e_mu, and +/- e_mu +/- e_nu for mu < nu."""
    offs = [(0, 0, 0, 0)]
    eye = np.eye(4, dtype=int)
    for mu in range(4):
        for s in (1, -1):
            offs.append(tuple(s * eye[mu]))
    for mu in range(4):
        for nu in range(mu + 1, 4):
            for a in (1, -1):
                for b in (1, -1):
                    offs.append(tuple(a * eye[mu] + b * eye[nu]))
    return offs


STENCIL = _offsets()


def _parent(off):
    nz = [i for i, v in enumerate(off) if v]
    if not nz:
        return None
    if len(nz) == 1:
        return (0, 0, 0, 0)
    # transport along the first coordinate, then the second
    p = list(off)
    p[nz[1]] = 0
    return tuple(p)


@dataclass
class LocalStencil:
    x: np.ndarray
    steps: np.ndarray
    frames: dict  # offset tuple -> aligned FramePoint
    defects: dict

    def at(self, off) -> FramePoint:
        return self.frames[tuple(off)]


def local_stencil(sol: BowSolution, x, steps, patches=None, **kw) -> LocalStencil:
    """Aligned frames on the 33-point stencil around x (shared chart for all points)."""
    cfg = taub_nut_of(sol)
    x = np.asarray(x, dtype=float)
    steps = np.broadcast_to(np.asarray(steps, dtype=float), (4,)).copy()
    if patches is None:
        patches = choose_patches(cfg, x[:3])
    expected = len(sol.rep.lambda_points)
    frames, defects = {}, {}
    for off in STENCIL:  # parents precede children in STENCIL order
        fp = frame_at(sol, x + np.asarray(off) * steps, patches, cfg, expected_dim=expected, **kw)
        par = _parent(off)
        if par is None:
            frames[off], defects[off] = fp, 0.0
        else:
            frames[off], defects[off] = align(fp, frames[par])
    return LocalStencil(x, steps, frames, defects)


def _unit(mu, s=1):
    e = [0, 0, 0, 0]
    e[mu] = s
    return tuple(e)


def _add(a, b):
    return tuple(int(i + j) for i, j in zip(a, b))


def _connection_at(st: LocalStencil, off, mu) -> np.ndarray:
    c = st.at(off)
    p, m = st.at(_add(off, _unit(mu))), st.at(_add(off, _unit(mu, -1)))
    h = st.steps[mu]
    return (pairing(c.basis, p.basis) - pairing(c.basis, m.basis)) / (2 * h) + 1j * weighted_pairing(c, c, mu)


def connection_at_center(st: LocalStencil) -> np.ndarray:
    return np.stack([_connection_at(st, (0, 0, 0, 0), mu) for mu in range(4)])


@dataclass
class CurvatureField:
    F: np.ndarray  # (4, 4, n, n) coordinate components
    route: str
    x: np.ndarray
    patches: tuple
    steps: np.ndarray

    def asd_residual(self, cfg: TaubNutConfig) -> float:
        return asd_residual(self.F, cfg, self.x[:3], self.patches)

    def norm(self, cfg: TaubNutConfig) -> float:
        return curvature_norm(self.F, cfg, self.x[:3], self.patches)


def curvature_difference(st: LocalStencil) -> np.ndarray:
    """F_mu_nu = d_mu A_nu - d_nu A_mu + [A_mu, A_nu] by central differences."""
    A0 = connection_at_center(st)
    n = A0.shape[-1]
    F = np.zeros((4, 4, n, n), dtype=complex)
    for mu in range(4):
        for nu in range(mu + 1, 4):
            dmu_Anu = (_connection_at(st, _unit(mu), nu) - _connection_at(st, _unit(mu, -1), nu)) / (2 * st.steps[mu])
            dnu_Amu = (_connection_at(st, _unit(nu), mu) - _connection_at(st, _unit(nu, -1), mu)) / (2 * st.steps[nu])
            f = dmu_Anu - dnu_Amu + A0[mu] @ A0[nu] - A0[nu] @ A0[mu]
            F[mu, nu], F[nu, mu] = f, -f
    return F


def curvature_clover(st: LocalStencil) -> np.ndarray:
    """F_mu_nu from the four plaquette loops based at the center (clover average)."""
    c = (0, 0, 0, 0)
    n = st.at(c).basis.dim
    F = np.zeros((4, 4, n, n), dtype=complex)
    for mu in range(4):
        for nu in range(mu + 1, 4):
            acc = np.zeros((n, n), dtype=complex)
            for a, b in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
                # a loop in the (mu, nu) orientation through the quadrant (a, b)
                p1, p3 = _unit(mu, a), _unit(nu, b)
                p2 = _add(p1, p3)
                path = [c, p1, p2, p3, c] if a * b > 0 else [c, p3, p2, p1, c]
                W = np.eye(n, dtype=complex)
                for u, v in zip(path, path[1:]):
                    W = W @ link(st.at(u), st.at(v))
                acc += sla.logm(W)
            f = acc / (4 * st.steps[mu] * st.steps[nu])
            F[mu, nu], F[nu, mu] = f, -f
    return F


def curvature(sol: BowSolution, x, steps, route: str = "difference", patches=None, **kw) -> CurvatureField:
    st = local_stencil(sol, x, steps, patches, **kw)
    if route == "difference":
        F = curvature_difference(st)
    elif route == "clover":
        F = curvature_clover(st)
    else:
        raise ValueError(f"unknown curvature route {route!r}")
    return CurvatureField(F, route, st.x, st.at((0, 0, 0, 0)).patches, st.steps)


def bianchi_residual(sol: BowSolution, x, steps, patches=None) -> float:
    """max |D_[mu F_nu rho]| over index triples, relative to max |F| at x.

    The curvature at x +/- h e_mu comes from its own stencil and is carried
    into the gauge of the center stencil by the overlap of the two frames.
    """
    cfg = taub_nut_of(sol)
    x = np.asarray(x, dtype=float)
    if patches is None:
        patches = choose_patches(cfg, x[:3])
    st = local_stencil(sol, x, steps, patches)
    A = connection_at_center(st)
    F0 = curvature_difference(st)
    DF = []
    for mu in range(4):
        side = []
        for s in (1, -1):
            nb = local_stencil(sol, x + s * st.steps[mu] * np.eye(4)[mu], st.steps, patches)
            G = pairing(nb.at((0, 0, 0, 0)).basis, st.at(_unit(mu, s)).basis)
            side.append(np.einsum("ab,mnbc,cd->mnad", G.conj().T, curvature_difference(nb), G))
        comm = np.einsum("ab,mnbc->mnac", A[mu], F0) - np.einsum("mnab,bc->mnac", F0, A[mu])
        DF.append((side[0] - side[1]) / (2 * st.steps[mu]) + comm)
    worst = 0.0
    for mu in range(4):
        for nu in range(mu + 1, 4):
            for rho in range(nu + 1, 4):
                cyc = DF[mu][nu, rho] + DF[nu][rho, mu] + DF[rho][mu, nu]
                worst = max(worst, float(np.abs(cyc).max()))
    return worst / float(np.abs(F0).max())


# --- asymptotics ----------------------------------------------------------------


def tau_hermitian(fp: FramePoint, plus: FramePoint | None = None, minus: FramePoint | None = None,
                  step: float = 0.1) -> np.ndarray:
    """The Hermitian matrix i V A_tau."""
    M = 1j * fp.V * connection_tau(fp, plus, minus, step)
    return 0.5 * (M + M.conj().T)


def _needs_tau_difference(sol: BowSolution) -> bool:
    # the kernel depends on tau only through the twist at the cut
    return sol.rep.r0 > 0


def tau_eigen_frame(sol: BowSolution, x, patches, cfg, ref: FramePoint | None = None, tau_step: float = 0.05):
    fp = frame_at(sol, x, patches, cfg, expected_dim=len(sol.rep.lambda_points))
    if ref is not None:
        fp, _ = align(fp, ref)
    plus = minus = None
    if _needs_tau_difference(sol):
        e = np.array([0, 0, 0, tau_step])
        plus = align(frame_at(sol, x + e, patches, cfg), fp)[0]
        minus = align(frame_at(sol, x - e, patches, cfg), fp)[0]
    return fp, tau_hermitian(fp, plus, minus, tau_step)


@dataclass
class AsymptoticFit:
    lam_hat: np.ndarray  # per branch (per ray: rays x branches)
    m_hat: np.ndarray
    m_hat_rounded: np.ndarray
    residual_slope: np.ndarray
    radii: np.ndarray
    eigenvalues: np.ndarray  # rays x radii x branches
    rays: np.ndarray
    expected_lam: np.ndarray
    expected_m: np.ndarray

    def lam_error(self) -> float:
        return float(np.abs(self.lam_hat - self.expected_lam[None, :]).max())

    def m_exact(self) -> bool:
        return bool(np.all(self.m_hat_rounded == self.expected_m[None, :]))


def ray_patches(cfg: TaubNutConfig, origin, direction) -> tuple:
    """A chart per NUT whose excluded half-axis the ray origin + u n (u > 0) avoids."""
    n = np.asarray(direction, float) / np.linalg.norm(direction)
    o = np.asarray(origin, float)
    out = []
    for nu in cfg.nuts:
        r0 = o - nu
        # closest approach of the ray to the vertical line through nu
        dxy = n[:2] @ n[:2]
        u = max(0.0, -(r0[:2] @ n[:2]) / dxy) if dxy > 0 else 0.0
        r = r0 + u * n
        on_axis = np.hypot(r[0], r[1]) < 1e-9 * (1 + np.linalg.norm(r))
        if dxy == 0:
            out.append("north" if n[2] > 0 or r0[2] >= 0 and n[2] >= 0 else "south")
        elif on_axis and r[2] < 0:
            out.append("south")
        else:
            out.append("north")
    return tuple(out)


def asymptotic_fit(sol: BowSolution, rays, radii, tau: float = 0.0) -> AsymptoticFit:
    """Eigenvalues of i V A_tau along rays t = r n, fitted to lam + m/(2r) + c/r^2."""
    cfg = taub_nut_of(sol)
    rays = np.atleast_2d(np.asarray(rays, float))
    radii = np.asarray(radii, float)
    counts = derived_counts(sol.rep)
    lam_exact = np.array([float(x) for x in sol.rep.lambda_points])
    m_exact = np.array(counts.m_hat)
    n = len(lam_exact)
    eig = np.zeros((len(rays), len(radii), n))
    lam_hat = np.zeros((len(rays), n))
    m_hat = np.zeros((len(rays), n))
    slopes = np.zeros((len(rays), n))
    for ir, ray in enumerate(rays):
        d = ray / np.linalg.norm(ray)
        patches = ray_patches(cfg, np.zeros(3), d)
        ref, prev_vecs = None, None
        for k, r in enumerate(radii):
            x = np.concatenate([r * d, [tau]])
            fp, M = tau_eigen_frame(sol, x, patches, cfg, ref)
            vals, vecs = np.linalg.eigh(M)
            if prev_vecs is not None:
                # follow branches by maximal eigenvector overlap
                overlap = np.abs(prev_vecs.conj().T @ vecs)
                order = _assignment(overlap)
                vals, vecs = vals[order], vecs[:, order]
            eig[ir, k] = vals
            ref, prev_vecs = fp, vecs
        # label branches by the nearest configured lambda at the largest radius
        lab = _assignment(-np.abs(lam_exact[:, None] - eig[ir, -1][None, :]))
        eig[ir] = eig[ir][:, lab]
        X = np.stack([np.ones_like(radii), 1 / (2 * radii), 1 / radii**2], axis=1)
        for i in range(n):
            coef, *_ = np.linalg.lstsq(X, eig[ir, :, i], rcond=None)
            lam_hat[ir, i], m_hat[ir, i] = coef[0], coef[1]
            res = np.abs(eig[ir, :, i] - (lam_exact[i] + m_exact[i] / (2 * radii)))
            slopes[ir, i] = np.polyfit(np.log(radii), np.log(res), 1)[0]
    return AsymptoticFit(lam_hat, m_hat, np.rint(m_hat).astype(int), slopes, radii, eig, rays,
                         lam_exact, m_exact)


def _assignment(score) -> np.ndarray:
    """order[i] = column matched to row i, maximizing the total score."""
    rows, cols = linear_sum_assignment(-np.asarray(score))
    out = np.empty(len(rows), dtype=int)
    out[rows] = cols
    return out


def curvature_decay(sol: BowSolution, direction, radii, rel_step: float = 0.02, tau_step: float = 0.05,
                    route: str = "difference"):
    """Pointwise curvature norm along a ray and its log-log slope."""
    cfg = taub_nut_of(sol)
    d = np.asarray(direction, float) / np.linalg.norm(direction)
    patches = ray_patches(cfg, np.zeros(3), d)
    norms = []
    for r in radii:
        steps = np.array([rel_step * r] * 3 + [tau_step])
        cf = curvature(sol, np.concatenate([r * d, [0.0]]), steps, route, patches)
        norms.append(cf.norm(cfg))
    norms = np.asarray(norms)
    return norms, float(np.polyfit(np.log(radii), np.log(norms), 1)[0])


# --- Chern numbers --------------------------------------------------------------


def fiber_wilson_phase(sol: BowSolution, t, patches, n_tau: int = 32, cfg=None) -> float:
    """Sum of arg det of the links around the fiber circle over t."""
    cfg = cfg or taub_nut_of(sol)
    taus = np.linspace(0.0, 2 * np.pi, n_tau + 1)
    if _needs_tau_difference(sol):
        frames = [frame_at(sol, np.concatenate([t, [tau]]), patches, cfg) for tau in taus]
    else:
        f0 = frame_at(sol, np.concatenate([t, [0.0]]), patches, cfg)
        frames = [FramePoint(f0.t, tau, f0.patches, f0.basis, f0.weights, f0.V) for tau in taus]
    return float(sum(np.angle(np.linalg.det(link(a, b, unitary=False))) for a, b in zip(frames, frames[1:])))


def cigar_ch1_numeric(sol: BowSolution, sigma: int, direction, u_min: float = 1e-4,
                      u_far=(200.0, 400.0, 800.0, 1600.0), n_tau: int = 32) -> tuple[float, float]:
    """(i/2pi) int tr F over the cigar above the ray nu_sigma + u n.

    By Stokes on u in [u_min, inf) the flux is minus the change of the fiber
    Wilson phase of the determinant line; the value at u = inf is extrapolated
    from the far samples with the 1/u asymptotic form.  Returns (value, error
    estimate from the extrapolation).
    """
    cfg = taub_nut_of(sol)
    d = np.asarray(direction, float) / np.linalg.norm(direction)
    nu = cfg.nuts[sigma]
    patches = ray_patches(cfg, nu, d)
    w0 = fiber_wilson_phase(sol, nu + u_min * d, patches, n_tau, cfg)
    u = np.asarray(u_far, float)
    w = np.array([fiber_wilson_phase(sol, nu + x * d, patches, n_tau, cfg) for x in u])
    X = np.stack([np.ones_like(u), 1 / u, 1 / u**2], axis=1)
    coef = np.linalg.lstsq(X, w, rcond=None)[0]
    coef2 = np.linalg.lstsq(X[:, :2], w, rcond=None)[0]
    w_inf = coef[0]
    val = -(w_inf - w0) / (2 * np.pi)
    err = abs(coef[0] - coef2[0]) / (2 * np.pi)
    return float(val), float(err)


@dataclass
class ChernReport:
    ch1_numeric: list
    ch1_error: list
    ch1_formula: list
    ch2_formula: float
    index: int

    def to_dict(self) -> dict:
        return {"ch1_numeric": self.ch1_numeric, "ch1_error": self.ch1_error,
                "ch1_formula": self.ch1_formula, "ch2_formula": self.ch2_formula, "index": self.index}


def ch1_formula(sol: BowSolution, sigma: int) -> float:
    rep = sol.rep
    c = derived_counts(rep)
    return c.delta_r_p[sigma] - c.r_p[sigma] + sum(float(x) for x in rep.lambda_points) / float(rep.ell)


def ch2_formula(sol: BowSolution) -> float:
    rep = sol.rep
    c = derived_counts(rep)
    x = np.array([float(v) for v in rep.lambda_points]) / float(rep.ell)
    m = np.array(c.m_hat, dtype=float)
    return float(-0.5 * m.sum() - rep.r0 + (x * m).sum() - 0.5 * rep.bow.k * (x**2).sum())


def chern_report(sol: BowSolution, directions=None, numeric: bool = True, **kw) -> ChernReport:
    k = sol.rep.bow.k
    if directions is None:
        directions = [np.array([0.3, 0.4, 0.866])] * k
    num, err = [], []
    for sigma in range(k):
        if numeric:
            v, e = cigar_ch1_numeric(sol, sigma, directions[sigma], **kw)
        else:
            v, e = float("nan"), float("nan")
        num.append(v)
        err.append(e)
    return ChernReport(num, err, [ch1_formula(sol, s) for s in range(k)], ch2_formula(sol), sol.rep.r0)
