"""The twisted bow Dirac operator and its kernel.

Two independent realizations are provided:

* the matching system: on each linear arc a kernel element solves
  x' = -i T x with i T = sum_j sigma_j (x) (T_j - t_j) constant, so it is a
  combination of exponential modes; the jump, edge and cut conditions become
  a finite linear system in the mode amplitudes, the W components at
  continuous lambda-points and the N components at p-points;
* a grid discretization of the same first-order system (first-order upwind
  or second-order box differences).

Sections are spinor-major vectors in S (x) E.  The L^2 pairing is Lebesgue
measure on the arcs plus a unit point mass for every W and N component.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .bow import BowRepresentation
from .nahm import BowSolution
from .quat import SIGMA, charge_conjugate, im_part, moment_vector, spinor_from_vector, su2_irrep
from .taubnut import TaubNutConfig, choose_patches


class NonGenericPointError(RuntimeError):
    """Kernel dimension differs from |Lambda| or the spectral gap is too small."""

    def __init__(self, message, singular_values=None):
        super().__init__(message)
        self.singular_values = singular_values


class RefineMeshError(RuntimeError):
    pass


@dataclass(frozen=True)
class TwistPoint:
    t: np.ndarray
    b: tuple  # one spinor per p-point
    tau: float = 0.0
    patches: tuple = ()

    def moment_residual(self, nu) -> float:
        nu = np.atleast_2d(nu)
        return max(float(np.linalg.norm(moment_vector(b) - (self.t - n))) for b, n in zip(self.b, nu))


def twist_point(nu, t, tau: float = 0.0, patches=None, phases=None) -> TwistPoint:
    """Point of the small-representation level set over (t, tau)."""
    nu = np.atleast_2d(np.asarray(nu, dtype=float))
    t = np.asarray(t, dtype=float)
    if patches is None:
        patches = choose_patches(TaubNutConfig(1.0, nu), t)
    elif isinstance(patches, str):
        patches = (patches,) * len(nu)
    phases = phases if phases is not None else np.zeros(len(nu))
    bs = tuple(spinor_from_vector(t - n, ph, pa) for n, ph, pa in zip(nu, phases, patches))
    return TwistPoint(t, bs, float(tau), tuple(patches))


def twisted_generator(T, t) -> np.ndarray:
    """The Hermitian matrix i T = sum_j sigma_j (x) (T_j - t_j)."""
    T = np.asarray(T, dtype=complex)
    R = T.shape[-1]
    eye = np.eye(R)
    return sum(np.kron(SIGMA[j], T[j] - t[j] * eye) for j in range(3))


def transfer_matrix(T, t, ds: float) -> np.ndarray:
    """exp(-i T ds), the propagator of x' = -i T x over a step ds."""
    T = np.asarray(T, dtype=complex)
    if T.ndim == 1:
        T = T[:, None, None]
    if T.shape[-1] == 1:
        v = np.real(T[:, 0, 0]) - np.asarray(t, dtype=float)
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            return np.eye(2, dtype=complex)
        vs = np.einsum("j,jab->ab", v / nv, SIGMA)
        return np.cosh(nv * ds) * np.eye(2) - np.sinh(nv * ds) * vs
    return sla.expm(-twisted_generator(T, t) * ds)


def transfer_matrix_sampled(block, t, a: float, b: float, rtol=1e-10, atol=1e-12) -> np.ndarray:
    """Propagator of x' = -i T(s) x for a SAMPLED block, T linearly interpolated."""
    s_nodes = np.asarray(block.s)
    gens = np.array([twisted_generator(T, t) for T in block.T])
    n = gens.shape[-1]

    def gen(s):
        i = int(np.clip(np.searchsorted(s_nodes, s) - 1, 0, len(s_nodes) - 2))
        w = (s - s_nodes[i]) / (s_nodes[i + 1] - s_nodes[i])
        return (1 - w) * gens[i] + w * gens[i + 1]

    def rhs(s, y):
        Y = y.view(complex).reshape(n, n)
        return (-1j * gen(s) @ Y).reshape(-1).view(float)

    y0 = np.eye(n, dtype=complex).reshape(-1).view(float).copy()
    out = solve_ivp(rhs, (a, b), y0, method="RK45", rtol=rtol, atol=atol)
    return out.y[:, -1].copy().view(complex).reshape(n, n)


# --- closed-form exponential integrals -------------------------------------


def _phi(z):
    """(e^z - 1)/z, elementwise, stable near 0."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-2
    zs = z[small]
    out[small] = 1 + zs / 2 + zs**2 / 6 + zs**3 / 24 + zs**4 / 120 + zs**5 / 720
    zb = z[~small]
    out[~small] = (np.exp(zb) - 1) / zb
    return out


def _psi(z):
    """int_0^1 x e^{z x} dx, elementwise, stable near 0."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-2
    zs = z[small]
    out[small] = 1 / 2 + zs / 3 + zs**2 / 8 + zs**3 / 30 + zs**4 / 144 + zs**5 / 840
    zb = z[~small]
    out[~small] = (np.exp(zb) * (zb - 1) + 1) / zb**2
    return out


def exp_moments(gamma, beta, L):
    """(int_0^L e^{gamma u + beta} du, int_0^L u e^{gamma u + beta} du).

    Assumes Re(beta) <= 0 and Re(gamma L + beta) <= 0, i.e. the integrand is
    bounded by 1 at both ends; the form used never exponentiates a large
    positive number.
    """
    gamma = np.asarray(gamma, dtype=complex)
    beta = np.broadcast_to(np.asarray(beta, dtype=complex), gamma.shape)
    z = gamma * L
    grow = z.real > 0
    m0 = np.empty_like(z)
    m1 = np.empty_like(z)
    d = ~grow
    m0[d] = np.exp(beta[d]) * L * _phi(z[d])
    m1[d] = np.exp(beta[d]) * L**2 * _psi(z[d])
    if np.any(grow):
        # substitute u = L - v so the exponent decreases from the right end
        e = np.exp(beta[grow] + z[grow])
        zg = -z[grow]
        m0[grow] = e * L * _phi(zg)
        m1[grow] = e * (L**2 * _phi(zg) - L**2 * _psi(zg))
    return m0, m1


@dataclass
class ArcModes:
    """Exponential modes x_n(s) = u_n exp(alpha_n (s - a) + beta_n) on [a, b]."""

    arc: int
    start: float
    end: float
    rank: int
    U: np.ndarray  # (2R, 2R) unitary, columns u_n
    kappa: np.ndarray  # eigenvalues of i T
    offset: int  # first column of this arc in the coefficient vector

    @property
    def size(self) -> int:
        return 2 * self.rank

    @property
    def length(self) -> float:
        return self.end - self.start

    @property
    def alpha(self):
        return -self.kappa

    @property
    def beta(self):
        # decaying modes referenced at the left end, growing ones at the right
        return np.where(self.kappa < 0, self.kappa * self.length, 0.0)

    def factors(self, s):
        """exp(alpha (s - a) + beta) for every mode, at the points s (array)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.exp(np.outer(s - self.start, self.alpha) + self.beta[None, :])

    def evaluate(self, coeffs, s):
        """Section values at the points s: array (len(s), 2R, ncols)."""
        f = self.factors(s)
        return np.einsum("mn,sn,n...->sm...", self.U, f, coeffs)

    def at_start(self):
        return self.U * np.exp(self.beta)[None, :]

    def at_end(self):
        return self.U * np.exp(self.alpha * self.length + self.beta)[None, :]


def arc_modes(sol: BowSolution, t) -> list[ArcModes]:
    out = []
    offset = 0
    for arc in sol.rep.arcs():
        R = arc.rank
        if R:
            block = sol.blocks[arc.index]
            if block.kind != "CONSTANT":
                raise ValueError("the matching system needs CONSTANT blocks")
            H = twisted_generator(block.T, t)
            kappa, U = np.linalg.eigh(H)
        else:
            kappa, U = np.zeros(0), np.zeros((0, 0), dtype=complex)
        out.append(ArcModes(arc.index, float(arc.start), float(arc.end), R, U, kappa, offset))
        offset += 2 * R
    return out


# --- matching system --------------------------------------------------------


@dataclass(frozen=True)
class PointComponent:
    """One W or N coordinate with the bow position whose fiber it carries."""

    kind: str  # "w", "n_plus" or "n_minus"
    index: int  # lambda index or sigma
    position: float
    include_own_p: bool  # n_minus sits at p+, so p_sigma itself counts as left of it


@dataclass
class MatchingSystem:
    matrix: np.ndarray
    modes: list
    components: list  # PointComponent per discrete column, in column order
    n_modes: int
    row_labels: list
    dims: dict
    rep: BowRepresentation = None

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def index(self) -> int:
        return self.matrix.shape[1] - self.matrix.shape[0]


def _spinor_kron(b, R):
    """b (x) I_R as a (2R, R) spinor-major block."""
    return np.kron(np.asarray(b, dtype=complex).reshape(2, 1), np.eye(R))


def _continuing_rows(R_big: int, n: int) -> np.ndarray:
    """Indices of the continuing components inside a spinor-major big fiber.

    The terminating directions come first in E, the continuing ones last.
    """
    return np.concatenate([a * R_big + np.arange(R_big - n, R_big) for a in range(2)])


def point_components(rep: BowRepresentation) -> list:
    components = []
    for a in rep.arcs()[:-1]:
        m = a.right
        lo, hi = rep.ranks[a.index], rep.ranks[a.index + 1]
        if m.kind == "lambda" and lo == hi:
            components.append(PointComponent("w", m.index, float(m.position), False))
        elif m.kind == "p":
            components += [PointComponent("n_plus", m.index, float(m.position), False)] * hi
            components += [PointComponent("n_minus", m.index, float(m.position), True)] * lo
    return components


def junction_rows(sol: BowSolution, pt: TwistPoint, ncols: int, first_point_col: int,
                  at_start, at_end):
    """Rows for the lambda-, p- and cut conditions.

    ``at_start(i)`` / ``at_end(i)`` return (column indices, 2R x len matrix)
    evaluating the section of arc i at its left / right end.
    """
    rep = sol.rep
    arcs = rep.arcs()
    rows, labels = [], []
    col = first_point_col

    def row(nr):
        return np.zeros((nr, ncols), dtype=complex)

    def put(r, ev, sign=1.0, sel=None):
        cols, mat = ev
        if sel is not None:
            mat = mat[sel]
        r[:, cols] += sign * mat

    for a in arcs[:-1]:
        m = a.right
        i_lo, i_hi = a.index, a.index + 1
        lo, hi = rep.ranks[i_lo], rep.ranks[i_hi]
        if m.kind == "lambda":
            if lo == hi:
                if lo:
                    r = row(2 * lo)
                    put(r, at_start(i_hi))
                    put(r, at_end(i_lo), -1.0)
                    Q = sol.Q.get(m.index)
                    if Q is None:
                        raise ValueError(f"missing Q at lambda-point {m.index}")
                    r[:, col] = -np.asarray(Q).reshape(-1)
                    rows.append(r)
                    labels += [("lambda", m.index)] * (2 * lo)
                col += 1
            else:
                n = min(lo, hi)
                if n:
                    r = row(2 * n)
                    if hi > lo:
                        put(r, at_start(i_hi), 1.0, _continuing_rows(hi, n))
                        put(r, at_end(i_lo), -1.0)
                    else:
                        put(r, at_start(i_hi))
                        put(r, at_end(i_lo), -1.0, _continuing_rows(lo, n))
                    rows.append(r)
                    labels += [("lambda", m.index)] * (2 * n)
        else:
            sigma = m.index
            b = pt.b[sigma]
            bc = charge_conjugate(b).reshape(-1)
            B = np.asarray(sol.B.get(sigma, np.zeros((2 * lo, hi))), dtype=complex).reshape(2 * lo, hi)
            Bc = charge_conjugate(B) if B.size else np.zeros((2 * hi, lo), dtype=complex)
            c_plus = slice(col, col + hi)
            c_minus = slice(col + hi, col + hi + lo)
            if lo:
                r = row(2 * lo)
                put(r, at_end(i_lo))
                r[:, c_plus] -= B
                r[:, c_minus] -= _spinor_kron(bc, lo)
                rows.append(r)
                labels += [("p-", sigma)] * (2 * lo)
            if hi:
                r = row(2 * hi)
                put(r, at_start(i_hi))
                r[:, c_plus] -= _spinor_kron(b, hi)
                r[:, c_minus] -= Bc
                rows.append(r)
                labels += [("p+", sigma)] * (2 * hi)
            col += hi + lo

    if rep.ranks[0]:
        r = row(2 * rep.ranks[0])
        put(r, at_start(0))
        put(r, at_end(len(arcs) - 1), -np.exp(-1j * pt.tau))
        rows.append(r)
        labels += [("cut", 0)] * (2 * rep.ranks[0])
    matrix = np.vstack(rows) if rows else np.zeros((0, ncols), dtype=complex)
    return matrix, labels


def assemble_delta(sol: BowSolution, pt: TwistPoint) -> MatchingSystem:
    rep = sol.rep
    modes = arc_modes(sol, pt.t)
    n_modes = sum(m.size for m in modes)
    components = point_components(rep)
    ncols = n_modes + len(components)

    def cols(m):
        return np.arange(m.offset, m.offset + m.size)

    matrix, labels = junction_rows(
        sol, pt, ncols, n_modes,
        lambda i: (cols(modes[i]), modes[i].at_start()),
        lambda i: (cols(modes[i]), modes[i].at_end()),
    )
    dims = {
        "X": n_modes,
        "N": sum(1 for c in components if c.kind != "w"),
        "W": sum(1 for c in components if c.kind == "w"),
        "Y": matrix.shape[0],
    }
    return MatchingSystem(matrix, modes, components, n_modes, labels, dims, rep)


# --- kernel bases and pairings ----------------------------------------------


@dataclass
class KernelBasis:
    """Orthonormal kernel elements stored as coefficient columns."""

    coeffs: np.ndarray  # (ncols, dim)
    modes: list
    components: list
    n_modes: int
    singular_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gap: float = np.inf

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    def arc_coeffs(self, m: ArcModes) -> np.ndarray:
        return self.coeffs[m.offset:m.offset + m.size]

    def point_values(self) -> np.ndarray:
        return self.coeffs[self.n_modes:]

    def evaluate(self, s) -> np.ndarray:
        """chi at the points s, shape (len(s), 2 Rmax, dim); zero-padded on low-rank arcs."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        rmax = max((m.rank for m in self.modes), default=0)
        out = np.zeros((len(s), 2 * rmax, self.dim), dtype=complex)
        for m in self.modes:
            if not m.rank:
                continue
            sel = (s >= m.start) & (s <= m.end)
            if np.any(sel):
                out[sel, : m.size] = m.evaluate(self.arc_coeffs(m), s[sel])
        return out

    def table(self, h: float) -> dict:
        s = np.concatenate([np.linspace(m.start, m.end, max(2, int(np.ceil(m.length / h)) + 1)) for m in self.modes])
        return {"s": s, "chi": self.evaluate(s), "points": self.point_values(), "components": self.components}

    def transformed(self, unitary) -> "KernelBasis":
        return KernelBasis(self.coeffs @ unitary, self.modes, self.components, self.n_modes,
                           self.singular_values, self.gap)


def pairing(A: KernelBasis, Bk: KernelBasis, arc_weight=None, point_weight=None) -> np.ndarray:
    """<A_i, f B_j> with arc weights f(s) = (w0 + w1 (s - a)) exp(i (p0 + p1 (s - a))).

    ``arc_weight(arc)`` returns (w0, w1, p0, p1) for the arc index (default
    (1, 0, 0, 0)); ``point_weight`` is an array of complex factors, one per
    point component (default ones).  A and B must share the arc layout but
    may come from different base points.
    """
    out = np.zeros((A.dim, Bk.dim), dtype=complex)
    for ma, mb in zip(A.modes, Bk.modes):
        if not ma.rank:
            continue
        w0, w1, p0, p1 = arc_weight(ma.arc) if arc_weight is not None else (1.0, 0.0, 0.0, 0.0)
        gamma = ma.alpha[:, None] + mb.alpha[None, :] + 1j * p1
        beta = ma.beta[:, None] + mb.beta[None, :]
        i0, i1 = exp_moments(gamma, beta, ma.length)
        kern = (ma.U.conj().T @ mb.U) * (w0 * i0 + w1 * i1) * np.exp(1j * p0)
        out += A.arc_coeffs(ma).conj().T @ kern @ Bk.arc_coeffs(mb)
    pa, pb = A.point_values(), Bk.point_values()
    if pa.size:
        pw = np.ones(pa.shape[0]) if point_weight is None else np.asarray(point_weight)
        out += pa.conj().T @ (pw[:, None] * pb)
    return out


def gram(K: KernelBasis) -> np.ndarray:
    return pairing(K, K)


def _inv_sqrt(G):
    w, V = np.linalg.eigh(G)
    return (V / np.sqrt(w)) @ V.conj().T


def kernel(sys: MatchingSystem, expected_dim: int | None = None, rank_tol: float = 1e-8,
           min_gap: float = 1e3) -> KernelBasis:
    """Kernel of the matching system, orthonormal in the L^2 pairing."""
    M = sys.matrix
    ncols = M.shape[1]
    if M.shape[0]:
        _, sv, Vh = np.linalg.svd(M)
    else:
        sv, Vh = np.zeros(0), np.eye(ncols, dtype=complex)
    smax = sv[0] if sv.size else 1.0
    full = np.concatenate([sv, np.zeros(ncols - sv.size)])
    null = int(np.sum(full <= rank_tol * smax))
    dim = expected_dim if expected_dim is not None else null
    if expected_dim is not None and null != expected_dim:
        raise NonGenericPointError(
            f"kernel dimension {null} differs from the expected {expected_dim}", full)
    # gap between the last retained nonzero singular value and the kernel
    s_last = full[ncols - dim - 1] if ncols - dim - 1 >= 0 else smax
    s_ker = full[ncols - dim] if dim else 0.0
    gap = s_last / max(s_ker, np.finfo(float).eps * smax)
    if dim and gap < min_gap:
        raise NonGenericPointError(f"spectral gap {gap:.3g} below {min_gap:g}", full)
    Kc = Vh[ncols - dim:].conj().T
    basis = KernelBasis(Kc, sys.modes, sys.components, sys.n_modes, full, gap)
    G = gram(basis)
    return basis.transformed(_inv_sqrt(G))


def matching_kernel(sol: BowSolution, pt: TwistPoint, **kw) -> KernelBasis:
    expected = kw.pop("expected_dim", len(sol.rep.lambda_points))
    return kernel(assemble_delta(sol, pt), expected_dim=expected, **kw)


# --- grid discretization ----------------------------------------------------


@dataclass
class GridDirac:
    """Upwind discretization of the kernel equations on arc nodes.

    Unknowns are the node values of chi on every positive-rank arc (node
    major, 2R per node) followed by the W and N components.
    """

    matrix: sp.csr_matrix
    h: float
    nodes: list  # per arc: node positions (empty for rank 0)
    offsets: list  # per arc: first unknown
    ranks: list
    components: list
    n_nodes_total: int

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights on nodes plus unit masses on point components."""
        w = []
        for s, R in zip(self.nodes, self.ranks):
            if not R:
                continue
            tw = np.zeros(len(s))
            d = np.diff(s)
            tw[:-1] += d / 2
            tw[1:] += d / 2
            w.append(np.repeat(tw, 2 * R))
        w.append(np.ones(len(self.components)))
        return np.concatenate(w)

    def node_values(self, vec, arc: int) -> np.ndarray:
        R = self.ranks[arc]
        n = len(self.nodes[arc])
        o = self.offsets[arc]
        return vec[o:o + n * 2 * R].reshape(n, 2 * R, *vec.shape[1:])


def grid_dirac(sol: BowSolution, pt: TwistPoint, h: float, scheme: str = "upwind") -> GridDirac:
    """Discretize on nodes of spacing <= h.

    ``scheme="upwind"`` is first order: each mode is differenced in its
    transfer direction.  ``scheme="box"`` averages i T over the cell, which is
    second order.
    """
    if scheme not in ("upwind", "box"):
        raise ValueError(f"unknown scheme {scheme!r}")
    rep = sol.rep
    arcs = rep.arcs()
    nodes, offsets, ranks = [], [], []
    off = 0
    for a in arcs:
        R = a.rank
        ranks.append(R)
        offsets.append(off)
        if R:
            n = max(2, int(np.ceil(float(a.length) / h - 1e-9)) + 1)
            s = np.linspace(float(a.start), float(a.end), n)
            off += n * 2 * R
        else:
            s = np.zeros(0)
        nodes.append(s)
    n_chi = off
    if n_chi > 2 * 10**5:
        raise ValueError(f"grid too fine: {n_chi} section unknowns")
    components = point_components(rep)
    ncols = n_chi + len(components)

    blocks_r, blocks_c, blocks_v = [], [], []
    row = 0
    for a, s, o, R in zip(arcs, nodes, offsets, ranks):
        if not R:
            continue
        H = twisted_generator(sol.blocks[a.index].T, pt.t)
        kappa, U = np.linalg.eigh(H)
        if scheme == "upwind":
            P_plus = (U * np.maximum(kappa, 0)) @ U.conj().T
            P_minus = (U * np.minimum(kappa, 0)) @ U.conj().T
        else:
            P_plus = P_minus = H / 2
        n = 2 * R
        eye = np.eye(n)
        for i, d in enumerate(np.diff(s)):
            # (chi_{i+1} - chi_i)/h + P+ chi_{i+1} + P- chi_i = 0
            left = -eye / d + P_minus
            right = eye / d + P_plus
            rr, cc = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            for blk, c0 in ((left, o + i * n), (right, o + (i + 1) * n)):
                blocks_r.append((row + rr).ravel())
                blocks_c.append((c0 + cc).ravel())
                blocks_v.append(blk.ravel())
            row += n
    cell = sp.coo_matrix(
        (np.concatenate(blocks_v) if blocks_v else np.zeros(0),
         (np.concatenate(blocks_r) if blocks_r else np.zeros(0, int),
          np.concatenate(blocks_c) if blocks_c else np.zeros(0, int))),
        shape=(row, ncols),
    )

    def ev_start(i):
        R = ranks[i]
        return np.arange(offsets[i], offsets[i] + 2 * R), np.eye(2 * R)

    def ev_end(i):
        R = ranks[i]
        o = offsets[i] + (len(nodes[i]) - 1) * 2 * R
        return np.arange(o, o + 2 * R), np.eye(2 * R)

    jump, _ = junction_rows(sol, pt, ncols, n_chi, ev_start, ev_end)
    mat = sp.vstack([cell.tocsr(), sp.csr_matrix(jump)]).tocsr()
    return GridDirac(mat, h, nodes, offsets, ranks, components, n_chi)


@dataclass
class GridKernel:
    vectors: np.ndarray  # (ncols, dim), orthonormal in the grid weights
    grid: GridDirac
    residual: float
    sigma_min_nonzero: float

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def _weighted_orthonormal(V, w):
    G = V.conj().T @ (w[:, None] * V)
    return V @ _inv_sqrt(G)


def grid_kernel(sol: BowSolution, pt: TwistPoint, h: float, expected_dim: int | None = None,
                min_gap: float = 10.0, dense_limit: int = 1200, seed: int = 0,
                scheme: str = "upwind") -> GridKernel:
    g = grid_dirac(sol, pt, h, scheme)
    A = g.matrix
    m, n = A.shape
    d = n - m if expected_dim is None else expected_dim
    if n <= dense_limit:
        _, sv, Vh = np.linalg.svd(A.toarray())
        V = Vh[m:].conj().T if d == n - m else Vh[n - d:].conj().T
        smin = sv[-1] if sv.size else np.inf
    else:
        # project random vectors onto Ker A through the normal equations of A A^dag
        AAh = (A @ A.conj().T).tocsc()
        lu = spla.splu(AAh)
        rng = np.random.default_rng(seed)
        Z = rng.normal(size=(n, d)) + 1j * rng.normal(size=(n, d))
        V = Z - A.conj().T @ lu.solve(A @ Z)
        V = V - A.conj().T @ lu.solve(A @ V)
        mu = spla.eigsh(AAh, k=1, sigma=0, which="LM", return_eigenvectors=False)
        smin = float(np.sqrt(abs(mu[0])))
    w = g.weights
    V = _weighted_orthonormal(V, w)
    res = float(np.linalg.norm(A @ V, axis=0).max()) if d else 0.0
    if d and smin / max(res, 1e-300) < min_gap:
        raise RefineMeshError(f"ambiguous spectral gap: sigma_min {smin:.3g} vs kernel residual {res:.3g}")
    return GridKernel(V, g, res, smin)


def sample_on_grid(K: KernelBasis, g: GridDirac) -> np.ndarray:
    """Values of a matching-system kernel basis at the grid unknowns."""
    parts = []
    for m, s, R in zip(K.modes, g.nodes, g.ranks):
        if not R:
            continue
        parts.append(m.evaluate(K.arc_coeffs(m), s).reshape(len(s) * 2 * R, K.dim))
    parts.append(K.point_values())
    return np.vstack(parts)


def principal_angles(Va, Vb, w) -> np.ndarray:
    Qa = _weighted_orthonormal(Va, w)
    Qb = _weighted_orthonormal(Vb, w)
    # sines from the part of Qb orthogonal to Qa; arccos of the cosines loses
    # everything below sqrt(machine epsilon)
    D = Qb - Qa @ (Qa.conj().T @ (w[:, None] * Qb))
    sw = np.sqrt(w)[:, None]
    sines = np.linalg.svd(sw * D, compute_uv=False)
    return np.sort(np.arcsin(np.clip(sines, 0.0, 1.0)))


def backend_angles(K: KernelBasis, G: GridKernel) -> np.ndarray:
    return principal_angles(sample_on_grid(K, G.grid), G.vectors, G.grid.weights)


# --- diagnostics ------------------------------------------------------------


def quaternionic_defect(g: GridDirac) -> float:
    """||Im(D^dag D)|| / ||D^dag D|| over the 2x2 spinor blocks of the section part."""
    A = g.matrix[:, : g.n_nodes_total]
    M = (A.conj().T @ A).tocsr()
    num = den = 0.0
    for s, o, R in zip(g.nodes, g.offsets, g.ranks):
        if not R:
            continue
        n = 2 * R
        for i in range(len(s)):
            for j in (i - 1, i, i + 1):
                if not 0 <= j < len(s):
                    continue
                blk = M[o + i * n:o + (i + 1) * n, o + j * n:o + (j + 1) * n].toarray()
                q = im_part(blk)
                num += sum(float(np.linalg.norm(c)) ** 2 for c in q.imaginary)
                den += float(np.linalg.norm(blk)) ** 2
    return float(np.sqrt(num / den)) if den else 0.0


def pairing_conservation(sol: BowSolution, pt: TwistPoint, rng=None, n_points: int = 5) -> float:
    """max over arcs of |<x, y>_s - <x, y>_a| for x' = -i T x and y' = +i T y.

    Random initial data at the left end of each arc; evaluated at n_points
    interior points by the transfer matrices.
    """
    rng = np.random.default_rng(rng)
    worst = 0.0
    for a in sol.rep.arcs():
        if not a.rank:
            continue
        T = sol.blocks[a.index].T
        n = 2 * a.rank
        x0 = rng.normal(size=n) + 1j * rng.normal(size=n)
        y0 = rng.normal(size=n) + 1j * rng.normal(size=n)
        ref = np.vdot(y0, x0)
        L = float(a.length)
        for s in np.linspace(0, L, n_points + 2)[1:-1]:
            x = transfer_matrix(T, pt.t, s) @ x0
            y = np.linalg.inv(transfer_matrix(T, pt.t, s)).conj().T @ y0
            worst = max(worst, abs(np.vdot(y, x) - ref) / max(1.0, abs(ref)))
    return worst


# --- spectral gap of D (P1 finite elements) ----------------------------------


def _dirac_quadratic_form(sol: BowSolution, pt: TwistPoint, h: float):
    """Stiffness K and mass M of ||D f||^2 and ||f||^2 on P1 elements, reduced by the
    matching conditions (continuity, termination and the twist at the cut)."""
    rep = sol.rep
    arcs = rep.arcs()
    nodes, offs = [], []
    off = 0
    for a in arcs:
        offs.append(off)
        if a.rank:
            n = max(2, int(np.ceil(float(a.length) / h - 1e-9)) + 1)
            nodes.append(np.linspace(float(a.start), float(a.end), n))
            off += n * 2 * a.rank
        else:
            nodes.append(np.zeros(0))
    ndof = off
    g1, g2 = (1 - 1 / np.sqrt(3)) / 2, (1 + 1 / np.sqrt(3)) / 2
    Ki, Kj, Kv, Mv = [], [], [], []
    for a, s, o in zip(arcs, nodes, offs):
        R = a.rank
        if not R:
            continue
        n = 2 * R
        H = twisted_generator(sol.blocks[a.index].T, pt.t)
        eye = np.eye(n)
        d = s[1] - s[0]
        Ke = np.zeros((2 * n, 2 * n), dtype=complex)
        Me = np.zeros((2 * n, 2 * n))
        for xi in (g1, g2):
            Lq = np.hstack([eye / d + (1 - xi) * H, -eye / d + xi * H])
            Pq = np.hstack([(1 - xi) * eye, xi * eye])
            Ke += d / 2 * Lq.conj().T @ Lq
            Me += d / 2 * Pq.T @ Pq
        rr, cc = np.meshgrid(np.arange(2 * n), np.arange(2 * n), indexing="ij")
        base = o + n * np.arange(len(s) - 1)
        Ki.append((base[:, None] + rr.ravel()[None, :]).ravel())
        Kj.append((base[:, None] + cc.ravel()[None, :]).ravel())
        Kv.append(np.tile(Ke.ravel(), len(base)))
        Mv.append(np.tile(Me.ravel(), len(base)))
    K = sp.coo_matrix((np.concatenate(Kv), (np.concatenate(Ki), np.concatenate(Kj))), shape=(ndof, ndof)).tocsr()
    M = sp.coo_matrix((np.concatenate(Mv), (np.concatenate(Ki), np.concatenate(Kj))), shape=(ndof, ndof)).tocsr()

    def start(i):
        return offs[i] + np.arange(2 * arcs[i].rank)

    def end(i):
        return offs[i] + (len(nodes[i]) - 1) * 2 * arcs[i].rank + np.arange(2 * arcs[i].rank)

    # point terms: rows of D acting on endpoint values
    point_rows = []
    for a in arcs[:-1]:
        m = a.right
        lo, hi = a.index, a.index + 1
        Rl, Rh = arcs[lo].rank, arcs[hi].rank
        if m.kind == "lambda" and Rl == Rh and Rl:
            Q = np.asarray(sol.Q[m.index]).reshape(-1)
            point_rows.append((end(lo), Q.conj()[None, :], None, None))
        elif m.kind == "p":
            b = pt.b[m.index]
            bc = charge_conjugate(b).reshape(-1)
            B = np.asarray(sol.B.get(m.index, np.zeros((2 * Rl, Rh))), dtype=complex).reshape(2 * Rl, Rh)
            Bc = charge_conjugate(B) if B.size else np.zeros((2 * Rh, Rl), dtype=complex)
            if Rh:
                point_rows.append((end(lo), B.conj().T, start(hi), -_spinor_kron(b, Rh).conj().T))
            if Rl:
                point_rows.append((end(lo), _spinor_kron(bc, Rl).conj().T, start(hi), -Bc.conj().T))
    extra = sp.lil_matrix((ndof, ndof), dtype=complex)
    for ia, Ma, ib, Mb in point_rows:
        if ia is None or Ma.shape[1] == 0:
            ia, Ma = np.zeros(0, int), np.zeros((Mb.shape[0], 0))
        if ib is None or (Mb is not None and Mb.shape[1] == 0):
            ib, Mb = np.zeros(0, int), np.zeros((Ma.shape[0], 0))
        idx = np.concatenate([ia, ib])
        row = np.hstack([Ma, Mb])
        extra[np.ix_(idx, idx)] = extra[np.ix_(idx, idx)].toarray() + row.conj().T @ row
    K = K + extra.tocsr()

    # substitution map: slave dof -> (master dof or None, factor)
    slave = {}
    for a in arcs[:-1]:
        m = a.right
        lo, hi = a.index, a.index + 1
        Rl, Rh = arcs[lo].rank, arcs[hi].rank
        if m.kind != "lambda" or not (Rl or Rh):
            continue
        n = min(Rl, Rh)
        if Rh >= Rl:
            cont = _continuing_rows(Rh, n) if Rh > Rl else np.arange(2 * Rh)
            term = np.setdiff1d(np.arange(2 * Rh), cont)
            for k, c in enumerate(cont):
                slave[start(hi)[c]] = (end(lo)[k], 1.0)
            for c in term:
                slave[start(hi)[c]] = (None, 0.0)
        else:
            cont = _continuing_rows(Rl, n)
            term = np.setdiff1d(np.arange(2 * Rl), cont)
            for k, c in enumerate(cont):
                slave[start(hi)[k]] = (end(lo)[c], 1.0)
            for c in term:
                slave[end(lo)[c]] = (None, 0.0)
    if arcs[0].rank:
        for k in range(2 * arcs[0].rank):
            slave[start(0)[k]] = (end(len(arcs) - 1)[k], np.exp(-1j * pt.tau))
    free = [i for i in range(ndof) if i not in slave]
    col = {d: c for c, d in enumerate(free)}
    pr, pc, pv = list(range(len(free))), list(range(len(free))), [1.0] * len(free)
    pr = [free[i] for i in pr]
    for sdof, (mdof, fac) in slave.items():
        if mdof is not None:
            pr.append(sdof)
            pc.append(col[mdof])
            pv.append(fac)
    P = sp.coo_matrix((np.asarray(pv, dtype=complex), (pr, pc)), shape=(ndof, len(free))).tocsr()
    Kr = (P.conj().T @ K @ P).tocsc()
    Mr = (P.conj().T @ M @ P).tocsc()
    return Kr, Mr


def smallest_singular_value(sol: BowSolution, pt: TwistPoint, h: float) -> float:
    """sigma_min of D from the lowest generalized eigenvalue of (K, M)."""
    K, M = _dirac_quadratic_form(sol, pt, h)
    mu = spla.eigsh(K, k=1, M=M, sigma=0, which="LM", return_eigenvectors=False)
    return float(np.sqrt(max(mu[0].real, 0.0)))


@dataclass
class SpectralGapTable:
    radii: np.ndarray
    sigma_min: np.ndarray
    green_norm: np.ndarray
    sigma_slope: float
    green_slope: float
    conclusive: bool


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def spectral_gap(sol: BowSolution, nu, direction, radii, elems_per_decay: int = 20,
                 h_max: float | None = None) -> SpectralGapTable:
    """sigma_min(D) and the Green's operator norm 1/sigma_min^2 along the ray t = r n."""
    n = np.asarray(direction, dtype=float)
    n = n / np.linalg.norm(n)
    radii = np.asarray(radii, dtype=float)
    ell = float(sol.rep.ell)
    h_max = ell / 400 if h_max is None else h_max
    sig = []
    for r in radii:
        pt = twist_point(nu, r * n)
        h = min(h_max, 1.0 / (elems_per_decay * r))
        sig.append(smallest_singular_value(sol, pt, h))
    sig = np.asarray(sig)
    green = 1.0 / sig**2
    conclusive = radii.max() / radii.min() >= 10 * (1 - 1e-9)
    return SpectralGapTable(radii, sig, green, loglog_slope(radii, sig), loglog_slope(radii, green), conclusive)


# --- pole bases -----------------------------------------------------------------


@dataclass
class FrobeniusBasis:
    """Solutions y(z) = sum_n v_n z^(alpha + n) of dy/dz = (M/(2z) + K) y near a pole."""

    alpha: float
    coeffs: list  # v_n, each (2m, d)

    def __call__(self, z) -> np.ndarray:
        z = float(z)
        return sum(v * z ** (self.alpha + n) for n, v in enumerate(self.coeffs))


def pole_spin_operator(m: int, side: str) -> np.ndarray:
    """M with i T = M/(2z) + regular, z the distance to the pole on the given side."""
    coupling = su2_irrep(m).spin_coupling()  # sum_j e_j (x) rho_j = -i sum_j sigma_j (x) rho_j
    # i T_pole = sum_j sigma_j (x) (-i rho_j / 2z) = coupling / (2z); z = s - lam on the right,
    # z = lam - s on the left, where d/dz = -d/ds
    return coupling if side == "right" else -coupling


def frobenius_y_basis(m: int, t, side: str = "left", n_terms: int = 40) -> FrobeniusBasis:
    """Bounded solutions of y' = i T y next to an exact model pole of dimension m.

    The regular part is the constant twist -sigma.t; on the right of the
    pole (side='right') the equation in z = s - lam is dy/dz = i T y, on the
    left dy/dz = -i T y.
    """
    M = pole_spin_operator(m, side)
    K = -sum(np.kron(SIGMA[j], t[j] * np.eye(m)) for j in range(3))
    if side == "left":
        K = -K
    ev, U = np.linalg.eigh(0.5 * (M + M.conj().T))
    alpha = float(ev.max() / 2)
    V0 = U[:, np.isclose(ev / 2, alpha)]
    coeffs = [V0]
    eye = np.eye(2 * m)
    for n in range(1, n_terms):
        lhs = (alpha + n) * eye - M / 2
        coeffs.append(np.linalg.solve(lhs, K @ coeffs[-1]))
    return FrobeniusBasis(alpha, coeffs)


def integrate_pole_basis(m: int, t, z0: float, z1: float, side: str = "left", n_terms: int = 40):
    """Seed at z0 from the series and integrate the exact pole model out to z1."""
    fb = frobenius_y_basis(m, t, side, n_terms)
    M = pole_spin_operator(m, side)
    K = -sum(np.kron(SIGMA[j], t[j] * np.eye(m)) for j in range(3))
    if side == "left":
        K = -K
    Y0 = fb(z0)
    shape = Y0.shape

    def rhs(z, y):
        Y = y.view(complex).reshape(shape)
        return ((M / (2 * z) + K) @ Y).reshape(-1).view(float)

    out = solve_ivp(rhs, (z0, z1), Y0.reshape(-1).view(float).copy(), method="DOP853", rtol=1e-12, atol=1e-14)
    return out.y[:, -1].copy().view(complex).reshape(shape), fb
