"""Nahm data on a bow: blocks, edge and fundamental data, and moment-map checks.

Everything is in the gauge T0 = 0, t0 = 0.  A triple T = (T1, T2, T3) of
Hermitian R x R matrices is identified with the quaternionic matrix
sum_j e_j T_j, and the imaginary part of a quaternionic matrix M is read off
as its three Hermitian components, so that for instance a spinor b gives
Im(i b b^dag) = -moment_vector(b).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from .bow import BowRepresentation, validate
from .quat import charge_conjugate, im_i_outer, spinor_from_vector, su2_irrep


class DegenerateConfigurationError(ValueError):
    """A fiber that must carry a spinor has collapsed."""


@dataclass(frozen=True)
class PoleDescriptor:
    m: int
    side: str  # "left" or "right": which end of the block carries the pole
    position: float

    @property
    def irrep(self):
        return su2_irrep(self.m)


@dataclass
class NahmBlock:
    """Nahm data on one linear arc.

    For a CONSTANT block ``T`` has shape (3, R, R).  For a SAMPLED block
    ``T`` has shape (n, 3, R, R) on the nodes ``s``.
    """

    arc: int
    rank: int
    kind: str
    T: np.ndarray
    s: np.ndarray | None = None
    T0: np.ndarray | None = None
    poles: tuple = ()

    def at(self, s) -> np.ndarray:
        if self.kind == "CONSTANT":
            return self.T
        idx = int(np.argmin(np.abs(self.s - s)))
        return self.T[idx]

    def samples(self):
        if self.kind == "CONSTANT":
            return [(None, self.T)]
        return list(zip(self.s, self.T))


def constant_block(arc: int, T) -> NahmBlock:
    T = np.asarray(T, dtype=complex)
    if T.ndim == 1:
        T = T[:, None, None]
    return NahmBlock(arc, T.shape[-1], "CONSTANT", T)


@dataclass
class BowSolution:
    rep: BowRepresentation
    blocks: list
    B: dict  # sigma -> (2 R(p-), R(p+)) array
    Q: dict  # lambda index -> (2 R, 1) array
    nu: np.ndarray  # (k, 3)
    verified: bool = False
    notes: dict = field(default_factory=dict)

    def T_left(self, arc: int) -> np.ndarray:
        b = self.blocks[arc]
        return b.T if b.kind == "CONSTANT" else b.T[0]

    def T_right(self, arc: int) -> np.ndarray:
        b = self.blocks[arc]
        return b.T if b.kind == "CONSTANT" else b.T[-1]

    def to_document(self) -> dict:
        def cplx(a):
            a = np.asarray(a, dtype=complex)
            return np.stack([a.real, a.imag], axis=-1).tolist()

        blocks = []
        for b in self.blocks:
            d = {"arc": b.arc, "rank": b.rank, "kind": b.kind, "T": cplx(b.T)}
            if b.kind == "SAMPLED":
                d["s"] = np.asarray(b.s).tolist()
            blocks.append(d)
        return {
            "blocks": blocks,
            "B": {str(k): cplx(v) for k, v in self.B.items()},
            "Q": {str(k): cplx(v) for k, v in self.Q.items()},
            "nu": np.asarray(self.nu).tolist(),
            "verified": self.verified,
        }


def _im_i(beta, n) -> np.ndarray:
    if beta is None or np.size(beta) == 0:
        return np.zeros((3, n, n), dtype=complex)
    return im_i_outer(beta)


def nahm_interior_residual(T, dT) -> float:
    """max_j ||i dT_j/ds - [T_{j+1}, T_{j+2}]|| (Frobenius)."""
    out = 0.0
    for j in range(3):
        a, b = T[(j + 1) % 3], T[(j + 2) % 3]
        out = max(out, float(np.linalg.norm(1j * dT[j] - (a @ b - b @ a))))
    return out


@dataclass
class ResidualReport:
    interior: dict
    lambda_jumps: dict
    p_minus: dict
    p_plus: dict
    tol: float

    @property
    def max_residual(self) -> float:
        vals = [*self.interior.values(), *self.lambda_jumps.values(), *self.p_minus.values(),
                *self.p_plus.values()]
        return max(vals, default=0.0)

    @property
    def ok(self) -> bool:
        return self.max_residual <= self.tol


def block_interior_residual(block: NahmBlock) -> float:
    if block.kind == "CONSTANT":
        dT = np.zeros_like(block.T)
        return nahm_interior_residual(block.T, dT)
    s, T = np.asarray(block.s), block.T
    if len(s) < 3:
        return 0.0
    dT = np.gradient(T, s, axis=0, edge_order=2)
    return max(nahm_interior_residual(T[i], dT[i]) for i in range(len(s)))


def p_minus_condition(T_minus, nu, B) -> np.ndarray:
    """T(p-) - nu + Im(i B B^dag), as (3, R-, R-)."""
    n = T_minus.shape[-1]
    return T_minus - np.asarray(nu)[:, None, None] * np.eye(n) + _im_i(B, n)


def p_plus_condition(T_plus, nu, B) -> np.ndarray:
    """T(p+) - nu - Im(i B^c B^c^dag), with B^c from quat.charge_conjugate."""
    n = T_plus.shape[-1]
    Bc = charge_conjugate(B) if np.size(B) else None
    return T_plus - np.asarray(nu)[:, None, None] * np.eye(n) - _im_i(Bc, n)


def p_plus_condition_direct(T_plus, nu, B) -> np.ndarray:
    """Same as p_plus_condition, with B^c B^c^dag expanded in the blocks of B = (B1; B2)."""
    n = T_plus.shape[-1]
    B = np.asarray(B, dtype=complex)
    if B.size == 0:
        extra = np.zeros((3, n, n), dtype=complex)
    else:
        r = B.shape[0] // 2
        B1, B2 = B[:r], B[r:]
        # spinor blocks of B^c B^c^dag
        c11 = B2.conj().T @ B2
        c12 = -B2.conj().T @ B1
        c21 = -B1.conj().T @ B2
        c22 = B1.conj().T @ B1
        # component j of Im(i M) is -(1/2) tr_S(sigma_j M)
        extra = -0.5 * np.stack([c12 + c21, 1j * (c12 - c21), c11 - c22])
    return T_plus - np.asarray(nu)[:, None, None] * np.eye(n) - extra


def verify_moment_map(sol: BowSolution, tol: float = 1e-12) -> ResidualReport:
    rep = sol.rep
    arcs = rep.arcs()
    interior = {a.index: block_interior_residual(sol.blocks[a.index]) for a in arcs}
    jumps, pm, pp = {}, {}, {}
    for a in arcs[:-1]:
        mark = a.right
        lo, hi = a.index, a.index + 1
        Tl, Tr = sol.T_right(lo), sol.T_left(hi)
        if mark.kind == "lambda":
            if rep.ranks[lo] == rep.ranks[hi]:
                Q = sol.Q.get(mark.index)
                n = Tl.shape[-1]
                jumps[mark.index] = float(np.linalg.norm(Tr - Tl - _im_i(Q, n)))
            else:
                # continuing components must match the restricted data
                jumps[mark.index] = _restriction_residual(Tl, Tr)
        else:
            sigma = mark.index
            B = sol.B.get(sigma, np.zeros((2 * Tl.shape[-1], Tr.shape[-1])))
            nu = sol.nu[sigma]
            pm[sigma] = float(np.linalg.norm(p_minus_condition(Tl, nu, B))) if Tl.shape[-1] else 0.0
            pp[sigma] = float(np.linalg.norm(p_plus_condition(Tr, nu, B))) if Tr.shape[-1] else 0.0
    return ResidualReport(interior, jumps, pm, pp, tol)


def _restriction_residual(Tl, Tr) -> float:
    # A rank-changing lambda-point without a pole: the smaller block continues
    # the matching corner of the larger one.
    nl, nr = Tl.shape[-1], Tr.shape[-1]
    if min(nl, nr) == 0:
        return 0.0
    n = min(nl, nr)
    big = Tl if nl > nr else Tr
    small = Tr if nl > nr else Tl
    return float(np.linalg.norm(big[:, -n:, -n:] - small))


def small_solution(rep: BowRepresentation, nu, t, phases=None) -> BowSolution:
    """The rank-1 representation with no lambda-points at the point t."""
    if rep.lambda_points or any(r != 1 for r in rep.ranks):
        raise ValueError("small_solution needs ranks 1 and no lambda-points")
    return abelian_bow_solution(rep, nu, {0: np.asarray(t, float)}, phases=phases)


def abelian_bow_solution(rep: BowRepresentation, nu, T_values, phases=None, q_norms=None,
                         tol: float = 1e-12) -> BowSolution:
    """Constant rank <= 1 Nahm data solving all jump conditions.

    ``T_values`` maps arc index -> 3-vector for arcs whose value is not fixed
    by propagation (at least one reference arc; arcs entered through a
    0 -> 1 jump also need one).  ``phases`` maps ("B", sigma) or ("Q", i) to a
    phase; ``q_norms`` maps i -> |Q| for lambda-points whose jump vanishes,
    where Q is then a null direction of Im(i Q Q^dag) only if |Q| = 0.
    """
    validate(rep).raise_if_invalid()
    if max(rep.ranks) > 1:
        raise ValueError("abelian_bow_solution needs max rank <= 1")
    phases = dict(phases or {})
    q_norms = dict(q_norms or {})
    nu = np.atleast_2d(np.asarray(nu, dtype=float))
    arcs = rep.arcs()
    n = len(arcs)
    T = {int(i): np.asarray(v, dtype=float) for i, v in T_values.items()}
    B, Q = {}, {}
    # the first and last arcs are one arc through s = 0
    if 0 in T:
        T.setdefault(n - 1, T[0])
    if n - 1 in T:
        T.setdefault(0, T[n - 1])

    # p-points with a rank jump pin T to nu on the rank-1 side
    for a in arcs[:-1]:
        m = a.right
        if m.kind == "p" and rep.ranks[a.index] != rep.ranks[a.index + 1]:
            side = a.index if rep.ranks[a.index] == 1 else a.index + 1
            T.setdefault(side, nu[m.index].copy())

    start = next((i for i in range(n) if i in T and rep.ranks[i] == 1), None)
    if start is None and any(rep.ranks):
        raise ValueError("T_values must give the value on at least one rank-1 arc")

    # propagate counterclockwise (increasing s), wrapping through s = 0
    order = [(start + j) % n for j in range(n)] if start is not None else []
    for i in order:
        if rep.ranks[i] == 0:
            continue
        if i not in T:
            raise ValueError(f"T value on arc {i} is not determined; supply it in T_values")
        a = arcs[i]
        nxt = (i + 1) % n
        if a.right is None:
            # arc ending at ell continues into arc 0
            if 0 in T and not np.allclose(T[0], T[i], atol=tol, rtol=0):
                raise ValueError("T does not close up around the circle")
            T.setdefault(0, T[i].copy())
            continue
        m = a.right
        if rep.ranks[nxt] == 0:
            continue
        if m.kind == "p":
            if rep.ranks[i] == rep.ranks[nxt]:
                T.setdefault(nxt, T[i].copy())
        elif rep.ranks[i] == rep.ranks[nxt]:
            # continuous lambda-point: the jump is fixed by the next arc if given
            T.setdefault(nxt, T[i].copy())

    for i in range(n):
        if rep.ranks[i] and i not in T:
            raise ValueError(f"T value on arc {i} is not determined; supply it in T_values")

    for a in arcs[:-1]:
        m = a.right
        lo, hi = a.index, a.index + 1
        if m.kind == "p":
            sigma = m.index
            if rep.ranks[lo] == 1 and rep.ranks[hi] == 1:
                r = T[lo] - nu[sigma]
                if not np.allclose(T[hi], T[lo], atol=tol, rtol=0):
                    raise ValueError(f"T jumps across p-point {sigma}, which has no rank change")
                if np.linalg.norm(r) == 0:
                    raise DegenerateConfigurationError(f"B fiber at p-point {sigma} (s = {m.position}) is degenerate: T = nu")
                B[sigma] = spinor_from_vector(r, phases.get(("B", sigma), 0.0), "auto")[:, None]
            else:
                B[sigma] = np.zeros((2 * rep.ranks[lo], rep.ranks[hi]), dtype=complex)
        elif rep.ranks[lo] == rep.ranks[hi] == 1:
            i = m.index
            rq = T[lo] - T[hi]
            if np.linalg.norm(rq) > 0:
                Q[i] = spinor_from_vector(rq, phases.get(("Q", i), 0.0), "auto")[:, None]
            else:
                # Im(i Q Q^dag) = |Q|^2 (unit vector) can only vanish for Q = 0
                if q_norms.get(i, 0.0) != 0.0:
                    raise DegenerateConfigurationError(
                        f"lambda-point {i} (s = {m.position}) has zero jump, which forces Q = 0")
                Q[i] = np.zeros((2, 1), dtype=complex)

    blocks = [constant_block(i, T[i] if rep.ranks[i] else np.zeros((3, 0, 0))) for i in range(n)]
    sol = BowSolution(rep, blocks, B, Q, nu)
    report = verify_moment_map(sol, tol)
    sol.verified = report.ok
    sol.notes["residual"] = report.max_residual
    return sol


def gauge_transform(sol: BowSolution, unitaries: dict) -> BowSolution:
    """Constant gauge transformation g_i on each arc (dict arc -> R x R unitary)."""
    rep = sol.rep
    arcs = rep.arcs()
    g = {a.index: np.asarray(unitaries.get(a.index, np.eye(rep.ranks[a.index])), dtype=complex) for a in arcs}
    g[len(arcs) - 1] = g[0]  # the same arc through s = 0
    blocks = []
    for b in sol.blocks:
        u = g[b.arc]
        T = np.einsum("ab,...jbc,dc->...jad", u, b.T, u.conj())
        blocks.append(replace(b, T=T))
    B, Q = {}, {}
    for a in arcs[:-1]:
        m = a.right
        ul, ur = g[a.index], g[a.index + 1]
        if m.kind == "p" and m.index in sol.B:
            B[m.index] = np.kron(np.eye(2), ul) @ sol.B[m.index] @ ur.conj().T
        elif m.kind == "lambda" and m.index in sol.Q:
            Q[m.index] = np.kron(np.eye(2), ul) @ sol.Q[m.index]
    return BowSolution(rep, blocks, B, Q, sol.nu, sol.verified, dict(sol.notes))


def pole_model(m: int, eps: float = 1.0, n: int = 64, s_min: float = 1e-3) -> NahmBlock:
    """T_j(s) = -i rho_j / (2 s) on (0, eps], sampled on a geometric grid."""
    if m < 1:
        raise ValueError("pole_model needs m >= 1")
    s = np.geomspace(s_min, eps, n)
    if m == 1:
        T = np.zeros((n, 3, 1, 1), dtype=complex)
    else:
        rho = su2_irrep(m).rho
        T = -0.5j * rho[None] / s[:, None, None, None]
    return NahmBlock(0, m, "SAMPLED", T, s=s, poles=(PoleDescriptor(m, "left", 0.0),))


def pole_model_residual(m: int, s) -> float:
    """Interior residual of the exact pole model at s, with the exact derivative."""
    rho = su2_irrep(m).rho
    T = -0.5j * rho / s
    dT = 0.5j * rho / s**2
    return nahm_interior_residual(T, dT)


def subleading_check(block: NahmBlock, eps_range=None) -> float:
    """sup ||T_j(s) + i rho_j / (2 (s - lambda))|| over the sampled range."""
    if not block.poles:
        raise ValueError("block has no pole descriptor")
    pole = block.poles[0]
    rho = su2_irrep(pole.m).rho
    out = 0.0
    for s, T in block.samples():
        d = s - pole.position
        if eps_range is not None and not (eps_range[0] <= abs(d) <= eps_range[1]):
            continue
        bhat = T + 0.5j * rho / d
        out = max(out, max(float(np.linalg.norm(bhat[j], 2)) for j in range(3)))
    return out


def integrate_nahm(T_start, s_start: float, s_end: float, s_eval=None, rtol=1e-11, atol=1e-13) -> NahmBlock:
    """Integrate i dT_j/ds = [T_{j+1}, T_{j+2}] from s_start to s_end."""
    T_start = np.asarray(T_start, dtype=complex)
    R = T_start.shape[-1]

    def rhs(s, y):
        T = y.view(complex).reshape(3, R, R)
        d = np.empty_like(T)
        for j in range(3):
            a, b = T[(j + 1) % 3], T[(j + 2) % 3]
            d[j] = -1j * (a @ b - b @ a)
        return d.reshape(-1).view(float)

    y0 = T_start.reshape(-1).view(float).copy()
    sol = solve_ivp(rhs, (s_start, s_end), y0, method="DOP853", t_eval=s_eval, rtol=rtol, atol=atol)
    Ts = sol.y.T.copy().view(complex).reshape(-1, 3, R, R)
    return NahmBlock(0, R, "SAMPLED", Ts, s=sol.t)


def two_pole_solution(m: int, D: float, s) -> NahmBlock:
    """Exact Nahm data T_j = -(i/2) f_j(s) rho_j on (0, pi/D).

    f1 = f2 = D / sin(D s), f3 = D cot(D s); there are model poles of
    dimension m at both ends.
    """
    s = np.asarray(s, dtype=float)
    rho = su2_irrep(m).rho
    f = np.stack([D / np.sin(D * s), D / np.sin(D * s), D / np.tan(D * s)], axis=1)
    T = -0.5j * f[:, :, None, None] * rho[None]
    return NahmBlock(0, m, "SAMPLED", T, s=s, poles=(PoleDescriptor(m, "left", 0.0),))
