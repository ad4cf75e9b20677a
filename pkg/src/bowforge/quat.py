"""Spinor and quaternion linear algebra.

The spinor space is C^2 and the unit imaginary quaternions act on it as
``e_j = -i sigma_j``.  Operators on ``S (x) V`` are stored spinor-major, so a
block matrix ``kron(e_j, M_j)`` has the spinor index as the slow index.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
E = -1j * SIGMA
I2 = np.eye(2, dtype=complex)

ALGEBRA_TOL = 1e-12


class SingularInputError(ValueError):
    """Raised when an operation is evaluated at a singular input."""


class DegenerateFiberWarning(RuntimeWarning):
    """The circle fiber over the requested point has collapsed."""


@dataclass(frozen=True)
class SpinorAlgebra:
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray

    @property
    def basis(self):
        return (self.e1, self.e2, self.e3)

    @staticmethod
    def eps(v):
        """Antilinear structure data: (v1, v2) -> (-v2, v1)."""
        v = np.asarray(v)
        return np.stack([-v[1], v[0]])


def spinor_algebra() -> SpinorAlgebra:
    return SpinorAlgebra(E[0].copy(), E[1].copy(), E[2].copy())


@dataclass(frozen=True)
class Su2Irrep:
    m: int
    rho1: np.ndarray
    rho2: np.ndarray
    rho3: np.ndarray

    @property
    def rho(self) -> np.ndarray:
        return np.stack([self.rho1, self.rho2, self.rho3])

    def casimir(self) -> np.ndarray:
        return sum(r @ r for r in (self.rho1, self.rho2, self.rho3))

    def spin_coupling(self) -> np.ndarray:
        """The operator sum_j e_j (x) rho_j on S (x) C^m."""
        return sum(np.kron(E[j], r) for j, r in enumerate(self.rho))


def su2_irrep(m: int) -> Su2Irrep:
    """Irreducible m-dimensional representation with [rho_i, rho_j] = 2 rho_k.

    Built in the weight basis, so ``i rho_3`` is diagonal with entries
    m-1, m-3, ..., 1-m.
    """
    if not isinstance(m, (int, np.integer)) or m <= 0:
        raise ValueError(f"su2_irrep needs a positive integer dimension, got {m!r}")
    j = (m - 1) / 2.0
    mz = j - np.arange(m)
    jz = np.diag(mz).astype(complex)
    # <mz+1| J+ |mz> sits just above the diagonal
    coeff = np.sqrt(j * (j + 1) - mz[1:] * (mz[1:] + 1))
    jp = np.diag(coeff, k=1).astype(complex)
    jm = jp.conj().T
    jx = (jp + jm) / 2
    jy = (jp - jm) / (2j)
    return Su2Irrep(int(m), -2j * jx, -2j * jy, -2j * jz)


def charge_conjugate(beta) -> np.ndarray:
    """Charge conjugate of a map A -> S (x) B given as a (2*dim B, dim A) array.

    With beta = (beta_1; beta_2) the result is (-beta_2^dagger; beta_1^dagger),
    a map B -> S (x) A.
    """
    beta = np.asarray(beta, dtype=complex)
    if beta.ndim == 1:
        beta = beta[:, None]
    if beta.ndim != 2 or beta.shape[0] % 2:
        raise ValueError(f"charge_conjugate expects a (2n, m) block array, got shape {beta.shape}")
    n = beta.shape[0] // 2
    b1, b2 = beta[:n], beta[n:]
    return np.vstack([-b2.conj().T, b1.conj().T])


@dataclass(frozen=True)
class QuaternionEnd:
    """M = 1 (x) m0 + sum_j e_j (x) m_j acting on S (x) V."""

    m0: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray

    @property
    def imaginary(self) -> np.ndarray:
        return np.stack([self.m1, self.m2, self.m3])

    def assemble(self) -> np.ndarray:
        out = np.kron(I2, self.m0)
        for j, mj in enumerate((self.m1, self.m2, self.m3)):
            out = out + np.kron(E[j], mj)
        return out

    @classmethod
    def decompose(cls, M) -> "QuaternionEnd":
        M = np.asarray(M, dtype=complex)
        n = M.shape[0] // 2
        blocks = M.reshape(2, n, 2, n).transpose(0, 2, 1, 3)  # [a, b] spinor blocks
        m0 = 0.5 * (blocks[0, 0] + blocks[1, 1])
        comps = [0.5 * np.einsum("ab,baij->ij", E[j].conj().T, blocks) for j in range(3)]
        return cls(m0, *comps)


def im_part(M) -> QuaternionEnd:
    """Imaginary part M - 1 (x) (1/2) tr_S M, returned with m0 = 0."""
    q = M if isinstance(M, QuaternionEnd) else QuaternionEnd.decompose(M)
    return QuaternionEnd(np.zeros_like(q.m0), q.m1, q.m2, q.m3)


def partial_trace_spinor(M) -> np.ndarray:
    M = np.asarray(M, dtype=complex)
    n = M.shape[0] // 2
    return M[:n, :n] + M[n:, n:]


def slash(t) -> np.ndarray:
    """t-slash = sum_j e_j t_j (2x2)."""
    t = np.asarray(t, dtype=float)
    return np.einsum("j,jab->ab", t, E)


def projectors(t):
    """Orthogonal projectors onto the +|t| and -|t| eigenspaces of i t-slash."""
    t = np.asarray(t, dtype=float)
    norm = float(np.linalg.norm(t))
    if norm == 0.0:
        raise SingularInputError("projectors are undefined at t = 0")
    its = 1j * slash(t)
    return (norm * I2 + its) / (2 * norm), (norm * I2 - its) / (2 * norm)


def spinor_from_vector(r, phase: float = 0.0, patch: str = "north") -> np.ndarray:
    """Spinor b with b b^dagger = |r| + i r-slash, so b^dagger b = 2|r|.

    ``patch`` picks the local section of the circle fibration: the north
    section is smooth away from the ray r = -|r| e_3, the south section away
    from r = +|r| e_3, and ``b_south = exp(-i phi) b_north``.  Changing
    ``phase`` by theta multiplies the result by exp(i theta).
    """
    r = np.asarray(r, dtype=float)
    rn = float(np.linalg.norm(r))
    if rn == 0.0:
        warnings.warn("spinor requested at r = 0; returning the zero spinor", DegenerateFiberWarning, stacklevel=2)
        return np.zeros(2, dtype=complex)
    if patch == "auto":
        patch = "north" if r[2] >= 0 else "south"
    if patch == "north":
        d = rn + r[2]
        if d <= 1e-300:
            raise SingularInputError("north section is singular on the negative e_3 axis")
        b = np.array([d, r[0] + 1j * r[1]], dtype=complex) / np.sqrt(d)
    elif patch == "south":
        d = rn - r[2]
        if d <= 1e-300:
            raise SingularInputError("south section is singular on the positive e_3 axis")
        b = np.array([r[0] - 1j * r[1], d], dtype=complex) / np.sqrt(d)
    else:
        raise ValueError(f"unknown patch {patch!r}")
    return np.exp(1j * phase) * b


def moment_vector(b) -> np.ndarray:
    """The 3-vector r = -Im(i b b^dagger) of a spinor (or a 2n x m block)."""
    b = np.asarray(b, dtype=complex).reshape(2, -1)
    # -Im(i b b^dag)_j = (1/2) tr(b^dag sigma_j b)
    return 0.5 * np.einsum("ak,jab,bk->j", b.conj(), SIGMA, b).real


def im_i_outer(beta) -> np.ndarray:
    """Components (3, n, n) of Im(i beta beta^dagger) for beta: C^m -> S (x) C^n."""
    beta = np.asarray(beta, dtype=complex)
    if beta.ndim == 1:
        beta = beta[:, None]
    return im_part(1j * (beta @ beta.conj().T)).imaginary
