"""Problem definitions, the B-metric sine, and the offline reference solver.

Vectors are plain 1-D float arrays throughout. The reference solver goes
through the symmetric matrix ``B^{-1/2} A B^{-1/2}`` so that right and left
eigenvectors come out B-orthonormal and dual to each other by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from genoja.errors import (
    DegenerateDirection,
    InternalConsistencyError,
    InvalidDimension,
    NonPositiveDefinite,
)

SYMMETRY_RTOL = 1e-12
GAP_TOL = 1e-10
CLAMP_SLACK = 1e-10


def _check_symmetric(M, name):
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidDimension(f"{name} must be square, got shape {M.shape}")
    scale = max(np.max(np.abs(M)), 1.0)
    if np.max(np.abs(M - M.T)) > SYMMETRY_RTOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return M


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Population pair (A, B) of a generalized eigenproblem ``A v = lam B v``.

    ``mu`` is the smallest eigenvalue of B and ``R`` an operator-norm bound
    on the stream samples. Both are filled in from the matrices when omitted.
    """

    A: np.ndarray
    B: np.ndarray
    mu: float = None
    R: float = None
    dim: int = field(init=False)

    def __post_init__(self):
        A = _check_symmetric(self.A, "A")
        B = _check_symmetric(self.B, "B")
        if A.shape != B.shape:
            raise InvalidDimension(f"A {A.shape} and B {B.shape} differ in shape")
        if A.shape[0] < 1:
            raise InvalidDimension("dimension must be positive")
        lam_min = float(np.linalg.eigvalsh(B)[0])
        if lam_min <= 0:
            raise NonPositiveDefinite(f"B has smallest eigenvalue {lam_min:.3e}")
        mu = lam_min if self.mu is None else float(self.mu)
        if not 0 < mu <= lam_min * (1 + 1e-12):
            raise ValueError(f"mu={mu} must lie in (0, lambda_min(B)={lam_min}]")
        R = self.R
        if R is None:
            R = max(np.linalg.norm(A, 2), np.linalg.norm(B, 2))
        if R < 0:
            raise ValueError("R must be nonnegative")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "R", float(R))
        object.__setattr__(self, "dim", A.shape[0])

    @property
    def radius_sq(self):
        """``max(tr A, tr B)``, the stream radius used to size the fast step."""
        return float(max(np.trace(self.A), np.trace(self.B)))


@dataclass(frozen=True, eq=False)
class EigenReference:
    """Full generalized spectrum of a :class:`ProblemSpec`.

    Columns of ``right_vectors`` are B-normalized; ``left_vectors = B @ right``.
    Eigenvalues are sorted by signed value, largest first.
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    gap: float
    gap_usable: bool

    @property
    def lambda1(self):
        return float(self.eigenvalues[0])

    @property
    def u1(self):
        return self.right_vectors[:, 0]

    @property
    def left_u1_norm(self):
        return float(np.linalg.norm(self.left_vectors[:, 0]))


def inverse_sqrt(B):
    """Symmetric ``B^{-1/2}`` from the eigendecomposition of B."""
    B = np.asarray(B, dtype=float)
    s, Q = np.linalg.eigh(B)
    if s[0] <= 0 or not np.all(np.isfinite(s)):
        raise NonPositiveDefinite(f"B has smallest eigenvalue {s[0]:.3e}")
    return (Q / np.sqrt(s)) @ Q.T


def _fix_signs(U):
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def solve_reference(problem):
    B_isqrt = inverse_sqrt(problem.B)
    M = B_isqrt @ problem.A @ B_isqrt
    M = 0.5 * (M + M.T)
    lam, U_hat = np.linalg.eigh(M)
    order = np.argsort(-lam, kind="stable")
    lam = lam[order]
    U = B_isqrt @ U_hat[:, order]
    U = U / np.sqrt(np.einsum("ij,ik,kj->j", U, problem.B, U))
    U = _fix_signs(U)
    U_left = problem.B @ U
    gap = float(lam[0] - lam[1]) if lam.size > 1 else float("inf")
    for arr in (lam, U, U_left):
        arr.setflags(write=False)
    return EigenReference(
        eigenvalues=lam,
        right_vectors=U,
        left_vectors=U_left,
        gap=gap,
        gap_usable=gap > GAP_TOL,
    )


def b_norm(v, B):
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(v @ B @ v))


def b_normalize(v, B):
    v = np.asarray(v, dtype=float)
    n = b_norm(v, B)
    if not n > 0:
        raise DegenerateDirection("cannot B-normalize a zero vector")
    return v / n


def sin2_b(v, w, B):
    """Squared sine between directions ``v`` and ``w`` in the B inner product.

    Invariant to sign and scale of either argument. Cosines overshooting one
    by at most ``1e-10`` are treated as rounding and clamped.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    Bv = B @ v
    vv = v @ Bv
    ww = w @ B @ w
    if not (vv > 0 and ww > 0):
        raise DegenerateDirection("sin2_b needs two nonzero directions")
    vw = w @ Bv
    cos2 = (vw / vv) * (vw / ww)
    if cos2 > 1.0:
        if cos2 > 1.0 + CLAMP_SLACK:
            raise InternalConsistencyError(f"B-cosine squared {cos2!r} exceeds 1")
        cos2 = 1.0
    return float(1.0 - cos2)


def haar_orthogonal(d, rng):
    """Haar-distributed orthogonal matrix: QR of a Gaussian with sign-fixed R diagonal."""
    Z = rng.standard_normal((d, d))
    Q, R = np.linalg.qr(Z)
    return Q * np.sign(np.diag(R))


def random_problem(d, rng, min_gap=0.0, max_tries=100):
    """Random symmetric A and SPD B, resampled until the generalized gap is >= ``min_gap``."""
    for _ in range(max_tries):
        G = rng.standard_normal((d, d))
        A = 0.5 * (G + G.T)
        H = rng.standard_normal((d, d))
        B = H @ H.T / d + 0.5 * np.eye(d)
        problem = ProblemSpec(A, 0.5 * (B + B.T))
        if solve_reference(problem).gap >= min_gap:
            return problem
    raise RuntimeError(f"no problem with gap >= {min_gap} in {max_tries} draws")


def read_matrix(path):
    """Read the text format: first line ``d``, then ``d`` rows of ``d`` decimals."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    try:
        d = int(lines[0].strip())
    except ValueError:
        raise ValueError(f"{path}:1: expected the dimension, got {lines[0]!r}") from None
    if len(lines) != d + 1:
        raise ValueError(f"{path}: expected {d} rows, found {len(lines) - 1}")
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        row = [float(x) for x in ln.split()]
        if len(row) != d:
            raise ValueError(f"{path}:{i}: expected {d} entries, found {len(row)}")
        rows.append(row)
    return np.array(rows, dtype=float).reshape(d, d)


def write_matrix(path, M):
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    body = "\n".join(" ".join(repr(float(x)) for x in row) for row in M)
    Path(path).write_text(f"{d}\n{body}\n")
