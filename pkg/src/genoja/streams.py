"""I.i.d. sources of matrix pairs ``(A_t, B_t)`` with ``E[A_t] = A`` and ``E[B_t] = B``.

Four kinds are supported:

``deterministic``
    Full batch, every draw is exactly the population pair.
``gaussian-gev``
    Rank-one Gaussian outer products around a population whose two
    matrices share the eigenvalues ``1, 1/2, ..., 1/d`` and have independent
    Haar-random eigenvectors.
``cca-gaussian``
    Block samples built from a joint Gaussian draw ``(x, y)``.
``pca``
    Like ``gaussian-gev`` for A, with ``B_t = I`` exactly.

Randomness comes from numpy's PCG64 bit generator seeded through
``SeedSequence([seed, purpose])``, one child generator per purpose (factor
draws, mixture signs, B draws, solver initialization). Each child is consumed
strictly sequentially and a fixed amount per sample, so the sample sequence
depends only on ``(seed, index)`` and not on how draws are chunked.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from genoja.core import ProblemSpec, haar_orthogonal
from genoja.errors import InvalidCovariance, InvalidDimension

KINDS = ("deterministic", "gaussian-gev", "cca-gaussian", "pca")
CLIP_FACTOR = 20.0
PSD_TOL = 1e-10

# SeedSequence purpose tags
_POPULATION, _A_DRAWS, _SIGNS, _B_DRAWS, _INIT = range(5)


def make_rng(seed, purpose):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), purpose])))


def init_rng(seed):
    """Generator reserved for solver initialization under a given trial seed."""
    return make_rng(seed, _INIT)


# -- samples ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MatrixSample:
    """A dense draw. Arrays may carry leading batch axes."""

    A: np.ndarray
    B: np.ndarray

    def apply_A(self, x):
        return np.matmul(self.A, x[..., None])[..., 0]

    def apply_B(self, x):
        return np.matmul(self.B, x[..., None])[..., 0]


@dataclass(frozen=True, eq=False)
class FactoredSample:
    """A draw kept in factored form.

    ``A_t = sum_k a_weights[k] a_k a_k^T`` with rows ``a_k`` of ``a_factors``
    and ``B_t = sum_m b_m b_m^T``; ``b_factors=None`` means ``B_t = I``.
    Leading batch axes are allowed on every array.
    """

    a_factors: np.ndarray
    a_weights: np.ndarray
    b_factors: np.ndarray = None

    def apply_A(self, x):
        proj = np.einsum("...kd,...d->...k", self.a_factors, x)
        return np.einsum("...kd,...k->...d", self.a_factors, self.a_weights * proj)

    def apply_B(self, x):
        if self.b_factors is None:
            return x.copy()
        proj = np.einsum("...md,...d->...m", self.b_factors, x)
        return np.einsum("...md,...m->...d", self.b_factors, proj)

    @property
    def A(self):
        F = self.a_factors
        return np.einsum("...kd,...k,...ke->...de", F, self.a_weights, F)

    @property
    def B(self):
        if self.b_factors is None:
            d = self.a_factors.shape[-1]
            return np.broadcast_to(np.eye(d), self.a_factors.shape[:-2] + (d, d)).copy()
        F = self.b_factors
        return np.einsum("...md,...me->...de", F, F)


def op_norms(sample):
    """Operator 2-norms ``(||A_t||, ||B_t||)`` of a single unbatched sample."""
    return float(np.linalg.norm(sample.A, 2)), float(np.linalg.norm(sample.B, 2))


def cca_sample(x, y):
    """Block sample for one draw: ``A_t = [[0, x y^T], [y x^T, 0]]``, ``B_t = diag(x x^T, y y^T)``.

    Uses ``A_t = (z+ z+^T - z- z-^T) / 2`` with ``z± = (x; ±y)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    zx = np.zeros_like(x)
    zy = np.zeros_like(y)
    a = np.stack([np.concatenate([x, y], -1), np.concatenate([x, -y], -1)], -2)
    w = np.broadcast_to(np.array([0.5, -0.5]), a.shape[:-1])
    b = np.stack([np.concatenate([x, zy], -1), np.concatenate([zx, y], -1)], -2)
    return FactoredSample(a, w, b)


# -- blocks of consecutive draws ------------------------------------------


@dataclass(frozen=True, eq=False)
class SampleBlock:
    """``n`` consecutive factored draws; axis 0 indexes time."""

    a_factors: np.ndarray
    a_weights: np.ndarray
    b_factors: np.ndarray = None

    def __len__(self):
        return self.a_factors.shape[0]

    def __getitem__(self, i):
        b = None if self.b_factors is None else self.b_factors[i]
        return FactoredSample(self.a_factors[i], self.a_weights[i], b)


@dataclass(frozen=True, eq=False)
class ConstantBlock:
    A: np.ndarray
    B: np.ndarray
    n: int

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        if not -self.n <= i < self.n:
            raise IndexError(i)
        return MatrixSample(self.A, self.B)


def stack_blocks(blocks):
    """Merge equal-length blocks from several streams along a trial axis (axis 1)."""
    first = blocks[0]
    if isinstance(first, ConstantBlock):
        return first
    b = None if first.b_factors is None else np.stack([bl.b_factors for bl in blocks], 1)
    return SampleBlock(
        np.stack([bl.a_factors for bl in blocks], 1),
        np.stack([bl.a_weights for bl in blocks], 1),
        b,
    )


# -- stream definitions ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class JointGaussian:
    """Zero-mean joint law of ``(X, Y)`` given by its covariance blocks."""

    Sxx: np.ndarray
    Syy: np.ndarray
    Sxy: np.ndarray

    @property
    def covariance(self):
        return np.block([[self.Sxx, self.Sxy], [self.Sxy.T, self.Syy]])


@dataclass(frozen=True, eq=False)
class StreamSpec:
    """Immutable description of a sample stream.

    ``radius_sq`` is the stream radius R^2 that step sizes are expressed in;
    ``R_declared`` bounds operator norms of emitted samples when clipping is
    on. ``recipe`` echoes the construction arguments for config round-trips.
    """

    kind: str
    seed: int
    dim: int
    population: ProblemSpec
    radius_sq: float
    R_declared: float
    clip_radius: float = None
    recipe: dict = field(default_factory=dict)
    # sampling factors: symmetric square roots, mixture probability
    a_plus: np.ndarray = None
    a_minus: np.ndarray = None
    p_plus: float = 1.0
    b_root: np.ndarray = None
    joint_root: np.ndarray = None
    dx: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown stream kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "pca" and not np.array_equal(self.population.B, np.eye(self.dim)):
            raise ValueError("pca streams require B = I")

    def with_seed(self, seed):
        return dataclasses.replace(self, seed=int(seed))

    def to_config(self):
        out = {"kind": self.kind, "seed": self.seed, "dim": self.dim}
        out.update(self.recipe)
        out["clip_radius"] = "none" if self.clip_radius is None else repr(self.clip_radius)
        return out


def _psd_root(M, name):
    s, Q = np.linalg.eigh(0.5 * (M + M.T))
    if s[0] < -PSD_TOL * max(1.0, abs(s[-1])):
        raise InvalidCovariance(f"{name} is not PSD (smallest eigenvalue {s[0]:.3e})")
    return (Q * np.sqrt(np.clip(s, 0.0, None))) @ Q.T


def _split_psd(A):
    """Split symmetric A into PSD parts ``A = A+ - A-`` and return their square roots."""
    s, Q = np.linalg.eigh(A)
    pos = np.clip(s, 0.0, None)
    neg = np.clip(-s, 0.0, None)
    return (Q * np.sqrt(pos)) @ Q.T, (Q * np.sqrt(neg)) @ Q.T, float(pos.sum()), float(neg.sum())


def _resolve_clip(clip, radius_sq):
    if clip is None or clip is False:
        return None
    if clip is True:
        return CLIP_FACTOR * radius_sq
    clip = float(clip)
    if not clip > 0:
        raise ValueError("clip radius must be positive")
    return clip


def _decay_values(dim, decay):
    if decay == "inverse":
        return 1.0 / np.arange(1, dim + 1)
    vals = np.asarray(decay, dtype=float)
    if vals.shape != (dim,) or np.any(vals <= 0):
        raise ValueError("decay must be 'inverse' or a length-d vector of positive values")
    return vals


def _a_sampling(A):
    a_plus, a_minus, tr_plus, tr_minus = _split_psd(A)
    total = tr_plus + tr_minus
    p_plus = 1.0 if total == 0 else tr_plus / total
    return a_plus, a_minus, p_plus


def deterministic_stream(problem, seed=0):
    R = max(np.linalg.norm(problem.A, 2), np.linalg.norm(problem.B, 2))
    return StreamSpec(
        kind="deterministic",
        seed=int(seed),
        dim=problem.dim,
        population=problem,
        radius_sq=float(R),
        R_declared=float(R),
    )


def make_gaussian_gev_stream(dim, seed, decay="inverse", clip=True):
    """Synthetic stream with ``A = Q_A D Q_A^T`` and ``B = Q_B D Q_B^T``.

    Returns ``(stream, population)``. ``clip=True`` rescales any sample whose
    operator norm exceeds ``20 * max(tr A, tr B)``; a float sets the radius
    directly and ``False`` disables clipping.
    """
    if dim < 2:
        raise InvalidDimension(f"gaussian-gev streams need d >= 2, got {dim}")
    D = _decay_values(dim, decay)
    rng = make_rng(seed, _POPULATION)
    QA = haar_orthogonal(dim, rng)
    QB = haar_orthogonal(dim, rng)
    A = (QA * D) @ QA.T
    B = (QB * D) @ QB.T
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    radius_sq = float(max(np.trace(A), np.trace(B)))
    clip_radius = _resolve_clip(clip, radius_sq)
    R = clip_radius if clip_radius is not None else radius_sq
    problem = ProblemSpec(A, B, mu=min(float(np.linalg.eigvalsh(B)[0]), float(D.min())), R=R)
    a_plus, a_minus, p_plus = _a_sampling(problem.A)
    recipe = {"problem_seed": int(seed), "decay": decay if isinstance(decay, str) else "custom"}
    spec = StreamSpec(
        kind="gaussian-gev",
        seed=int(seed),
        dim=dim,
        population=problem,
        radius_sq=radius_sq,
        R_declared=R,
        clip_radius=clip_radius,
        recipe=recipe,
        a_plus=a_plus,
        a_minus=a_minus,
        p_plus=p_plus,
        b_root=_psd_root(problem.B, "B"),
    )
    return spec, problem


def make_pca_stream(A, seed, clip=True):
    A = np.asarray(A, dtype=float)
    dim = A.shape[0]
    a_plus, a_minus, p_plus = _a_sampling(A)
    radius_sq = float(max(np.trace(a_plus @ a_plus) + np.trace(a_minus @ a_minus), 1.0))
    clip_radius = _resolve_clip(clip, radius_sq)
    R = clip_radius if clip_radius is not None else radius_sq
    problem = ProblemSpec(A, np.eye(dim), R=R)
    spec = StreamSpec(
        kind="pca",
        seed=int(seed),
        dim=dim,
        population=problem,
        radius_sq=radius_sq,
        R_declared=R,
        clip_radius=clip_radius,
        a_plus=a_plus,
        a_minus=a_minus,
        p_plus=p_plus,
    )
    return spec, problem


def _random_spd(d, rng):
    G = rng.standard_normal((d, d))
    return G @ G.T / d + np.eye(d)


def canonical_joint(dx, dy, correlations, seed=None, whiten=True):
    """Joint Gaussian whose canonical correlations are ``correlations``.

    With ``whiten=True`` both marginals are the identity; otherwise they are
    random SPD matrices. Canonical directions are Haar-random when ``seed``
    is given and axis-aligned otherwise.
    """
    rho = np.asarray(correlations, dtype=float)
    k = min(dx, dy)
    if rho.size > k:
        raise ValueError(f"at most {k} canonical correlations for dx={dx}, dy={dy}")
    S = np.zeros((dx, dy))
    S[np.arange(rho.size), np.arange(rho.size)] = rho
    if seed is None:
        Qx, Qy = np.eye(dx), np.eye(dy)
        Lx, Ly = np.eye(dx), np.eye(dy)
    else:
        rng = make_rng(seed, _POPULATION)
        Qx, Qy = haar_orthogonal(dx, rng), haar_orthogonal(dy, rng)
        if whiten:
            Lx, Ly = np.eye(dx), np.eye(dy)
        else:
            Lx = np.linalg.cholesky(_random_spd(dx, rng))
            Ly = np.linalg.cholesky(_random_spd(dy, rng))
    Sxx = Lx @ Lx.T
    Syy = Ly @ Ly.T
    Sxy = Lx @ Qx @ S @ Qy.T @ Ly.T
    return JointGaussian(Sxx, Syy, Sxy)


def make_cca_stream(dx, dy, joint, seed, clip=True):
    """Block stream for CCA: each draw ``(x, y)`` yields ``cca_sample(x, y)``.

    Population ``A = [[0, Sxy], [Syx, 0]]``, ``B = diag(Sxx, Syy)``.
    """
    Sxx = np.asarray(joint.Sxx, dtype=float)
    Syy = np.asarray(joint.Syy, dtype=float)
    Sxy = np.asarray(joint.Sxy, dtype=float)
    if Sxx.shape != (dx, dx) or Syy.shape != (dy, dy) or Sxy.shape != (dx, dy):
        raise InvalidDimension("joint covariance blocks do not match dx, dy")
    for M, name in ((Sxx, "E[XX^T]"), (Syy, "E[YY^T]")):
        if np.linalg.eigvalsh(0.5 * (M + M.T))[0] <= 0:
            raise InvalidCovariance(f"{name} must be positive definite")
    root = _psd_root(joint.covariance, "joint covariance")
    d = dx + dy
    A = np.zeros((d, d))
    A[:dx, dx:] = Sxy
    A[dx:, :dx] = Sxy.T
    B = np.zeros((d, d))
    B[:dx, :dx] = Sxx
    B[dx:, dx:] = Syy
    radius_sq = float(max(np.trace(Sxx), np.trace(Syy)))
    clip_radius = _resolve_clip(clip, radius_sq)
    R = clip_radius if clip_radius is not None else radius_sq
    problem = ProblemSpec(A, 0.5 * (B + B.T), R=R)
    spec = StreamSpec(
        kind="cca-gaussian",
        seed=int(seed),
        dim=d,
        population=problem,
        radius_sq=radius_sq,
        R_declared=R,
        clip_radius=clip_radius,
        recipe={"dx": dx, "dy": dy},
        joint_root=root,
        dx=dx,
    )
    return spec, problem


# -- iteration -------------------------------------------------------------


def _clip_rows(factors, norms, radius):
    if radius is None:
        return factors
    scale = np.ones_like(norms)
    over = norms > radius
    scale[over] = np.sqrt(radius / norms[over])
    return factors * scale.reshape(scale.shape + (1,) * (factors.ndim - scale.ndim))


class SampleStream:
    """Iterator over draws of a :class:`StreamSpec`; owns its RNG state.

    Not safe to advance from several threads; build one per trial instead.
    """

    def __init__(self, spec, seed=None):
        self.spec = spec
        self.seed = spec.seed if seed is None else int(seed)
        self.drawn = 0
        self._rng_a = make_rng(self.seed, _A_DRAWS)
        self._rng_s = make_rng(self.seed, _SIGNS)
        self._rng_b = make_rng(self.seed, _B_DRAWS)

    def __iter__(self):
        return self

    def __next__(self):
        return self.draw_block(1)[0]

    def draw_block(self, n):
        """The next ``n`` draws as one block."""
        spec = self.spec
        self.drawn += n
        if spec.kind == "deterministic":
            return ConstantBlock(spec.population.A, spec.population.B, n)
        if spec.kind == "cca-gaussian":
            return self._cca_block(n)
        return self._mixture_block(n)

    def _mixture_block(self, n):
        spec = self.spec
        d = spec.dim
        z = self._rng_a.standard_normal((n, d))
        u = self._rng_s.random(n)
        plus = u < spec.p_plus
        a = np.where(plus[:, None], z @ spec.a_plus, z @ spec.a_minus)
        w_plus = 1.0 / spec.p_plus if spec.p_plus > 0 else 0.0
        w_minus = -1.0 / (1.0 - spec.p_plus) if spec.p_plus < 1 else 0.0
        w = np.where(plus, w_plus, w_minus)
        a_norm = np.abs(w) * np.einsum("nd,nd->n", a, a)
        a = _clip_rows(a, a_norm, spec.clip_radius)
        b = None
        if spec.kind == "gaussian-gev":
            b = self._rng_b.standard_normal((n, d)) @ spec.b_root
            b = _clip_rows(b, np.einsum("nd,nd->n", b, b), spec.clip_radius)
            b = b[:, None, :]
        return SampleBlock(a[:, None, :], w[:, None], b)

    def _cca_block(self, n):
        spec = self.spec
        xy = self._rng_a.standard_normal((n, spec.dim)) @ spec.joint_root
        x, y = xy[:, : spec.dx], xy[:, spec.dx :]
        s = cca_sample(x, y)
        nx = np.einsum("nd,nd->n", x, x)
        ny = np.einsum("nd,nd->n", y, y)
        a = _clip_rows(s.a_factors, np.sqrt(nx * ny), spec.clip_radius)
        b = _clip_rows(s.b_factors, np.maximum(nx, ny), spec.clip_radius)
        return SampleBlock(a, np.ascontiguousarray(s.a_weights), b)


def open_stream(spec, seed=None):
    return SampleStream(spec, seed)


def next_sample(stream):
    return next(stream)


def probe_norms(spec, n_probe, seed=None):
    """Operator norms ``(||A_t||, ||B_t||)`` of the first ``n_probe`` draws, shape (n, 2)."""
    if n_probe < 1:
        raise ValueError("n_probe must be >= 1")
    block = open_stream(spec, seed).draw_block(n_probe)
    return np.array([op_norms(block[i]) for i in range(n_probe)])


def estimate_radius(spec, n_probe, seed=None):
    """Largest sample operator norm seen over ``n_probe`` draws.

    For stochastic kinds the population radius ``max(tr A, tr B)`` acts as a
    floor, since a short probe underestimates the tails.
    """
    r = float(probe_norms(spec, n_probe, seed).max())
    if spec.kind != "deterministic":
        r = max(r, spec.radius_sq)
    return r
