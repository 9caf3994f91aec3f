"""Operator families: elementary test maps and the splitting operators used
by the inpainting and Cournot experiments."""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class OperatorFamily:
    """An indexed family of maps ``T_k``.

    Attributes
    ----------
    apply : callable
        ``apply(k, x) -> array``.
    fixed_point : ndarray, optional
        A common fixed point ``p*`` of every ``T_k``.
    fixed_points : callable, optional
        ``k -> p_k`` for moving-set families whose fixed points drift.
    limit_point : ndarray, optional
        ``lim p_k`` for moving-set families.
    contraction_modulus : float, optional
        ``q`` with ``|T_k x - p| <= q |x - p|``.
    shape : tuple, optional
        Expected shape of points; checked by the iteration.
    certified : bool
        False when construction parameters lie outside the range where the
        family is known to be (quasi-)nonexpansive.
    recover : callable, optional
        Maps a fixed point to the solution of the underlying problem.
    """

    apply: object
    fixed_point: np.ndarray = None
    fixed_points: object = None
    limit_point: np.ndarray = None
    contraction_modulus: float = None
    shape: tuple = None
    certified: bool = True
    recover: object = None
    name: str = ""

    def __call__(self, k, x):
        return self.apply(k, x)

    @property
    def reference_point(self):
        """``p*`` if there is one, else the limit of the moving fixed points."""
        return self.fixed_point if self.fixed_point is not None else self.limit_point


def fixed_point_defect(family, k, p):
    return float(np.linalg.norm(family(k, p) - p))


def affine_contraction(p_star, q):
    """``T x = p* + q (x - p*)`` with ``0 < q < 1``."""
    if not 0.0 < q < 1.0:
        raise DomainError(f"contraction modulus must lie in (0, 1), got {q}")
    p_star = np.asarray(p_star, dtype=float)

    def apply(k, x):
        return p_star + q * (x - p_star)

    return OperatorFamily(apply, fixed_point=p_star, contraction_modulus=q,
                          shape=p_star.shape, name="contraction")


def rotation2d(phi):
    """Counterclockwise rotation of the plane by ``phi`` in ``(0, pi]``."""
    if not 0.0 < phi <= np.pi:
        raise DomainError(f"rotation angle must lie in (0, pi], got {phi}")
    c, s = np.cos(phi), np.sin(phi)
    rot = np.array([[c, -s], [s, c]])

    def apply(k, x):
        return rot @ x

    return OperatorFamily(apply, fixed_point=np.zeros(2), shape=(2,), name="rotation")


def constant_family(p_seq, limit_point=None):
    """``T_k x = p_k`` regardless of ``x``.

    ``p_seq`` is either a callable ``k -> p_k`` or a finite list; a list is
    treated as eventually constant (indices past its end repeat the last
    entry).
    """
    if callable(p_seq):
        points = p_seq
    else:
        seq = [np.asarray(p, dtype=float) for p in p_seq]
        if not seq:
            raise ConfigurationError("constant_family needs at least one point")

        def points(k):
            return seq[min(k, len(seq)) - 1]

        if limit_point is None:
            limit_point = seq[-1]

    def apply(k, x):
        return np.array(points(k), dtype=float)

    lim = None if limit_point is None else np.asarray(limit_point, dtype=float)
    return OperatorFamily(apply, fixed_points=points, limit_point=lim,
                          shape=None if lim is None else lim.shape, name="constant-seq")


def shifted_family(family, p_inf):
    """Re-centre a moving-set family so that ``p_inf`` is a common fixed point.

    ``T~_k x = T_k(x + p_k - p_inf) - p_k + p_inf``.
    """
    if family.fixed_points is None:
        raise ConfigurationError("shifted_family needs a family with per-k fixed points")
    p_inf = np.asarray(p_inf, dtype=float)
    points = family.fixed_points

    def apply(k, x):
        shift = points(k) - p_inf
        return family(k, x + shift) - shift

    return OperatorFamily(apply, fixed_point=p_inf,
                          contraction_modulus=family.contraction_modulus,
                          shape=family.shape, name=f"shifted-{family.name}")


def box_projection(lo, hi):
    """Componentwise clamp onto ``[lo, hi]``."""
    if not lo < hi:
        raise DomainError(f"empty box [{lo}, {hi}]")

    def project(x):
        return np.clip(x, lo, hi)

    return project


def nuclear_norm(mat):
    return float(np.sum(np.linalg.svd(mat, compute_uv=False)))


def nuclear_prox(mat, threshold):
    """Singular value soft-thresholding: ``U max(S - threshold, 0) V^T``.

    This is the proximal map of ``threshold * ||.||_*``.
    """
    if threshold < 0:
        raise DomainError("threshold must be nonnegative")
    if threshold == 0:
        return np.array(mat, dtype=float)
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    return (u * np.maximum(s - threshold, 0.0)) @ vt


# -- image tensors ---------------------------------------------------------


def unfold1(x):
    """``M x N x 3`` tensor -> ``M x 3N`` matrix (channels side by side)."""
    return np.concatenate([x[:, :, c] for c in range(x.shape[2])], axis=1)


def refold1(mat, shape):
    m, n, ch = shape
    if mat.shape != (m, ch * n):
        raise DomainError(f"cannot refold {mat.shape} into {shape} along mode 1")
    return np.stack([mat[:, c * n:(c + 1) * n] for c in range(ch)], axis=2)


def unfold2(x):
    """``M x N x 3`` tensor -> ``3M x N`` matrix (channels stacked)."""
    return np.concatenate([x[:, :, c] for c in range(x.shape[2])], axis=0)


def refold2(mat, shape):
    m, n, ch = shape
    if mat.shape != (ch * m, n):
        raise DomainError(f"cannot refold {mat.shape} into {shape} along mode 2")
    return np.stack([mat[c * m:(c + 1) * m, :] for c in range(ch)], axis=2)


@dataclass(frozen=True)
class Mask:
    """Pixel mask: ``omega[i, j] == 0`` marks pixel ``(i, j)`` as erased on every channel."""

    omega: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omega)
        if om.ndim != 2 or not np.isin(om, (0, 1)).all():
            raise DomainError("mask must be a 2-D array of zeros and ones")
        object.__setattr__(self, "omega", om.astype(float))

    def __call__(self, x):
        return x * self.omega[:, :, None]

    @property
    def erased(self):
        return int(np.sum(self.omega == 0))


def davis_yin(JB, JA, C, rho, tau=None):
    """Three-operator splitting map ``x - JB(x) + JA(2 JB(x) - x - rho C(JB(x)))``.

    Parameters
    ----------
    JB, JA : callable
        Resolvents of the two set-valued monotone operators (at step ``rho``).
    C : callable
        Single-valued cocoercive operator.
    rho : float
        Step size, expected in ``(0, 2 tau)``.
    tau : float, optional
        Cocoercivity constant of ``C``.  When given and ``rho`` is out of
        range, a warning is issued and the family is marked uncertified.

    Notes
    -----
    Zeros of the sum are recovered as ``JB(p)`` for fixed points ``p``; the
    returned family carries this as ``recover``.
    """
    certified = True
    if tau is not None and not 0.0 < rho < 2.0 * tau:
        warnings.warn(f"step {rho} outside (0, {2 * tau}); nonexpansiveness not guaranteed",
                      stacklevel=2)
        certified = False

    def apply(k, x):
        b = JB(x)
        return x - b + JA(2.0 * b - x - rho * C(b))

    return OperatorFamily(apply, certified=certified, recover=JB, name="davis-yin")


def projected_gradient(PC, F, rho, L):
    """``T x = PC(x - rho F(x))``, nonexpansive for ``0 < rho < 2/L``."""
    certified = True
    if not 0.0 < rho < 2.0 / L:
        warnings.warn(f"step {rho} outside (0, 2/L = {2.0 / L}); nonexpansiveness not guaranteed",
                      stacklevel=2)
        certified = False

    def apply(k, x):
        return PC(x - rho * F(x))

    return OperatorFamily(apply, certified=certified, name="projected-gradient")
