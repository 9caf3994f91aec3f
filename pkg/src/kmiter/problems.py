"""The two experiment instances: tensor-completion inpainting via three-operator
splitting, and a Nash-Cournot equilibrium solved by projected gradient."""

import math
from dataclasses import dataclass

import numpy as np

from . import operators as ops
from .errors import DomainError
from .iteration import run
from .schedules import ParameterSchedule, lambda_bound

VARIANTS = ("none", "hb", "nesterov", "reflected")

REFERENCE_PIXELS = 512 * 512


# -- inertia variants ------------------------------------------------------


def _largest_admissible(bound, lam, upper):
    """Largest ``t`` in ``[0, upper]`` with ``bound(t) >= lam``, for nonincreasing ``bound``."""
    if bound(upper) >= lam:
        return upper
    lo, hi = 0.0, upper
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if bound(mid) >= lam:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return lo


def tight_inertia(variant, lam):
    """Inertia ``(alpha, beta)`` of the given variant at which ``lam`` is the bound.

    The parameter is the largest one for which ``lambda_bound >= lam``; for
    reflected inertia with ``lam <= 1/2`` every ``beta`` in [0, 1] is
    admissible and ``beta = 1`` is returned.
    """
    if not 0.0 < lam < 1.0:
        raise DomainError(f"lambda must lie in (0, 1), got {lam}")
    if variant == "none":
        return 0.0, 0.0
    if variant == "hb":
        return _largest_admissible(lambda a: lambda_bound(a, 0.0), lam, 1.0 - 1e-12), 0.0
    if variant == "nesterov":
        a = _largest_admissible(lambda a: lambda_bound(a, a), lam, 1.0 - 1e-12)
        return a, a
    if variant == "reflected":
        return 0.0, _largest_admissible(lambda b: lambda_bound(0.0, b), lam, 1.0)
    raise DomainError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def variant_schedule(variant, lam):
    """Tight inertia for ``variant`` ramped in as ``(1 - 1/k)``, constant ``lam``."""
    alpha, beta = tight_inertia(variant, lam)
    return ParameterSchedule.ramped(alpha, beta, lam)


# -- inpainting ------------------------------------------------------------


def synthetic_image(size=32, seed=0):
    """Smooth, approximately low-rank RGB test image of shape ``size x size x 3``."""
    i, j = np.mgrid[0:size, 0:size] / size
    rng = np.random.default_rng(seed)
    ph = rng.uniform(0, np.pi, 3)
    red = 0.5 + 0.4 * np.sin(2 * np.pi * i + ph[0]) * np.cos(np.pi * j)
    green = 0.3 + 0.5 * i * j + 0.1 * np.cos(3 * np.pi * j + ph[1])
    blue = 0.6 - 0.3 * j + 0.2 * (i > 0.5) + 0.05 * np.sin(np.pi * i + ph[2])
    return np.clip(np.stack([red, green, blue], axis=2), 0.0, 1.0)


@dataclass
class InpaintProblem:
    image: np.ndarray
    x_corrupt: np.ndarray
    mask: ops.Mask
    sigma: float
    rho: float
    family: ops.OperatorFamily

    @property
    def shape(self):
        return self.x_corrupt.shape

    def objective(self, x):
        """``0.5 |A x - x_corrupt|^2 + sigma |x_(1)|_* + sigma |x_(2)|_*``."""
        fit = 0.5 * float(np.sum((self.mask(x) - self.x_corrupt) ** 2))
        reg = ops.nuclear_norm(ops.unfold1(x)) + ops.nuclear_norm(ops.unfold2(x))
        return fit + self.sigma * reg

    def tolerance(self, base=0.5):
        """Stopping tolerance rescaled from 512x512 images by sqrt of the pixel ratio."""
        m, n, _ = self.shape
        factor = math.sqrt(m * n / REFERENCE_PIXELS)
        return base * factor, factor


def sample_mask(shape, erase_ratio, seed):
    """Erase ``floor(ratio * M * N)`` distinct pixel positions chosen uniformly."""
    m, n = shape
    if not 0.0 <= erase_ratio < 1.0:
        raise DomainError(f"erase ratio must lie in [0, 1), got {erase_ratio}")
    count = int(math.floor(erase_ratio * m * n))
    rng = np.random.default_rng(seed)
    omega = np.ones(m * n)
    omega[rng.choice(m * n, size=count, replace=False)] = 0.0
    return ops.Mask(omega.reshape(m, n))


def build_inpainting(image, erase_ratio, seed, sigma=0.5, rho=1.0):
    """Corrupt ``image`` and assemble the three-operator splitting family.

    ``JA`` and ``JB`` are singular value thresholding at level ``rho * sigma``
    on the mode-1 and mode-2 unfoldings, and ``C(x) = A x - x_corrupt`` is
    1-cocoercive, so ``rho`` must lie in (0, 2).
    """
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    if not 0.0 < rho < 2.0:
        raise DomainError(f"rho must lie in (0, 2), got {rho}")
    image = np.asarray(image, dtype=float)
    shape = image.shape
    mask = sample_mask(shape[:2], erase_ratio, seed)
    x_corrupt = mask(image)
    t = rho * sigma

    def JA(x):
        return ops.refold1(ops.nuclear_prox(ops.unfold1(x), t), shape)

    def JB(x):
        return ops.refold2(ops.nuclear_prox(ops.unfold2(x), t), shape)

    def C(x):
        return mask(x) - x_corrupt

    family = ops.davis_yin(JB, JA, C, rho, tau=1.0)
    return InpaintProblem(image, x_corrupt, mask, sigma, rho, family)


def run_inpainting(problem, variant, lam, max_iter=100, tolerance=None, **kw):
    """Run one inertial variant from ``X_0 = X_1 = x_corrupt``."""
    tol = problem.tolerance()[0] if tolerance is None else tolerance
    return run(problem.family, variant_schedule(variant, lam), None, problem.x_corrupt,
               tol, max_iter, **kw)


# -- Nash-Cournot ----------------------------------------------------------


def spectral_norm(mat, rtol=1e-10, max_iter=100000):
    """Largest singular value by power iteration on ``mat^T mat``."""
    v = np.ones(mat.shape[1]) / math.sqrt(mat.shape[1])
    est = 0.0
    for _ in range(max_iter):
        w = mat.T @ (mat @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        v = w / nrm
        new = math.sqrt(nrm)
        if abs(new - est) <= rtol * new:
            return new
        est = new
    return est


@dataclass
class CournotProblem:
    gamma: float
    beta_coef: np.ndarray
    p_cost: np.ndarray
    q_cost: np.ndarray
    box: tuple
    B: np.ndarray
    B_tilde: np.ndarray
    J: np.ndarray
    c: np.ndarray
    L: float
    seed: int = None

    @property
    def m(self):
        return len(self.beta_coef)

    def project(self, x):
        return np.clip(x, self.box[0], self.box[1])

    def family(self, rho):
        return ops.projected_gradient(self.project, lambda x: cournot_F(self, x), rho, self.L)


def make_cournot(beta_coef, p_cost, q_cost, gamma, box=(1.0, 40.0), seed=None):
    """Assemble the market from explicit firm parameters."""
    beta_coef = np.asarray(beta_coef, dtype=float)
    p_cost = np.asarray(p_cost, dtype=float)
    q_cost = np.asarray(q_cost, dtype=float)
    m = len(beta_coef)
    if m < 1 or p_cost.shape != (m,) or q_cost.shape != (m,):
        raise DomainError("firm parameter vectors must share a positive length")
    B = np.tile(beta_coef[:, None], (1, m))
    np.fill_diagonal(B, 0.0)
    B_tilde = np.diag(beta_coef)
    J = B + 2.0 * B_tilde + np.diag(p_cost)
    c = q_cost - gamma
    return CournotProblem(float(gamma), beta_coef, p_cost, q_cost, tuple(box), B, B_tilde,
                          J, c, spectral_norm(J), seed)


def build_cournot(m=8, gamma=200.0, seed=0):
    """Random market: ``beta_i`` in (0, 1], ``p_i`` and ``q_i`` in [1, 3], strategies in [1, 40]."""
    if m < 1:
        raise DomainError("m must be >= 1")
    rng = np.random.default_rng(seed)
    beta_coef = 1.0 - rng.random(m)
    p_cost = rng.uniform(1.0, 3.0, m)
    q_cost = rng.uniform(1.0, 3.0, m)
    return make_cournot(beta_coef, p_cost, q_cost, gamma, seed=seed)


def cournot_F(problem, x):
    """``B x - Gamma + 2 B~ x + (p_i x_i + q_i)_i``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.m,):
        raise DomainError(f"expected a vector of length {problem.m}, got shape {x.shape}")
    return problem.J @ x + problem.c


def vi_violation(problem, x):
    """Largest violation of ``<F(x), v - x> >= 0`` over coordinate-wise box extremes ``v``.

    Test points replace one coordinate of ``x`` with a box bound; the value
    returned is ``max(0, -min <F(x), v - x>)``.
    """
    f = cournot_F(problem, x)
    lo, hi = problem.box
    worst = min(np.min(f * (lo - x)), np.min(f * (hi - x)))
    return max(0.0, -float(worst))


def run_cournot(problem, variant, lam, rho=None, tolerance=1e-4, max_iter=800, x0=None, **kw):
    """Run one inertial variant from the lower corner of the box (default ``rho = 1/L``)."""
    rho = 1.0 / problem.L if rho is None else rho
    x0 = np.full(problem.m, problem.box[0]) if x0 is None else x0
    return run(problem.family(rho), variant_schedule(variant, lam), None, x0,
               tolerance, max_iter, **kw)
