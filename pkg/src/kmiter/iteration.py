"""The inertial, relaxed and perturbed Krasnoselskii-Mann iteration.

One step maps ``(x_{k-1}, x_k)`` to ``x_{k+1}`` through::

    y_k     = x_k + alpha_k (x_k - x_{k-1}) + eps_k
    z_k     = x_k + beta_k  (x_k - x_{k-1}) + rho_k
    x_{k+1} = (1 - lambda_k) y_k + lambda_k T_k z_k + theta_k

with ``x_0 = x_1``.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .schedules import STREAMS, PerturbationSchedule

DENSE_LIMIT = 10 ** 6
DIVERGENCE_LIMIT = 1e150


@dataclass
class IterationState:
    k: int
    x_prev: np.ndarray
    x_curr: np.ndarray
    y: np.ndarray = None
    z: np.ndarray = None

    @classmethod
    def initial(cls, x0):
        x0 = np.array(x0, dtype=float)
        return cls(1, x0, x0.copy())


def _check_shape(family, x):
    if family.shape is not None and tuple(np.shape(x)) != tuple(family.shape):
        raise ConfigurationError(
            f"point of shape {np.shape(x)} does not match operator domain {family.shape}")


def step(state, family, alpha, beta, lam, eps=None, rho=None, theta=None):
    """Advance ``state`` by one iteration with the parameters of index ``state.k``."""
    _check_shape(family, state.x_curr)
    d = state.x_curr - state.x_prev
    y = state.x_curr + alpha * d
    z = state.x_curr + beta * d
    if eps is not None:
        y = y + eps
    if rho is not None:
        z = z + rho
    x_next = (1.0 - lam) * y + lam * family(state.k, z)
    if theta is not None:
        x_next = x_next + theta
    return IterationState(state.k + 1, state.x_curr, x_next, y, z)


def residual(family, k, x):
    """``|T_k x - x|``."""
    return float(np.linalg.norm(family(k, x) - x))


@dataclass
class RunReport:
    """Per-iteration traces of a run.

    Row ``i`` describes the iterate ``x_k`` with ``k = k_index[i]``:
    ``residual = |T_k x_k - x_k|``, ``km_residual = |T_k z_k - y_k|``,
    ``step_norm = |x_k - x_{k-1}|`` and ``step_sq_sum`` the running sum of
    squared step norms.  ``dist`` is ``|x_k - p|`` for the reference point.
    """

    k_index: np.ndarray
    residual: np.ndarray
    km_residual: np.ndarray
    step_norm: np.ndarray
    step_sq_sum: np.ndarray
    dist: np.ndarray
    stop_reason: str
    iterations: int
    x_final: np.ndarray
    perturbed: bool
    perturbation_l1: dict = field(default_factory=dict)
    perturbation_l2_sq: dict = field(default_factory=dict)
    last_finite_k: int = None
    iterates: list = None

    @property
    def converged(self):
        return self.stop_reason == "tolerance"

    def header(self):
        cols = ["k", "residual", "km_residual", "step_norm", "step_sq_sum"]
        if self.dist is not None:
            cols.append("dist")
        return cols

    def rows(self):
        cols = [self.k_index, self.residual, self.km_residual, self.step_norm, self.step_sq_sum]
        if self.dist is not None:
            cols.append(self.dist)
        for i in range(len(self.k_index)):
            yield [int(cols[0][i])] + [float(c[i]) for c in cols[1:]]

    def to_csv(self, fh):
        """Write the traces as CSV to an open text file."""
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(self.header())
        for row in self.rows():
            writer.writerow([row[0]] + [f"{v:.15g}" for v in row[1:]])


def run(family, schedule, perts, x0, tolerance, max_iter, reference=None,
        record_iterates=False):
    """Iterate from ``x_0 = x_1 = x0`` until ``|T_k x_k - x_k| <= tolerance`` or ``max_iter``.

    Parameters
    ----------
    family : OperatorFamily
    schedule : ParameterSchedule
    perts : PerturbationSchedule or None
    x0 : array_like
    tolerance : float
        Stopping threshold on the fixed-point residual, ``> 0``.
    max_iter : int
        Largest iterate index ``k`` to reach, ``>= 1``.
    reference : array_like, optional
        Point for the distance trace; defaults to the family's fixed point
        (or limit point for moving-set families).
    record_iterates : bool
        Keep a copy of every ``x_k`` (for small problems and tests).

    Returns
    -------
    RunReport
        ``stop_reason`` is ``"tolerance"``, ``"max_iter"`` or ``"diverged"``
        (an iterate became non-finite or exceeded ``DIVERGENCE_LIMIT``).
    """
    if not tolerance > 0:
        raise ConfigurationError("tolerance must be positive")
    if max_iter < 1:
        raise ConfigurationError("max_iter must be >= 1")
    perts = perts if perts is not None else PerturbationSchedule()
    ref = reference if reference is not None else family.reference_point
    ref = None if ref is None else np.asarray(ref, dtype=float)

    x_prev = np.array(x0, dtype=float)
    x = x_prev.copy()
    _check_shape(family, x)

    ks, res, km, steps, sq_sums, dists = [], [], [], [], [], []
    iterates = [] if record_iterates else None
    l1 = dict.fromkeys(STREAMS, 0.0)
    l2 = dict.fromkeys(STREAMS, 0.0)
    sq_sum = 0.0
    stop = "max_iter"
    last_k = max_iter
    last_finite = None

    for k in range(1, max_iter + 1):
        tx = family(k, x)
        r = float(np.linalg.norm(tx - x))
        d = x - x_prev
        s = float(np.linalg.norm(d))
        sq_sum += s * s
        alpha, beta, lam = schedule.at(k)
        eps, rho, theta = perts.at(k)
        for name, e in zip(STREAMS, (eps, rho, theta)):
            if e is not None:
                n = float(np.linalg.norm(e))
                l1[name] += n
                l2[name] += n * n

        y = x + alpha * d if alpha else x
        if eps is not None:
            y = y + eps
        if rho is None and (beta == 0 or k == 1):
            tz = tx
        else:
            z = x + beta * d
            if rho is not None:
                z = z + rho
            tz = family(k, z)
        km_r = float(np.linalg.norm(tz - y))
        x_next = (1.0 - lam) * y + lam * tz
        if theta is not None:
            x_next = x_next + theta

        if k <= DENSE_LIMIT or k % 10 == 0:
            ks.append(k)
            res.append(r)
            km.append(km_r)
            steps.append(s)
            sq_sums.append(sq_sum)
            if ref is not None:
                dists.append(float(np.linalg.norm(x - ref)))
            if record_iterates:
                iterates.append(x.copy())

        if not math.isfinite(r):
            stop, last_k, last_finite = "diverged", k, k - 1
            break
        if r <= tolerance:
            stop, last_k = "tolerance", k
            break
        if not np.all(np.isfinite(x_next)) or np.max(np.abs(x_next)) > DIVERGENCE_LIMIT:
            stop, last_k, last_finite = "diverged", k, k
            break
        x_prev, x = x, x_next

    return RunReport(
        k_index=np.array(ks, dtype=int),
        residual=np.array(res),
        km_residual=np.array(km),
        step_norm=np.array(steps),
        step_sq_sum=np.array(sq_sums),
        dist=np.array(dists) if ref is not None else None,
        stop_reason=stop,
        iterations=last_k,
        x_final=x,
        perturbed=not perts.is_zero,
        perturbation_l1=l1,
        perturbation_l2_sq=l2,
        last_finite_k=last_finite,
        iterates=iterates,
    )


def absorb_theta(schedule, perts):
    """Fold the outer perturbation ``theta`` into ``eps`` and ``rho``.

    With ``x~_k = x_k - theta_{k-1}`` (``theta_0 = theta_{-1} = 0``) the
    shifted iterates follow the same update with no outer perturbation and
    inner perturbations::

        eps~_k = theta_{k-1} + alpha_k (theta_{k-1} - theta_{k-2}) + eps_k
        rho~_k = theta_{k-1} + beta_k  (theta_{k-1} - theta_{k-2}) + rho_k
    """
    if perts.theta is None:
        return perts
    theta = perts.theta
    zero = np.zeros_like(np.asarray(theta(1), dtype=float))

    def th(j):
        return np.asarray(theta(j), dtype=float) if j >= 1 else zero

    def folded(coef, inner):
        def stream(k):
            t1, t2 = th(k - 1), th(k - 2)
            out = t1 + coef(k) * (t1 - t2)
            return out if inner is None else out + inner(k)
        return stream

    return PerturbationSchedule(eps=folded(schedule.alpha, perts.eps),
                                rho=folded(schedule.beta, perts.rho))


@dataclass
class LinearRateCheck:
    passed: bool
    worst_slack: float
    Q: float
    Lambda: float
    A: float
    bound: np.ndarray


def verify_linear_rate(report, schedule):
    """Check ``|x_k - p*|^2 <= Q^k |x_1 - p*|^2 / ((1 - Lambda)(1 - A))`` along a run.

    ``Q = sup (1 - lambda_k + lambda_k q_k^2)``, ``Lambda = sup lambda_k`` and
    ``A = sup alpha_k`` are taken over the recorded indices (and the limits,
    for closed-form schedules).  Only valid for unperturbed runs.
    """
    if report.perturbed:
        raise ContractViolation("the linear rate bound only holds for unperturbed runs")
    if report.dist is None:
        raise ContractViolation("run has no distance trace")
    if schedule.q is None:
        raise ConfigurationError("linear rate needs contraction moduli q")
    n = int(report.k_index[-1])
    lam = schedule.lam.prefix(n)
    alpha = schedule.alpha.prefix(n)
    q = schedule.q.prefix(n)
    big_q = 1.0 - lam + lam * q * q
    Q, Lam, A = float(big_q.max()), float(lam.max()), float(alpha.max())
    if schedule.closed_form:
        ql, ll = schedule.q.limit, schedule.lam.limit
        Q = max(Q, 1.0 - ll + ll * ql * ql)
        Lam = max(Lam, ll)
        A = max(A, schedule.alpha.limit)
    d2 = report.dist ** 2
    bound = Q ** report.k_index.astype(float) * d2[0] / ((1.0 - Lam) * (1.0 - A))
    slack = bound - d2
    passed = bool(np.all(d2 <= bound * (1.0 + 1e-12)))
    return LinearRateCheck(passed, float(slack.min()), Q, Lam, A, bound)


@dataclass
class SummabilityDiagnostics:
    step_sq_total: float
    last_quarter_share: float
    km_min_scaled: np.ndarray
    perturbation_l1: dict
    perturbation_l2_sq: dict


def summability_diagnostics(report):
    """Tail behaviour of the squared step norms and of ``k * min_j |T_j z_j - y_j|^2``."""
    sums = report.step_sq_sum
    total = float(sums[-1]) if len(sums) else 0.0
    n = len(sums)
    q = max(n // 4, 1)
    if total > 0 and n > q:
        share = float((sums[-1] - sums[n - q - 1]) / total)
    else:
        share = 0.0
    running_min = np.minimum.accumulate(report.km_residual ** 2)
    return SummabilityDiagnostics(
        step_sq_total=total,
        last_quarter_share=share,
        km_min_scaled=report.k_index * running_min,
        perturbation_l1=dict(report.perturbation_l1),
        perturbation_l2_sq=dict(report.perturbation_l2_sq),
    )


def fejer_excess(report, start_fraction=0.5):
    """Sum of the positive increments of ``|x_k - p|`` over the final part of a run."""
    if report.dist is None:
        raise ContractViolation("run has no distance trace")
    start = int(len(report.dist) * start_fraction)
    inc = np.diff(report.dist[start:])
    return float(np.sum(np.maximum(inc, 0.0)))
