"""Spectral tightness study on planar rotations.

Identifying the plane with C, the rotation ``T z = e^{i phi} z`` turns the
iteration into the scalar recurrence ``x_{k+1} = omega x_k - delta x_{k-1}``
with::

    omega = (1 - lam)(1 + alpha) + lam (1 + beta) e^{i phi}
    delta = (1 - lam) alpha + lam beta e^{i phi}

It converges iff both roots of ``mu^2 - omega mu + delta`` lie strictly
inside the unit disk.  ``lambda_tilde`` is the largest relaxation for which
this holds (infimum over a grid of angles), and the report compares it with
the closed-form bound from :mod:`kmiter.schedules`.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .schedules import lambda_bound

SCAN_STEP = 1e-3
DEFAULT_TOL = 1e-6
PHI_GRID = np.arange(1, 31) * np.pi / 30


@dataclass(frozen=True)
class CompanionSystem:
    omega: complex
    delta: complex

    @property
    def matrix(self):
        return np.array([[self.omega, -self.delta], [1.0, 0.0]], dtype=complex)


def companion(alpha, beta, lam, phi):
    e = np.exp(1j * phi)
    omega = (1.0 - lam) * (1.0 + alpha) + lam * (1.0 + beta) * e
    delta = (1.0 - lam) * alpha + lam * beta * e
    return CompanionSystem(complex(omega), complex(delta))


def _radius(omega, delta):
    """Largest root modulus of ``mu^2 - omega mu + delta``, elementwise.

    The larger root is taken as ``(omega + s)/2`` with the branch of
    ``s = sqrt(omega^2 - 4 delta)`` aligned with ``omega``; the other root
    follows from the product ``delta`` to avoid cancellation.
    """
    omega = np.asarray(omega, dtype=complex)
    delta = np.asarray(delta, dtype=complex)
    s = np.sqrt(omega * omega - 4.0 * delta)
    s = np.where((np.conj(omega) * s).real < 0, -s, s)
    big = 0.5 * (omega + s)
    abs_big = np.abs(big)
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.where(abs_big > 0, np.abs(delta) / abs_big, 0.0)
    return np.maximum(abs_big, small)


def spectral_radius(sys):
    return float(_radius(sys.omega, sys.delta))


def _radius_at(alpha, beta, lam, phi):
    e = np.exp(1j * np.asarray(phi))
    lam = np.asarray(lam, dtype=float)
    omega = (1.0 - lam) * (1.0 + alpha) + lam * (1.0 + beta) * e
    delta = (1.0 - lam) * alpha + lam * beta * e
    return _radius(omega, delta)


def _scan_grid(tol):
    n = int(round(1.0 / SCAN_STEP))
    grid = np.arange(1, n) * SCAN_STEP
    return np.append(grid, 1.0 - tol / 2)


@dataclass
class ThresholdScan:
    """Result of the stability threshold search for a set of angles.

    ``value[j]`` is the threshold for ``phis[j]``; ``empty[j]`` flags angles
    with no stable relaxation on the scan grid, ``anomaly[j]`` angles where
    stability reappears after the first instability.
    """

    phis: np.ndarray
    value: np.ndarray
    empty: np.ndarray
    anomaly: np.ndarray


def scan_thresholds(alpha, beta, phis, tol=DEFAULT_TOL):
    """Coarse scan over ``lam`` followed by bisection, vectorised over angles."""
    if not tol > 0:
        raise DomainError("tol must be positive")
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    grid = _scan_grid(tol)
    stable = _radius_at(alpha, beta, grid[None, :], phis[:, None]) < 1.0
    unstable = ~stable
    has_bad = unstable.any(axis=1)
    first_bad = np.where(has_bad, unstable.argmax(axis=1), len(grid))
    anomaly = np.array([bool(stable[j, first_bad[j]:].any()) for j in range(len(phis))])
    empty = first_bad == 0

    lo = np.where(first_bad > 0, grid[np.maximum(first_bad - 1, 0)], 0.0)
    hi = np.where(has_bad, grid[np.minimum(first_bad, len(grid) - 1)], 1.0)
    active = has_bad.copy()
    while np.any(active & (hi - lo > tol)):
        mid = 0.5 * (lo + hi)
        ok = _radius_at(alpha, beta, mid, phis) < 1.0
        upd = active & (hi - lo > tol)
        lo = np.where(upd & ok, mid, lo)
        hi = np.where(upd & ~ok, mid, hi)
    value = np.where(has_bad, lo, 1.0)
    return ThresholdScan(phis, value, empty, anomaly)


def lambda_tilde_phi(alpha, beta, phi, tol=DEFAULT_TOL):
    """Supremum of the relaxations in (0, 1] for which the rotation by ``phi`` converges.

    Located to within ``tol`` below the true threshold.  Returns 1 when the
    recurrence is stable for every scanned ``lam < 1`` and 0 when no scanned
    value is stable.
    """
    return float(scan_thresholds(alpha, beta, [phi], tol).value[0])


def lambda_tilde(alpha, beta, tol=DEFAULT_TOL, phis=PHI_GRID):
    """Minimum of :func:`lambda_tilde_phi` over the angle grid ``{j pi / 30}``."""
    return float(scan_thresholds(alpha, beta, phis, tol).value.min())


REGIMES = ("Heavy-Ball", "Nesterov", "Reflected", "General")

DOMAINS = {
    "Heavy-Ball": "{(alpha,0): alpha in [0,1)}",
    "Nesterov": "{(alpha,alpha): alpha in [0,1)}",
    "Reflected": "{(0,beta): beta in [0,1]}",
    "General": "{(alpha,beta): alpha in [0,1), beta in [0,1]}",
}


def regime_grid(regime, resolution):
    """Sample points of a regime's domain.  ``alpha`` excludes 1, ``beta`` includes it."""
    a = np.linspace(0.0, 1.0, resolution, endpoint=False)
    b = np.linspace(0.0, 1.0, resolution)
    if regime == "Heavy-Ball":
        return [(x, 0.0) for x in a]
    if regime == "Nesterov":
        return [(x, x) for x in a]
    if regime == "Reflected":
        return [(0.0, y) for y in b]
    if regime == "General":
        return [(x, y) for x in a for y in b]
    raise DomainError(f"unknown regime {regime!r}")


@dataclass
class RegimeRow:
    regime: str
    grid: list
    lambda_bound_values: np.ndarray
    lambda_tilde_values: np.ndarray
    anomalies: int = 0

    @property
    def gaps(self):
        return self.lambda_tilde_values - self.lambda_bound_values

    @property
    def gap_l1(self):
        # every domain has unit measure
        return float(np.mean(np.abs(self.gaps)))

    @property
    def gap_linf(self):
        return float(np.max(np.abs(self.gaps)))

    @property
    def argmax(self):
        return self.grid[int(np.argmax(np.abs(self.gaps)))]


@dataclass
class TightnessReport:
    rows: dict = field(default_factory=dict)
    tol: float = DEFAULT_TOL

    def to_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["regime", "alpha", "beta", "lambda_bound", "lambda_tilde", "gap"])
        for name, row in self.rows.items():
            for (a, b), lb, lt in zip(row.grid, row.lambda_bound_values, row.lambda_tilde_values):
                w.writerow([name, f"{a:.15g}", f"{b:.15g}", f"{lb:.15g}", f"{lt:.15g}",
                            f"{lt - lb:.15g}"])

    def summary_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["regime", "domain", "gap_l1", "gap_linf"])
        for name, row in self.rows.items():
            w.writerow([name, DOMAINS[name], f"{row.gap_l1:.15g}", f"{row.gap_linf:.15g}"])


def tightness_report(grid_resolution=200, tol=DEFAULT_TOL, general_resolution=50,
                     regimes=REGIMES):
    """Gaps ``lambda_tilde - lambda_bound`` over the regime domains.

    The one-dimensional domains are sampled with ``grid_resolution`` points
    and the general square with ``general_resolution`` points per side.
    ``gap_l1`` is the mean absolute gap times the (unit) domain measure.
    """
    if grid_resolution < 10:
        raise DomainError("grid_resolution must be >= 10")
    report = TightnessReport(tol=tol)
    for regime in regimes:
        res = general_resolution if regime == "General" else grid_resolution
        pts = regime_grid(regime, res)
        lb = np.empty(len(pts))
        lt = np.empty(len(pts))
        anomalies = 0
        for i, (a, b) in enumerate(pts):
            lb[i] = lambda_bound(a, b)
            scan = scan_thresholds(a, b, PHI_GRID, tol)
            lt[i] = scan.value.min()
            anomalies += int(scan.anomaly.any())
        report.rows[regime] = RegimeRow(regime, pts, lb, lt, anomalies)
    return report
