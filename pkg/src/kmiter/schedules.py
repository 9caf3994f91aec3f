"""Parameter and perturbation schedules, and admissibility checks.

A schedule holds the inertial parameters ``alpha_k`` (Polyak branch),
``beta_k`` (Nesterov branch), the relaxation ``lambda_k`` and optional
contraction moduli ``q_k``.  Each is a :class:`ParamSequence`, which is
either a closed form (``constant`` or ``ramp``, where ``ramp`` means
``(1 - 1/k) * c``) or an explicit finite prefix.  Closed forms have a known
limit, so suprema over all ``k`` can be evaluated exactly; verdicts on
explicit prefixes are labelled horizon-limited.
"""

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError

BRANCH_TOL = 1e-9

KINDS = ("constant", "ramp", "explicit")


@dataclass(frozen=True)
class ParamSequence:
    """A real sequence indexed by ``k >= 1``.

    ``explicit`` sequences repeat their last value past the end of the
    stored prefix.
    """

    kind: str
    value: float = 0.0
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown sequence kind {self.kind!r}")
        if self.kind == "explicit" and not self.values:
            raise DomainError("explicit sequence needs at least one value")

    @classmethod
    def constant(cls, c):
        return cls("constant", float(c))

    @classmethod
    def ramp(cls, c):
        return cls("ramp", float(c))

    @classmethod
    def explicit(cls, values):
        return cls("explicit", values=tuple(float(v) for v in values))

    @classmethod
    def coerce(cls, obj):
        if isinstance(obj, ParamSequence):
            return obj
        if np.ndim(obj) == 0:
            return cls.constant(obj)
        return cls.explicit(obj)

    def __call__(self, k):
        if self.kind == "constant":
            return self.value
        if self.kind == "ramp":
            return (1.0 - 1.0 / k) * self.value
        return self.values[min(k, len(self.values)) - 1]

    def prefix(self, horizon):
        """Values for ``k = 1..horizon`` as an array."""
        k = np.arange(1, horizon + 1, dtype=float)
        if self.kind == "constant":
            return np.full(horizon, self.value)
        if self.kind == "ramp":
            return (1.0 - 1.0 / k) * self.value
        vals = np.asarray(self.values)
        idx = np.minimum(np.arange(horizon), len(vals) - 1)
        return vals[idx]

    @property
    def closed_form(self):
        return self.kind != "explicit"

    @property
    def limit(self):
        """Limit as ``k -> inf``; ``None`` for explicit prefixes."""
        return self.value if self.closed_form else None

    def describe(self):
        if self.kind == "explicit":
            return ";".join(repr(v) for v in self.values), "explicit"
        return repr(self.value), self.kind


def nu(lambda_k):
    """Return ``1/lambda_k - 1``."""
    if not 0.0 < lambda_k < 1.0:
        raise DomainError(f"lambda must lie in (0, 1), got {lambda_k}")
    return 1.0 / lambda_k - 1.0


def mu(alpha_k, beta_k, lambda_k):
    """Return the combined inertia ``(1 - lambda_k) alpha_k + lambda_k beta_k``."""
    if not 0.0 <= alpha_k < 1.0:
        raise DomainError(f"alpha must lie in [0, 1), got {alpha_k}")
    if not 0.0 <= beta_k <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta_k}")
    if not 0.0 <= lambda_k <= 1.0:
        raise DomainError(f"lambda must lie in [0, 1], got {lambda_k}")
    return (1.0 - lambda_k) * alpha_k + lambda_k * beta_k


@dataclass(frozen=True)
class ParameterSchedule:
    """Inertia, relaxation and contraction sequences driving the iteration."""

    alpha: ParamSequence
    beta: ParamSequence
    lam: ParamSequence
    q: ParamSequence = None

    def __post_init__(self):
        for name in ("alpha", "beta", "lam"):
            object.__setattr__(self, name, ParamSequence.coerce(getattr(self, name)))
        if self.q is not None:
            object.__setattr__(self, "q", ParamSequence.coerce(self.q))

    @classmethod
    def constant(cls, alpha, beta, lam, q=None):
        return cls(alpha, beta, lam, q)

    @classmethod
    def ramped(cls, alpha, beta, lam, q=None):
        """``alpha_k = (1 - 1/k) alpha``, ``beta_k = (1 - 1/k) beta``, constant ``lam`` and ``q``."""
        return cls(ParamSequence.ramp(alpha), ParamSequence.ramp(beta), lam, q)

    def at(self, k):
        return self.alpha(k), self.beta(k), self.lam(k)

    def q_at(self, k):
        return 1.0 if self.q is None else self.q(k)

    @property
    def closed_form(self):
        seqs = [self.alpha, self.beta, self.lam] + ([self.q] if self.q is not None else [])
        return all(s.closed_form for s in seqs)

    @classmethod
    def from_text(cls, text):
        """Parse ``key=value`` text such as ``alpha=0.3, alpha_kind=ramp, lambda=0.5``.

        Recognised keys: ``alpha``, ``beta``, ``lambda``, ``q`` and the
        matching ``<name>_kind`` in {constant, ramp}.  Missing inertia
        defaults to zero.
        """
        pairs = {}
        for token in re.split(r"[,\s]+", text.strip()):
            if not token:
                continue
            if "=" not in token:
                raise ConfigurationError(f"expected key=value, got {token!r}")
            key, val = token.split("=", 1)
            pairs[key.strip()] = val.strip()
        known = {"alpha", "beta", "lambda", "q"}
        known |= {f"{n}_kind" for n in known}
        unknown = set(pairs) - known
        if unknown:
            raise ConfigurationError(f"unknown schedule keys: {sorted(unknown)}")
        if "lambda" not in pairs:
            raise ConfigurationError("schedule text must set lambda")

        def seq(name, default):
            if name not in pairs and default is None:
                return None
            raw = float(pairs.get(name, default))
            kind = pairs.get(f"{name}_kind", "constant")
            if kind not in ("constant", "ramp"):
                raise ConfigurationError(f"{name}_kind must be constant or ramp, got {kind!r}")
            return ParamSequence(kind, raw)

        return cls(seq("alpha", 0.0), seq("beta", 0.0), seq("lambda", None), seq("q", None))

    def to_text(self):
        parts = []
        for key, s in (("alpha", self.alpha), ("beta", self.beta), ("lambda", self.lam), ("q", self.q)):
            if s is None:
                continue
            if not s.closed_form:
                raise ConfigurationError("explicit sequences have no key=value form")
            parts.append(f"{key}={s.value!r}")
            parts.append(f"{key}_kind={s.kind}")
        return ", ".join(parts)


def _bracket(a, b, lam, a_prev, lam_prev, q=None):
    """Bracket of the weak (``q is None``) or strong admissibility inequality.

    Works elementwise on arrays.
    """
    nu_k = 1.0 / lam - 1.0
    nu_prev = 1.0 / lam_prev - 1.0
    if q is None:
        q2 = 1.0
        big_q = 1.0
    else:
        q2 = q * q
        big_q = 1.0 - lam + lam * q2
    return ((1.0 - lam) * a * (1.0 + a) + lam * q2 * b * (1.0 + b)
            + nu_k * a * (1.0 - a) - big_q * nu_prev * (1.0 - a_prev))


def _prev(schedule, k):
    # nu_0 = nu_1 and alpha_0 = alpha_1
    j = max(k - 1, 1)
    return schedule.alpha(j), schedule.lam(j)


def weak_margin(schedule, k):
    """Bracket of the weak-convergence inequality at index ``k``; negative is good."""
    if k < 1:
        raise DomainError("weak_margin is defined for k >= 1")
    a, b, lam = schedule.at(k)
    a_prev, lam_prev = _prev(schedule, k)
    return float(_bracket(a, b, lam, a_prev, lam_prev))


def strong_margin(schedule, k):
    """Bracket of the strong/linear-convergence inequality at index ``k``."""
    if schedule.q is None:
        raise ConfigurationError("strong_margin needs contraction moduli q")
    if k < 1:
        raise DomainError("strong_margin is defined for k >= 1")
    a, b, lam = schedule.at(k)
    a_prev, lam_prev = _prev(schedule, k)
    return float(_bracket(a, b, lam, a_prev, lam_prev, q=schedule.q(k)))


def _margins(schedule, horizon, strong):
    a = schedule.alpha.prefix(horizon)
    b = schedule.beta.prefix(horizon)
    lam = schedule.lam.prefix(horizon)
    a_prev = np.concatenate([a[:1], a[:-1]])
    lam_prev = np.concatenate([lam[:1], lam[:-1]])
    q = schedule.q.prefix(horizon) if strong else None
    with np.errstate(divide="ignore", invalid="ignore"):
        return _bracket(a, b, lam, a_prev, lam_prev, q)


def _limit_margin(schedule, strong):
    a, b, lam = schedule.alpha.limit, schedule.beta.limit, schedule.lam.limit
    q = schedule.q.limit if strong else None
    if not 0.0 < lam < 1.0:
        return math.inf
    return float(_bracket(a, b, lam, a, lam, q))


@dataclass
class FeasibilityVerdict:
    hypothesis_ok: bool
    violations: list
    weak_margin_sup: float
    feasible_weak: bool
    strong_margin_sup: float = None
    feasible_strong: bool = None
    horizon_limited: bool = False
    horizon: int = 0


def check_feasibility(schedule, horizon):
    """Check the standing hypotheses and the admissibility inequalities.

    Margins are maximised over ``k = 1..horizon``.  For closed-form
    schedules the limit bracket is folded in as well, so the verdict is on
    the supremum over all ``k``; otherwise it is flagged horizon-limited.

    Parameters
    ----------
    schedule : ParameterSchedule
    horizon : int
        Number of leading indices to inspect, ``>= 1``.

    Returns
    -------
    FeasibilityVerdict
    """
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    closed = schedule.closed_form
    a = schedule.alpha.prefix(horizon)
    b = schedule.beta.prefix(horizon)
    lam = schedule.lam.prefix(horizon)
    mu_k = (1.0 - lam) * a + lam * b

    def sup(values, seq):
        s = float(np.max(values))
        return max(s, seq.limit) if closed else s

    def inf(values, seq):
        s = float(np.min(values))
        return min(s, seq.limit) if closed else s

    violations = []
    if np.any(a < 0) or np.any(a >= 1):
        violations.append("alpha_k in [0,1)")
    if np.any(b < 0) or np.any(b > 1):
        violations.append("beta_k in [0,1]")
    if np.any(lam <= 0) or np.any(lam >= 1):
        violations.append("lambda_k in (0,1)")
    if sup(a, schedule.alpha) >= 1:
        violations.append("sup alpha_k < 1")
    if sup(lam, schedule.lam) >= 1:
        violations.append("sup lambda_k < 1")
    if inf(lam, schedule.lam) <= 0:
        violations.append("inf lambda_k > 0")
    mu_sup = float(np.max(mu_k))
    if closed:
        la = schedule.lam.limit
        mu_sup = max(mu_sup, (1 - la) * schedule.alpha.limit + la * schedule.beta.limit)
    if mu_sup >= 1:
        violations.append("sup mu_k < 1")
    if np.any(np.diff(mu_k) < 0):
        violations.append("mu_k nondecreasing")
    if schedule.q is not None:
        qv = schedule.q.prefix(horizon)
        if np.any(qv <= 0) or np.any(qv > 1):
            violations.append("q_k in (0,1]")

    hypothesis_ok = not violations

    def margin_sup(strong):
        m = _margins(schedule, horizon, strong)
        s = float(np.max(m)) if np.all(np.isfinite(m)) else math.inf
        if closed:
            s = max(s, _limit_margin(schedule, strong))
        return s

    weak = margin_sup(False)
    verdict = FeasibilityVerdict(
        hypothesis_ok=hypothesis_ok,
        violations=violations,
        weak_margin_sup=weak,
        feasible_weak=hypothesis_ok and weak < 0,
        horizon_limited=not closed,
        horizon=horizon,
    )
    if schedule.q is not None:
        strong = margin_sup(True)
        verdict.strong_margin_sup = strong
        verdict.feasible_strong = hypothesis_ok and strong < 0
    return verdict


def constant_case_margin(alpha, beta, lam):
    """Quadratic in ``lam`` whose sign decides admissibility for constant parameters.

    Equals ``lam * weak_margin`` for the constant schedule.
    """
    return ((beta - alpha) * (1.0 + alpha + beta) * lam * lam
            + (1.0 - alpha + 2.0 * alpha * alpha) * lam - (1.0 - alpha) ** 2)


def lambda_hb(alpha):
    """Relaxation bound for heavy-ball inertia (``beta = 0``); ``inf`` at ``alpha = 0``."""
    if alpha == 0:
        return math.inf
    return (1.0 - alpha) ** 2 / (alpha * (1.0 + alpha))


def lambda_n(alpha):
    """Relaxation bound for Nesterov inertia (``alpha = beta``)."""
    return (1.0 - alpha) ** 2 / (1.0 - alpha + 2.0 * alpha * alpha)


def lambda_r(beta):
    """Relaxation bound for reflected inertia (``alpha = 0``)."""
    return 1.0 / (1.0 + beta)


def lambda_bound_uncapped(alpha, beta):
    """Smallest positive root of :func:`constant_case_margin` in ``lam``.

    Uses the rationalised root ``2c / (b + sqrt(b^2 + 4ac))``, which has no
    0/0 at ``beta = alpha``; within ``BRANCH_TOL`` of the diagonal the
    Nesterov form is returned directly.
    """
    if not 0.0 <= alpha < 1.0:
        raise DomainError(f"alpha must lie in [0, 1), got {alpha}")
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta}")
    if abs(beta - alpha) < BRANCH_TOL:
        return lambda_n(alpha)
    c = (1.0 - alpha) ** 2
    b = 1.0 - alpha + 2.0 * alpha * alpha
    disc = (1.0 - 3.0 * alpha) ** 2 + 4.0 * beta * (1.0 + beta) * c
    return 2.0 * c / (b + math.sqrt(disc))


def lambda_bound(alpha, beta):
    """Largest admissible constant relaxation for inertia ``(alpha, beta)``, capped at 1."""
    return min(1.0, lambda_bound_uncapped(alpha, beta))


def bound_is_binding(alpha, beta):
    """False when the closed-form bound exceeds 1, i.e. every ``lam`` in (0,1) is admissible."""
    return lambda_bound_uncapped(alpha, beta) < 1.0


# -- perturbations ---------------------------------------------------------


@dataclass(frozen=True)
class PowerStream:
    """Perturbation ``scale * k**(-power) * direction``."""

    direction: np.ndarray
    scale: float = 1.0
    power: float = 2.0

    def __call__(self, k):
        return (self.scale * float(k) ** (-self.power)) * self.direction


STREAMS = ("eps", "rho", "theta")


@dataclass(frozen=True)
class PerturbationSchedule:
    """Error streams added to the three lines of the update.

    Each stream is a callable ``k -> array`` evaluated lazily, or ``None``
    for the zero stream.
    """

    eps: object = None
    rho: object = None
    theta: object = None

    @property
    def is_zero(self):
        return self.eps is None and self.rho is None and self.theta is None

    def at(self, k):
        return tuple(None if s is None else np.asarray(s(k), dtype=float)
                     for s in (self.eps, self.rho, self.theta))

    @classmethod
    def from_text(cls, text, dim):
        """Parse e.g. ``"eps=1/k^2, theta=0.5/k^3"`` or ``"rho=2*k^-1.5"``.

        Every stream points along the unit vector ``ones(dim)/sqrt(dim)``.
        ``name=0``, ``none`` or an empty string give zero streams.
        """
        direction = np.ones(dim) / math.sqrt(dim)
        text = text.strip()
        if not text or text == "none":
            return cls()
        streams = {}
        for token in re.split(r"[,\s]+", text):
            if not token:
                continue
            name, _, value = token.partition("=")
            if name not in STREAMS or not value:
                raise ConfigurationError(f"cannot parse perturbation {token!r}")
            if _is_zero(value):
                continue
            m = _DIV.match(value) or _MUL.match(value)
            if m is None:
                raise ConfigurationError(f"cannot parse perturbation {token!r}")
            scale = float(m.group(1)) if m.group(1) else 1.0
            power = float(m.group(2)) if m.group(2) else 1.0
            streams[name] = PowerStream(direction, scale, power)
        return cls(**streams)


_NUM = r"([0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)"
_DIV = re.compile(rf"^{_NUM}?/k(?:\^{_NUM})?$")
_MUL = re.compile(rf"^{_NUM}?\*?k\^\(?-{_NUM}\)?$")


def _is_zero(value):
    try:
        return float(value) == 0.0
    except ValueError:
        return False


@dataclass
class StreamSummary:
    l1: float
    l2_sq: float
    tail_ratio: float
    decay_exponent: float
    l1_suspect: bool
    l2_suspect: bool


def _decay_exponent(norms):
    """Least-squares slope of ``-log|e_k|`` against ``log k`` over the second half."""
    n = len(norms)
    ks = np.arange(1, n + 1, dtype=float)
    sel = slice(n // 2, n)
    v = norms[sel]
    good = v > 0
    if good.sum() < 2:
        return math.inf
    slope = np.polyfit(np.log(ks[sel][good]), np.log(v[good]), 1)[0]
    return float(-slope)


def classify_perturbations(perts, horizon, flag_margin=0.1):
    """Partial l1 / l2 budgets of each stream over ``k = 1..horizon``.

    ``tail_ratio`` is the last-quarter l1 contribution divided by the
    first-quarter one.  ``decay_exponent`` is the fitted power-law decay
    ``p`` of ``|e_k| ~ k**-p`` over the second half of the horizon; a stream
    is flagged as apparently non-summable in l1 when ``p < 1 + flag_margin``
    and in l2 when ``2p < 1 + flag_margin``.

    Returns
    -------
    dict
        ``{stream_name: StreamSummary}`` for eps, rho and theta.
    """
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    out = {}
    for name in STREAMS:
        stream = getattr(perts, name)
        if stream is None:
            out[name] = StreamSummary(0.0, 0.0, 0.0, math.inf, False, False)
            continue
        norms = np.array([np.linalg.norm(stream(k)) for k in range(1, horizon + 1)])
        q = max(horizon // 4, 1)
        head = norms[:q].sum()
        tail = norms[-q:].sum()
        ratio = tail / head if head > 0 else (0.0 if tail == 0 else math.inf)
        p = _decay_exponent(norms)
        out[name] = StreamSummary(
            l1=float(norms.sum()),
            l2_sq=float(np.sum(norms ** 2)),
            tail_ratio=float(ratio),
            decay_exponent=p,
            l1_suspect=p < 1.0 + flag_margin,
            l2_suspect=2.0 * p < 1.0 + flag_margin,
        )
    return out
