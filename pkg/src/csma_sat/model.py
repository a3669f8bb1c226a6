"""Parameter and result types shared across the package."""

import enum
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np


class ValidationError(ValueError):
    """One or more parameter invariants are violated."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class Receiver(str, enum.Enum):
    COLLISION = "collision"
    CAPTURE = "capture"


class ScheduleKind(str, enum.Enum):
    CONSTANT = "constant"
    BINARY_EXPONENTIAL = "binary_exponential"
    CUSTOM = "custom"


class Branch(str, enum.Enum):
    INTERIOR = "Interior"
    SATURATED_Q1 = "Saturated_q1"


@dataclass(frozen=True)
class BackoffSchedule:
    """Transmission probabilities ``q_i = q0 * Q(i)`` for stages 0..K.

    Stages beyond ``cutoff_K`` reuse ``q_K``. A custom schedule carries the
    ``K + 1`` values of ``Q`` explicitly in ``table``.
    """

    q0: float
    cutoff_K: int = 0
    kind: ScheduleKind = ScheduleKind.BINARY_EXPONENTIAL
    table: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if self.table is not None:
            object.__setattr__(self, "table", tuple(float(v) for v in self.table))

    @classmethod
    def constant(cls, q0, K=0):
        return cls(q0, K, ScheduleKind.CONSTANT)

    @classmethod
    def binary_exponential(cls, q0, K):
        return cls(q0, K, ScheduleKind.BINARY_EXPONENTIAL)

    @classmethod
    def custom(cls, q0, Q: Sequence[float]):
        return cls(q0, len(Q) - 1, ScheduleKind.CUSTOM, tuple(Q))

    @classmethod
    def from_probabilities(cls, q: Sequence[float]):
        """Custom schedule reproducing the given per-stage probabilities."""
        q = [float(v) for v in q]
        return cls.custom(q[0], [v / q[0] for v in q])

    def Q(self, i):
        i = min(int(i), self.cutoff_K)
        if self.kind is ScheduleKind.CONSTANT:
            return 1.0
        if self.kind is ScheduleKind.BINARY_EXPONENTIAL:
            return 2.0 ** (-i)
        return self.table[i]

    def q(self, i):
        return self.q0 * self.Q(i)

    def Q_values(self):
        return np.array([self.Q(i) for i in range(self.cutoff_K + 1)])

    def q_values(self):
        return self.q0 * self.Q_values()

    def with_q0(self, q0):
        return replace(self, q0=q0)

    def problems(self):
        out = []
        if not (isinstance(self.cutoff_K, (int, np.integer)) and self.cutoff_K >= 0):
            out.append(f"cutoff_K must be an integer >= 0, got {self.cutoff_K!r}")
            return out
        if not (math.isfinite(self.q0) and 0.0 < self.q0 <= 1.0):
            out.append(f"q0 must lie in (0, 1], got {self.q0!r}")
        if self.kind is ScheduleKind.CUSTOM:
            if self.table is None or len(self.table) != self.cutoff_K + 1:
                out.append("custom schedule needs a table of cutoff_K + 1 values of Q(i)")
                return out
            if self.table[0] != 1.0:
                out.append(f"Q(0) must equal 1, got {self.table[0]!r}")
            for i in range(1, len(self.table)):
                if self.table[i] > self.table[i - 1]:
                    out.append(f"schedule not non-increasing: Q({i})={self.table[i]} > Q({i - 1})={self.table[i - 1]}")
        elif self.table is not None:
            out.append(f"table is only allowed for custom schedules, not {self.kind.value}")
        if not out:
            qs = self.q_values()
            bad = [i for i, v in enumerate(qs) if not (math.isfinite(v) and 0.0 < v <= 1.0)]
            if bad:
                out.append(f"q_i must lie in (0, 1] for every stage; violated at i={bad}")
        return out

    def to_dict(self):
        d = {"q0": self.q0, "cutoff_K": self.cutoff_K, "kind": self.kind.value}
        if self.table is not None:
            d["table"] = list(self.table)
        return d

    @classmethod
    def from_dict(cls, d):
        table = d.get("table")
        return cls(
            q0=float(d["q0"]),
            cutoff_K=int(d.get("cutoff_K", 0 if table is None else len(table) - 1)),
            kind=ScheduleKind(d.get("kind", "binary_exponential")),
            table=None if table is None else tuple(table),
        )


@dataclass(frozen=True)
class NetworkParams:
    """The abstract saturated CSMA network.

    ``a`` is the mini-slot length relative to one packet, ``x`` the
    failure-detection time in mini-slots, ``mu`` the decoding threshold and
    ``rho`` the mean received SNR (linear).
    """

    n: int
    a: float
    x: float
    mu: float
    rho: float
    schedule: BackoffSchedule
    receiver: Receiver = Receiver.COLLISION

    def __post_init__(self):
        object.__setattr__(self, "receiver", Receiver(self.receiver))

    @property
    def snr_loss(self):
        """mu / rho, the exponent of the fading pass probability."""
        return self.mu / self.rho

    @property
    def K(self):
        return self.schedule.cutoff_K

    def replace(self, **changes):
        return replace(self, **changes)

    def with_q0(self, q0):
        return replace(self, schedule=self.schedule.with_q0(q0))

    def problems(self):
        out = []
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            out.append(f"n must be an integer >= 1, got {self.n!r}")
        ok = {}
        for name in ("a", "x", "mu", "rho"):
            v = getattr(self, name)
            ok[name] = isinstance(v, (int, float, np.floating, np.integer)) and math.isfinite(v)
            if not ok[name]:
                out.append(f"{name} must be a finite real, got {v!r}")
        if ok["a"] and not 0.0 < self.a <= 1.0:
            out.append(f"a must lie in (0, 1], got {self.a}")
        if ok["x"]:
            if self.x < 0.0:
                out.append(f"x must be >= 0, got {self.x}")
            elif ok["a"] and self.a > 0 and self.x > 1.0 / self.a * (1 + 1e-12):
                out.append(f"x exceeds 1/a ({self.x} > {1.0 / self.a})")
        if ok["mu"] and self.mu <= 0.0:
            out.append(f"mu must be > 0, got {self.mu}")
        if ok["rho"] and self.rho <= 0.0:
            out.append(f"rho must be > 0, got {self.rho}")
        out.extend(self.schedule.problems())
        return out

    def to_dict(self):
        return {
            "n": self.n,
            "a": self.a,
            "x": self.x,
            "mu": self.mu,
            "rho": self.rho,
            "schedule": self.schedule.to_dict(),
            "receiver": self.receiver.value,
        }

    @classmethod
    def from_dict(cls, d):
        missing = [k for k in ("n", "a", "x", "mu", "rho", "schedule") if k not in d]
        if missing:
            raise ValidationError([f"missing field {k!r}" for k in missing])
        return cls(
            n=int(d["n"]),
            a=float(d["a"]),
            x=float(d["x"]),
            mu=float(d["mu"]),
            rho=float(d["rho"]),
            schedule=BackoffSchedule.from_dict(d["schedule"]),
            receiver=Receiver(d.get("receiver", "collision")),
        )


def validate(params: NetworkParams) -> NetworkParams:
    """Return ``params`` unchanged if every invariant holds, else raise listing all failures."""
    problems = params.problems()
    if problems:
        raise ValidationError(problems)
    return params


@dataclass(frozen=True)
class SteadyState:
    p: float
    alpha: float
    pi_T: float
    lambda_out: float

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class OptimalDesign:
    lambda_max: float
    psi_star: float
    q0_opt: float
    branch: Branch = Branch.INTERIOR
    q0_saturated: bool = False
    diagnostics: tuple = field(default=())

    def to_dict(self):
        return {
            "lambda_max": self.lambda_max,
            "psi_star": self.psi_star,
            "q0_opt": self.q0_opt,
            "branch": self.branch.value,
            "q0_saturated": self.q0_saturated,
        }


def rate_to_threshold(R):
    """Decoding threshold ``2**R - 1`` for an encoding rate of ``R`` bit/s/Hz."""
    if not (math.isfinite(R) and R > 0):
        raise ValueError(f"rate must be > 0, got {R}")
    return math.expm1(R * math.log(2.0))


def threshold_to_rate(mu):
    return math.log2(1.0 + mu)


def sum_rate(lambda_out, R):
    return lambda_out * R


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


def linear_to_db(lin):
    return 10.0 * math.log10(lin)
