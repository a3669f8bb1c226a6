"""IEEE 802.11 DCF (basic access) mapped onto the mini-slot CSMA model.

Holding times of the success and failure states are converted to mini-slots,
giving ``a = 1/tau_T`` and ``x = tau_F``. A backoff window ``W_i`` maps to
the transmission probability ``q_i = 2/(1 + W_i)``, and the optimal initial
window follows from the throughput-maximising steady state.
"""

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

import numpy as np

from . import numerics
from .analysis import FixedPointReport, SolverError, throughput
from .model import BackoffSchedule, Branch, NetworkParams, Receiver, ValidationError
from .optimizer import max_throughput, mu0_capture


@dataclass(frozen=True)
class DcfParams:
    payload_bytes: int = 2048
    mac_header_bytes: int = 36
    phy_header_us: float = 20.0
    ack_bytes: int = 14
    slot_time_us: float = 9.0
    sifs_us: float = 16.0
    difs_us: float = 34.0
    basic_rate_bps: float = 6e6
    data_rate_bps: float = 65e6
    initial_window_W: int = 16
    cutoff_K: int = 6

    @classmethod
    def defaults(cls):
        return cls()

    def replace(self, **changes):
        return replace(self, **changes)

    def problems(self):
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                out.append(f"{f.name} must be a finite number, got {v!r}")
            elif f.name == "cutoff_K":
                if v < 0 or int(v) != v:
                    out.append(f"cutoff_K must be an integer >= 0, got {v!r}")
            elif f.name == "initial_window_W":
                if v < 1 or int(v) != v:
                    out.append(f"initial_window_W must be an integer >= 1, got {v!r}")
            elif f.name in ("slot_time_us", "basic_rate_bps", "data_rate_bps", "payload_bytes"):
                if v <= 0:
                    out.append(f"{f.name} must be > 0, got {v!r}")
            elif v < 0:
                out.append(f"{f.name} must be >= 0, got {v!r}")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ValidationError(problems)
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValidationError([f"unknown field {k!r}" for k in unknown])
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class DcfMapping:
    tau_T: float
    tau_F: float
    a: float
    x: float

    def to_dict(self):
        return asdict(self)


def compute_tau(params: DcfParams) -> DcfMapping:
    """Success/failure holding times in mini-slots, and the induced ``a`` and ``x``."""
    params.validate()
    sigma = params.slot_time_us
    payload_us = (params.payload_bytes + params.mac_header_bytes) * 8.0 / params.data_rate_bps * 1e6
    # ACK is sent at the basic rate and carries its own PHY header
    ack_us = params.ack_bytes * 8.0 / params.basic_rate_bps * 1e6 + params.phy_header_us
    tau_T = (payload_us + params.phy_header_us + ack_us + params.difs_us + params.sifs_us) / sigma
    tau_F = (payload_us + params.phy_header_us + params.difs_us) / sigma
    return DcfMapping(tau_T=tau_T, tau_F=tau_F, a=1.0 / tau_T, x=tau_F)


def q_from_window(W_i):
    if not W_i >= 1:
        raise numerics.DomainError(f"backoff window must be >= 1, got {W_i}")
    return 2.0 / (1.0 + W_i)


def window_from_q(q):
    """Inverse of :func:`q_from_window`."""
    if not 0.0 < q <= 1.0:
        raise numerics.DomainError(f"transmission probability must lie in (0, 1], got {q}")
    return 2.0 / q - 1.0


def window_schedule(W, K) -> BackoffSchedule:
    """Schedule with ``q_i = 2/(1 + W 2^i)`` for stages 0..K."""
    if W < 1 or K < 0:
        raise numerics.DomainError(f"need W >= 1 and K >= 0, got W={W}, K={K}")
    q = [q_from_window(W * 2 ** i) for i in range(int(K) + 1)]
    return BackoffSchedule.from_probabilities(q)


def _window_denominator(p, W, K):
    """``1 + sum_{i<K} p (1-p)^i W_i + (1-p)^K W_K``."""
    i = np.arange(K)
    return 1.0 + float(np.sum(p * (1.0 - p) ** i * W * 2.0 ** i)) + (1.0 - p) ** K * W * 2.0 ** K


def _exponent_scale(mu, receiver):
    return 1.0 if Receiver(receiver) is Receiver.COLLISION else mu / (1.0 + mu)


def dcf_fixed_point(n, W, K, mu, rho, receiver=Receiver.COLLISION) -> FixedPointReport:
    """Steady-state success probability of a DCF network with windows ``W 2^i``.

    Solved in ``s = ln p`` so that heavy loads do not underflow.
    """
    if W < 1:
        raise numerics.DomainError(f"W must be >= 1, got {W}")
    K = int(K)
    snr_loss = mu / rho
    scale = 2.0 * n * _exponent_scale(mu, receiver)
    calls = [0]

    def r(s):
        calls[0] += 1
        return s + snr_loss + scale / _window_denominator(math.exp(s), W, K)

    lo, hi = -snr_loss - scale - 1.0, -snr_loss
    try:
        bracket = numerics.Bracket.around(r, lo, hi)
    except numerics.NoSignChangeError as exc:
        raise SolverError(f"window fixed point not bracketed: {exc}") from exc
    s = numerics.find_root(r, bracket, numerics.RootConfig(abs_tol=1e-15, rel_tol=1e-15, max_iter=500))
    p = math.exp(s)
    resid = p - math.exp(-snr_loss - scale / _window_denominator(p, W, K))
    return FixedPointReport(
        p_A=p, residual=float(resid), iterations=calls[0], bracket_used=(math.exp(lo), math.exp(hi)), large_K=True
    )


def dcf_network(n, W, K, mu, rho, a, x, receiver=Receiver.COLLISION) -> NetworkParams:
    return NetworkParams(n=n, a=a, x=x, mu=mu, rho=rho, schedule=window_schedule(W, K), receiver=Receiver(receiver))


def window_throughput(n, W, K, mu, rho, a, x, receiver=Receiver.COLLISION):
    """Network throughput with windows ``W 2^i`` (window fixed point, then the closed form)."""
    fp = dcf_fixed_point(n, W, K, mu, rho, receiver)
    return throughput(fp.p_A, dcf_network(n, W, K, mu, rho, a, x, receiver)).lambda_out


@dataclass(frozen=True)
class WindowDesign:
    W_real: float
    W_opt: int
    psi_star: float
    lambda_max: float
    branch: Branch = Branch.INTERIOR
    mu0: Optional[float] = None

    def to_dict(self):
        d = asdict(self)
        d["branch"] = self.branch.value
        return d


def window_gain(P, K):
    """``sum_{i<K} P (1-P)^i 2^i + (2(1-P))^K`` for attempt success ``P``.

    Equal to ``[(1-P)(2(1-P))^K - P] / (1 - 2P)``; the sum form has no
    singularity at ``P = 1/2``, where the closed form is 0/0.
    """
    i = np.arange(K)
    return float(np.sum(P * (2.0 * (1.0 - P)) ** i)) + (2.0 * (1.0 - P)) ** K


def window_for_psi(psi, P, n, K):
    """Initial window placing the window fixed point at ``psi``."""
    return (-2.0 * n / math.log(psi) - 1.0) / window_gain(P, K)


def _nearest_window(W_real):
    return max(1, int(math.floor(W_real + 0.5)))


def _params_for(n, K, mu, rho, a, x, receiver):
    # schedule only carries K here; optimisation ignores q0
    return NetworkParams(n=n, a=a, x=x, mu=mu, rho=rho, schedule=BackoffSchedule.binary_exponential(1.0, K), receiver=receiver)


def optimal_window_collision(n, K, mu, rho, a, x) -> WindowDesign:
    params = _params_for(n, K, mu, rho, a, x, Receiver.COLLISION)
    design = max_throughput(params)
    psi = design.psi_star
    P = math.exp(-mu / rho) * psi
    W_real = window_for_psi(psi, P, n, K)
    return WindowDesign(W_real=W_real, W_opt=_nearest_window(W_real), psi_star=psi, lambda_max=design.lambda_max)


def optimal_window_capture(n, K, mu, rho, a, x) -> WindowDesign:
    params = _params_for(n, K, mu, rho, a, x, Receiver.CAPTURE)
    design = max_throughput(params)
    try:
        mu0 = mu0_capture(params)
    except numerics.NoSignChangeError:
        mu0 = None
    if design.branch is Branch.SATURATED_Q1:
        return WindowDesign(
            W_real=1.0, W_opt=1, psi_star=design.psi_star, lambda_max=design.lambda_max, branch=design.branch, mu0=mu0
        )
    psi = design.psi_star
    P = math.exp(-mu / rho) * psi ** (mu / (1.0 + mu))
    W_real = window_for_psi(psi, P, n, K)
    return WindowDesign(
        W_real=W_real, W_opt=_nearest_window(W_real), psi_star=psi, lambda_max=design.lambda_max, mu0=mu0
    )


def optimal_window(n, K, mu, rho, a, x, receiver=Receiver.COLLISION) -> WindowDesign:
    if Receiver(receiver) is Receiver.COLLISION:
        return optimal_window_collision(n, K, mu, rho, a, x)
    return optimal_window_capture(n, K, mu, rho, a, x)
