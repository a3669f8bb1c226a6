"""Maximum network throughput and the backoff parameters that achieve it.

Both receivers are optimised through the transformed steady-state variable
``psi`` in ``[exp(-n), 1)``. The collision optimum has a closed form through
the principal Lambert W branch; the capture optimum is the root of the
derivative numerator ``f(psi)``, unless the threshold ``mu`` is below
``mu0``, in which case throughput is maximised at the boundary ``psi =
exp(-n)`` by letting every node transmit with probability one.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlog1py, xlogy

from . import numerics
from .analysis import InfeasibleError, _log_binom, _log_fail_coefficients, all_fail_probability, contention_sum
from .model import Branch, NetworkParams, OptimalDesign, Receiver, validate


class BranchError(ValueError):
    """Requested the interior optimum of a capture network whose optimum is q = 1."""


@dataclass(frozen=True)
class CaptureBranchInfo:
    mu0: float
    branch: Branch
    f_at_exp_minus_n: float


_CFG = numerics.RootConfig(abs_tol=1e-15, rel_tol=1e-14, max_iter=500)


# -- collision ---------------------------------------------------------------


def psi_star_collision(x):
    """Throughput-maximising ``psi`` for the collision receiver."""
    if not x > 0:
        raise numerics.DomainError(f"x must be > 0, got {x}")
    c = 1.0 + 1.0 / x
    return -c * numerics.lambert_w0(-1.0 / (math.e * c))


def collision_objective(psi, params: NetworkParams):
    """Collision throughput written as a function of ``psi = exp(mu/rho) p``."""
    psi = np.asarray(psi, dtype=float)
    a, x = params.a, params.x
    with np.errstate(divide="ignore", invalid="ignore"):
        h = (1.0 + 1.0 / x - psi) / (-psi * np.log(psi))
        lam = (1.0 / (a * x)) / (math.exp(params.snr_loss) * h + 1.0 / (a * x) - 1.0)
    lam = np.where(np.isfinite(h) & (psi < 1.0), lam, 0.0)
    return lam if lam.ndim else float(lam)


def q0_for_psi(psi, attempt_success, params: NetworkParams):
    """Initial transmission probability that places the large-K steady state at ``psi``.

    ``attempt_success`` is the matching per-attempt success probability.
    """
    shape = params.schedule.with_q0(1.0)
    return -math.log(psi) / params.n * contention_sum(attempt_success, shape)


def optimal_q0_collision(params: NetworkParams):
    """Optimal initial transmission probability, capped at 1."""
    q0, _ = _optimal_q0_collision(params)
    return q0


def _optimal_q0_collision(params):
    psi = psi_star_collision(params.x)
    raw = q0_for_psi(psi, math.exp(-params.snr_loss) * psi, params)
    return min(raw, 1.0), raw > 1.0


def max_throughput_collision(params: NetworkParams) -> OptimalDesign:
    validate(params)
    if not params.x > 0:
        raise InfeasibleError("the collision optimum needs x > 0")
    c = 1.0 + 1.0 / params.x
    w = numerics.lambert_w0(-1.0 / (math.e * c))
    psi = -c * w
    if psi < math.exp(-params.n):
        raise InfeasibleError(
            f"optimal psi={psi:.6g} lies below exp(-n)={math.exp(-params.n):.3g}; "
            "the optimum is not reachable with q_i <= 1"
        )
    ax = params.a * params.x
    lam = -w / (math.exp(params.snr_loss) * ax - (1.0 - ax) * w)
    q0, saturated = _optimal_q0_collision(params)
    return OptimalDesign(lambda_max=lam, psi_star=psi, q0_opt=q0, branch=Branch.INTERIOR, q0_saturated=saturated)


# -- capture -----------------------------------------------------------------


def _capture_f_t(t, n, a, x, mu, rho):
    """``f`` at ``psi = exp(-t)`` (vectorised over ``t``)."""
    t = np.asarray(t, dtype=float)
    m = mu / (1.0 + mu)
    L = -t
    psi = np.exp(L)
    g = np.clip(t / n, 0.0, 1.0)
    lead = (m * L + 1.0) * (1.0 + a - psi) + psi * L

    i = np.arange(1, n + 1, dtype=float)
    logc = _log_fail_coefficients(n, mu, rho) + _log_binom(n)
    gg = g[..., None]
    LL = L[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        # i < n: (1-g)^(n-i-1) times the bracket; i = n: the bracket over (1-g) reduces to m L + 1 - n
        expo = np.where(i < n, n - i - 1.0, 0.0)
        logs = logc + xlogy(i, gg) + xlog1py(expo, -gg)
        bracket = np.where(i < n, (m * LL + 1.0) * (1.0 - gg) - i - LL, m * LL + 1.0 - n)
        terms = np.where(np.isneginf(logs), 0.0, np.exp(logs) * bracket)
    out = lead - (1.0 - a * x) * terms.sum(axis=-1)
    return out if out.ndim else float(out)


def capture_f(psi, params: NetworkParams):
    """Numerator of the capture throughput derivative in ``psi`` (up to a negative factor).

    Positive where throughput decreases in ``psi``; its root in
    ``[exp(-n), 1)`` is the interior optimum.
    """
    psi = np.asarray(psi, dtype=float)
    t = -np.log(psi)
    return _capture_f_t(t, params.n, params.a, params.x, params.mu, params.rho)


def capture_objective(psi, params: NetworkParams):
    """Capture throughput as a function of ``psi = exp((1+mu)/rho) p^((1+mu)/mu)``."""
    psi = np.asarray(psi, dtype=float)
    t = -np.log(psi)
    return _capture_objective_t(t, params)


def capture_denominator(t, params: NetworkParams):
    """``a / alpha`` of the capture receiver at ``t = -ln psi``; must stay positive."""
    t = np.asarray(t, dtype=float)
    out = 1.0 + params.a - np.exp(-t) - (1.0 - params.a * params.x) * all_fail_probability(
        np.clip(t / params.n, 0.0, 1.0), params.n, params.mu, params.rho
    )
    return out if out.ndim else float(out)


def _capture_objective_t(t, params):
    t = np.asarray(t, dtype=float)
    m = params.mu / (1.0 + params.mu)
    num = math.exp(-params.snr_loss) * np.exp(-m * t) * t
    out = num / capture_denominator(t, params)
    return out if out.ndim else float(out)


def _f_at_exp_minus_n(params, mu=None):
    mu = params.mu if mu is None else mu
    return _capture_f_t(float(params.n), params.n, params.a, params.x, mu, params.rho)


def mu0_capture(params: NetworkParams):
    """Threshold ``mu0`` at which ``f(exp(-n))`` changes sign, found over mu in [1e-6, 10]."""
    validate(params)

    def g(mu):
        return _f_at_exp_minus_n(params, mu)

    try:
        bracket = numerics.Bracket.around(g, 1e-6, 10.0)
    except numerics.NoSignChangeError as exc:
        raise numerics.NoSignChangeError(f"mu0 is not bracketed by [1e-6, 10]: {exc}") from exc
    return numerics.find_root(g, bracket, _CFG)


def mu0_closed_form_rhs(mu, params: NetworkParams):
    """Right-hand side of the implicit closed form ``mu0 = rhs(mu0)``, evaluated at ``mu``."""
    n, a, x, rho = params.n, params.a, params.x, params.rho
    B = 1.0 + a - math.exp(-n)
    s = math.exp(-mu / rho)
    c_n = (1.0 - s / (1.0 + mu) ** (n - 1)) ** n
    c_n1 = (1.0 - s / (1.0 + mu) ** (n - 2)) ** (n - 1)
    den = (1.0 - 1.0 / n) * B + math.exp(-n) - (1.0 - a * x) * (c_n - c_n1)
    return B / den - 1.0


def mu0_large_n(n):
    return 1.0 / (n - 1.0)


def capture_branch_info(params: NetworkParams) -> CaptureBranchInfo:
    mu0 = mu0_capture(params)
    branch = Branch.INTERIOR if params.mu >= mu0 else Branch.SATURATED_Q1
    return CaptureBranchInfo(mu0=mu0, branch=branch, f_at_exp_minus_n=_f_at_exp_minus_n(params))


def _psi_star_capture(params):
    """Throughput-maximising ``psi`` plus diagnostics; ``None`` when the boundary ``exp(-n)`` wins.

    Every local maximum (``f`` crossing from + to - as ``t = -ln psi`` grows)
    is refined and compared with the boundary, which is a candidate whenever
    ``f(exp(-n)) >= 0``. Usually there is exactly one candidate.
    """
    n = params.n
    args = (n, params.a, params.x, params.mu, params.rho)

    def f(t):
        return _capture_f_t(t, *args)

    ts = np.concatenate([np.geomspace(1e-9, 1e-3, 200, endpoint=False), np.linspace(1e-3, n, 4000)])
    den = capture_denominator(ts, params)
    if np.any(den <= 0):
        # alpha leaves (0, 1]: the objective has a pole and lambda_max is undefined
        bad = ts[den <= 0]
        raise InfeasibleError(
            f"capture idle-probability denominator is not positive for psi in "
            f"[{math.exp(-bad[-1]):.6g}, {math.exp(-bad[0]):.6g}]; lambda_max is undefined"
        )
    vals = f(ts)
    flips = np.nonzero(np.sign(vals[1:]) * np.sign(vals[:-1]) < 0)[0]
    peaks = [k for k in flips if vals[k] > 0]

    candidates = []
    for k in peaks:
        t_k = numerics.find_root(f, numerics.Bracket.around(f, ts[k], ts[k + 1]), _CFG)
        candidates.append((float(_capture_objective_t(t_k, params)), t_k))
    if vals[-1] >= 0:
        candidates.append((lower_branch_max_capture(params), None))
    if not candidates:
        # f < 0 on the whole grid: throughput still rising at psi -> 1, which the model never produces
        raise numerics.NoSignChangeError("capture derivative numerator has no admissible maximum")

    diagnostics = ()
    if len(flips) > 1:
        diagnostics = (
            f"f has {len(flips)} sign changes on [exp(-n), 1); "
            f"compared {len(candidates)} local maxima and kept the largest throughput",
        )
    best = max(candidates, key=lambda c: c[0])
    t_star = best[1]
    return (None if t_star is None else math.exp(-t_star)), diagnostics


def lower_branch_max_capture(params: NetworkParams):
    """Capture throughput at ``psi = exp(-n)`` (every node transmits with probability one)."""
    n, mu, rho, a, x = params.n, params.mu, params.rho, params.a, params.x
    num = n * math.exp(-mu / rho) * math.exp(-n * mu / (1.0 + mu))
    den = 1.0 + a - math.exp(-n) - (1.0 - a * x) * (1.0 - math.exp(-mu / rho) / (1.0 + mu) ** (n - 1)) ** n
    return num / den


def max_throughput_capture(params: NetworkParams) -> OptimalDesign:
    validate(params)
    psi, diagnostics = _psi_star_capture(params)
    if psi is None:
        return OptimalDesign(
            lambda_max=lower_branch_max_capture(params),
            psi_star=math.exp(-params.n),
            q0_opt=1.0,
            branch=Branch.SATURATED_Q1,
        )
    lam = float(capture_objective(psi, params))
    q0, saturated = _q0_capture_from_psi(psi, params)
    return OptimalDesign(
        lambda_max=lam,
        psi_star=psi,
        q0_opt=q0,
        branch=Branch.INTERIOR,
        q0_saturated=saturated,
        diagnostics=diagnostics,
    )


def _q0_capture_from_psi(psi, params):
    m = params.mu / (1.0 + params.mu)
    raw = q0_for_psi(psi, math.exp(-params.snr_loss) * psi ** m, params)
    return min(raw, 1.0), raw > 1.0


def psi_star_capture(params: NetworkParams):
    psi, _ = _psi_star_capture(params)
    return math.exp(-params.n) if psi is None else psi


def optimal_q0_capture(params: NetworkParams):
    """Optimal initial transmission probability for the interior capture branch."""
    psi, _ = _psi_star_capture(params)
    if psi is None:
        raise BranchError("mu < mu0: the capture optimum is q_i = 1 for every stage")
    q0, _ = _q0_capture_from_psi(psi, params)
    return q0


def approx_max_throughput_capture_low_mu(params: NetworkParams):
    """Large-n approximation of the ``mu <= mu0`` capture maximum (independent of x)."""
    n, mu = params.n, params.mu
    return n / (1.0 + params.a) * math.exp(-params.snr_loss) * math.exp(-n * mu / (1.0 + mu))


def max_throughput(params: NetworkParams) -> OptimalDesign:
    if params.receiver is Receiver.COLLISION:
        return max_throughput_collision(params)
    return max_throughput_capture(params)
