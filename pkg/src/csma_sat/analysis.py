"""Steady-state fixed points, idle probabilities and throughput of a saturated CSMA network.

The fixed points are solved in the transformed variable ``t = -ln(psi)``
where ``psi = exp(mu/rho) * p`` (collision) or
``psi = exp((1 + mu)/rho) * p ** ((1 + mu)/mu)`` (capture). In both cases the
steady state satisfies ``t = n / (alpha/a + S(p))`` and every feasible point
has ``t`` in ``(0, n]``, which gives a sign-changing bracket for free.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from . import numerics
from .model import BackoffSchedule, NetworkParams, Receiver, SteadyState, validate

EPS = 1e-12
_ROOT_CFG = numerics.RootConfig(abs_tol=1e-15, rel_tol=1e-14, max_iter=500)


class InfeasibleError(ValueError):
    """A steady-state quantity was requested outside its feasible region."""


class SolverError(RuntimeError):
    """The fixed-point residual has no root in its bracket."""


@dataclass(frozen=True)
class FixedPointReport:
    p_A: float
    residual: float
    iterations: int
    bracket_used: tuple
    large_K: bool = False


def contention_sum(p, schedule: BackoffSchedule):
    """Mean number of idle mini-slots per HOL packet times ``p``.

    ``S(p) = sum_{i<K} p (1-p)^i / q_i + (1-p)^K / q_K``; vectorised over ``p``.
    """
    p = np.asarray(p, dtype=float)
    q = schedule.q_values()
    K = schedule.cutoff_K
    one_minus = 1.0 - p
    total = np.zeros_like(p)
    power = np.ones_like(p)
    for i in range(K):
        total = total + p * power / q[i]
        power = power * one_minus
    total = total + power / q[K]
    return total if total.ndim else float(total)


def _alpha_collision_denominator(p, a, x, snr_loss):
    # a / alpha
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ln_term = np.where(p > 0, p * (snr_loss + np.log(np.where(p > 0, p, 1.0))), 0.0)
    return (x + 1.0) * a - (1.0 - a * x) * ln_term - a * x * math.exp(snr_loss) * p


def alpha_collision(p, params: NetworkParams):
    """Probability of sensing the channel idle under the collision receiver."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0) or np.any(p_arr > math.exp(-params.snr_loss) * (1 + 1e-12)):
        raise InfeasibleError("alpha_collision needs 0 < p <= exp(-mu/rho)")
    den = _alpha_collision_denominator(p_arr, params.a, params.x, params.snr_loss)
    if np.any(den <= 0):
        raise InfeasibleError("alpha_collision denominator is not positive")
    out = params.a / den
    return out if out.ndim else float(out)


def _log_fail_coefficients(n, mu, rho):
    """log of (1 - exp(-mu/rho) / (1+mu)^(i-1))^i for i = 1..n."""
    i = np.arange(1, n + 1, dtype=float)
    single = np.exp(-mu / rho - (i - 1.0) * math.log1p(mu))
    with np.errstate(divide="ignore"):
        return i * np.log1p(-single)


def _log_binom(n):
    i = np.arange(1, n + 1, dtype=float)
    return gammaln(n + 1.0) - gammaln(i + 1.0) - gammaln(n - i + 1.0)


def all_fail_probability(g, n, mu, rho):
    """``sum_{i=1}^n c_i C(n,i) g^i (1-g)^(n-i)``: probability that some node
    transmits and every concurrent packet fails, with per-node attempt
    probability ``g``. Evaluated in the log domain so large ``n`` stays finite.
    """
    g = np.asarray(g, dtype=float)
    i = np.arange(1, n + 1, dtype=float)
    logc = _log_fail_coefficients(n, mu, rho) + _log_binom(n)
    gg = g[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = logc + xlogy(i, gg) + xlog1py(n - i, -gg)
        out = np.sum(np.exp(logs), axis=-1)
    return out if out.ndim else float(out)


def capture_load(p, params: NetworkParams):
    """``g = (-ln p - mu/rho)(1+mu)/(n mu)``: the per-node attempt probability
    implied by a capture steady state ``p``."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        g = (-np.log(p) - params.snr_loss) * (1.0 + params.mu) / (params.n * params.mu)
    return g if g.ndim else float(g)


def _capture_denominator_from_t(t, params: NetworkParams):
    # a / alpha for the capture receiver, parameterised by t = -ln psi
    t = np.asarray(t, dtype=float)
    psi = np.exp(-t)
    fail = all_fail_probability(t / params.n, params.n, params.mu, params.rho)
    return 1.0 + params.a - psi - (1.0 - params.a * params.x) * fail


def _capture_t(p, params):
    p = np.asarray(p, dtype=float)
    m = params.mu / (1.0 + params.mu)
    with np.errstate(divide="ignore"):
        return (-np.log(p) - params.snr_loss) / m


def alpha_capture(p, params: NetworkParams):
    """Probability of sensing the channel idle under the capture receiver."""
    g = np.asarray(capture_load(p, params), dtype=float)
    tol = 1e-12
    if np.any(~np.isfinite(g)) or np.any(g < -tol) or np.any(g > 1 + tol):
        raise InfeasibleError(
            "alpha_capture needs exp(-mu/rho) exp(-n mu/(1+mu)) <= p <= exp(-mu/rho)"
        )
    t = np.clip(g, 0.0, 1.0) * params.n
    den = _capture_denominator_from_t(t, params)
    if np.any(den <= 0):
        raise InfeasibleError("alpha_capture denominator is not positive")
    out = params.a / den
    return out if out.ndim else float(out)


def capture_success_given_interferers(n_c, mu, rho):
    """Success probability of one packet against ``n_c`` Rayleigh-faded interferers."""
    if n_c < 0:
        raise ValueError("n_c must be >= 0")
    return math.exp(-mu / rho) / (1.0 + mu) ** n_c


def p_from_t(t, params: NetworkParams):
    """Inverse of the ``psi`` transform: success probability for ``t = -ln psi``."""
    t = np.asarray(t, dtype=float)
    if params.receiver is Receiver.COLLISION:
        out = np.exp(-params.snr_loss - t)
    else:
        out = np.exp(-params.snr_loss - params.mu / (1.0 + params.mu) * t)
    return out if out.ndim else float(out)


def t_from_p(p, params: NetworkParams):
    p = np.asarray(p, dtype=float)
    if params.receiver is Receiver.COLLISION:
        with np.errstate(divide="ignore"):
            out = -np.log(p) - params.snr_loss
    else:
        out = _capture_t(p, params)
    return out if out.ndim else float(out)


def _alpha_over_a_from_t(t, params):
    t = np.asarray(t, dtype=float)
    if params.receiver is Receiver.COLLISION:
        p = p_from_t(t, params)
        den = _alpha_collision_denominator(p, params.a, params.x, params.snr_loss)
    else:
        den = _capture_denominator_from_t(t, params)
    # alpha / a = 1 / den; past a pole of the capture form (tiny n, heavy
    # fading) take the limit alpha/a -> +inf so the residual stays monotone
    with np.errstate(divide="ignore"):
        return np.where(den > 0, 1.0 / np.where(den > 0, den, 1.0), np.inf)


def residual_t(t, params: NetworkParams, large_K=False):
    """Fixed-point residual ``n / (alpha/a + S(p)) - t`` in the transformed variable.

    Positive below the steady state, negative above it.
    """
    t = np.asarray(t, dtype=float)
    p = p_from_t(t, params)
    denom = contention_sum(p, params.schedule)
    if not large_K:
        denom = denom + _alpha_over_a_from_t(t, params)
    out = params.n / denom - t
    return out if out.ndim else float(out)


def fixed_point_map(p, params: NetworkParams, large_K=False):
    """Right-hand side of the steady-state equation ``p = F(p)``."""
    t = t_from_p(p, params)
    p = np.asarray(p, dtype=float)
    denom = contention_sum(p, params.schedule)
    if not large_K:
        denom = denom + _alpha_over_a_from_t(t, params)
    exponent = params.n / denom
    if params.receiver is Receiver.CAPTURE:
        exponent = exponent * params.mu / (1.0 + params.mu)
    out = np.exp(-params.snr_loss - exponent)
    return out if out.ndim else float(out)


def residual_p(p, params: NetworkParams, large_K=False):
    """``p - F(p)``; same sign as ``-residual_t``."""
    out = np.asarray(p, dtype=float) - fixed_point_map(p, params, large_K)
    return out if out.ndim else float(out)


def feasible_p_interval(params: NetworkParams):
    """Closed interval of success probabilities a steady state can occupy."""
    upper = math.exp(-params.snr_loss)
    return p_from_t(float(params.n), params), upper


def _solve(params, large_K):
    validate(params)
    calls = [0]

    def f(t):
        calls[0] += 1
        return residual_t(t, params, large_K)

    lo, hi = EPS, float(params.n)
    try:
        bracket = numerics.Bracket.around(f, lo, hi)
    except numerics.NoSignChangeError as exc:
        raise SolverError(f"steady-state residual has no sign change: {exc}") from exc
    t = numerics.find_root(f, bracket, _ROOT_CFG)
    p_A = p_from_t(t, params)
    # p - F(p) evaluated through t, so it stays finite when p underflows
    res = p_A - p_from_t(t + residual_t(t, params, large_K), params)
    return FixedPointReport(
        p_A=p_A,
        residual=float(res),
        iterations=calls[0],
        bracket_used=(p_from_t(hi, params), p_from_t(lo, params)),
        large_K=large_K,
    )


def solve_p(params: NetworkParams) -> FixedPointReport:
    """Steady-state success probability ``p_A`` (idle term included)."""
    return _solve(params, large_K=False)


def large_K_solve_p(params: NetworkParams) -> FixedPointReport:
    """Steady state with the ``alpha/a`` term dropped from the exponent."""
    return _solve(params, large_K=True)


def _check_open_interval(p_A, params):
    upper = math.exp(-params.snr_loss)
    if not (0.0 < p_A <= upper * (1 + 1e-12)):
        raise InfeasibleError(f"p_A={p_A} outside (0, exp(-mu/rho)]")


def collision_throughput_value(p_A, a, x, snr_loss):
    """Closed-form collision throughput for a given steady state (x > 0)."""
    if x <= 0:
        raise InfeasibleError("the collision throughput form needs x > 0")
    p_A = np.asarray(p_A, dtype=float)
    psi = math.exp(snr_loss) * p_A
    with np.errstate(divide="ignore", invalid="ignore"):
        busy = -p_A * (snr_loss + np.log(p_A))
        ratio = (1.0 + 1.0 / x - psi) / busy
        lam = (1.0 / (a * x)) / (ratio + 1.0 / (a * x) - 1.0)
    lam = np.where((busy > 0) & np.isfinite(ratio), lam, 0.0)
    return lam if lam.ndim else float(lam)


def throughput_collision(p_A, params: NetworkParams) -> SteadyState:
    """Network throughput (packets per packet time) under the collision receiver."""
    if params.x <= 0:
        raise InfeasibleError("x = 0 is outside the supported domain (x must be > 0)")
    _check_open_interval(p_A, params)
    lam = collision_throughput_value(p_A, params.a, params.x, params.snr_loss)
    alpha = alpha_collision(p_A, params)
    return SteadyState(p=float(p_A), alpha=float(alpha), pi_T=lam / params.n, lambda_out=lam)


def capture_throughput_value(p_A, params: NetworkParams):
    p_A = np.asarray(p_A, dtype=float)
    mu, rho = params.mu, params.rho
    num = -p_A * ((1.0 + mu) / rho + (1.0 + mu) / mu * np.log(p_A))
    t = _capture_t(p_A, params)
    den = _capture_denominator_from_t(np.clip(t, 0.0, params.n), params)
    out = np.where(num > 0, num / den, 0.0)
    return out if out.ndim else float(out)


def throughput_capture(p_A, params: NetworkParams) -> SteadyState:
    """Network throughput (decoded packets per packet time) under the capture receiver."""
    alpha = alpha_capture(p_A, params)
    lam = float(capture_throughput_value(p_A, params))
    return SteadyState(p=float(p_A), alpha=float(alpha), pi_T=lam / params.n, lambda_out=lam)


def throughput(p_A, params: NetworkParams) -> SteadyState:
    if params.receiver is Receiver.COLLISION:
        return throughput_collision(p_A, params)
    return throughput_capture(p_A, params)


def alpha(p, params: NetworkParams):
    if params.receiver is Receiver.COLLISION:
        return alpha_collision(p, params)
    return alpha_capture(p, params)


def steady_state(params: NetworkParams, large_K=False) -> SteadyState:
    """Solve the fixed point and evaluate the throughput in one call."""
    rep = large_K_solve_p(params) if large_K else solve_p(params)
    return throughput(rep.p_A, params)


def service_rate_throughput(p, alpha_value, params: NetworkParams):
    """``n`` times the fraction of time a HOL packet spends in successful transmission.

    This is the Markov-renewal form built from ``p``, ``alpha`` and the backoff
    schedule directly, without the fixed-point substitution.
    """
    S = contention_sum(p, params.schedule)
    a, x = params.a, params.x
    return params.n / (1.0 + x * a * (1.0 - p) / p + a / (alpha_value * p) * S)


def attempt_probability(p_A, params: NetworkParams):
    """Per-node transmission probability at an idle mini-slot in steady state.

    Equals ``(a / (alpha p)) * pi_T``; with the closed-form throughput this is
    ``-ln(psi) / n``.
    """
    ss = throughput(p_A, params)
    return params.a / (ss.alpha * ss.p) * ss.pi_T
