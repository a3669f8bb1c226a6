"""Mini-slot Monte Carlo simulation of a saturated CSMA network with Rayleigh fading.

Each node's HOL packet waits in a backoff stage, transmits at an idle
mini-slot, and then holds the channel for ``round(1/a)`` mini-slots when at
least one packet of the epoch is decoded, or ``round(x)`` mini-slots when all
of them fail. Idle runs are skipped in one step: every node keeps a count of
idle mini-slots left before its next attempt (uniform over the window in
``WINDOW`` mode, geometric in ``PERSISTENT`` mode, where memorylessness makes
the skip exact).
"""

import csv
import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import NetworkParams, Receiver, ValidationError, validate


class BackoffMode(str, enum.Enum):
    PERSISTENT = "persistent"
    WINDOW = "window"


@dataclass(frozen=True)
class SimConfig:
    params: NetworkParams
    backoff_mode: BackoffMode = BackoffMode.PERSISTENT
    window: Optional[int] = None
    window_K: Optional[int] = None
    total_mini_slots: int = 1_000_000
    warmup_mini_slots: int = 10_000
    seed: int = 0
    replications: int = 1

    def __post_init__(self):
        object.__setattr__(self, "backoff_mode", BackoffMode(self.backoff_mode))

    @property
    def success_slots(self):
        return max(1, int(round(1.0 / self.params.a)))

    @property
    def failure_slots(self):
        return int(round(self.params.x))

    @property
    def cutoff(self):
        if self.backoff_mode is BackoffMode.WINDOW and self.window_K is not None:
            return self.window_K
        return self.params.schedule.cutoff_K

    def effective_params(self):
        """Network parameters with ``a`` and ``x`` snapped to the simulated mini-slot grid."""
        return self.params.replace(a=1.0 / self.success_slots, x=float(self.failure_slots))

    def problems(self):
        out = list(self.params.problems())
        if not (0 <= self.warmup_mini_slots < self.total_mini_slots):
            out.append("need total_mini_slots > warmup_mini_slots >= 0")
        if self.replications < 1:
            out.append("replications must be >= 1")
        if self.backoff_mode is BackoffMode.WINDOW:
            if self.window is None or self.window < 1:
                out.append("window mode needs an initial window W >= 1")
            if self.window_K is not None and self.window_K < 0:
                out.append("window_K must be >= 0")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ValidationError(problems)
        return self

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "backoff_mode": self.backoff_mode.value,
            "window": self.window,
            "window_K": self.window_K,
            "total_mini_slots": self.total_mini_slots,
            "warmup_mini_slots": self.warmup_mini_slots,
            "seed": self.seed,
            "replications": self.replications,
        }

    @classmethod
    def from_dict(cls, d):
        if "params" not in d:
            raise ValidationError(["missing field 'params'"])
        extra = {k: d[k] for k in ("backoff_mode", "window", "window_K", "seed") if d.get(k) is not None}
        for k in ("total_mini_slots", "warmup_mini_slots", "replications"):
            if d.get(k) is not None:
                extra[k] = int(d[k])
        return cls(params=NetworkParams.from_dict(d["params"]), **extra)


@dataclass
class Counters:
    attempts: int = 0
    successes: int = 0
    failures: int = 0
    success_events: int = 0
    failure_events: int = 0
    idle_slots: int = 0
    busy_success_slots: int = 0
    busy_fail_slots: int = 0
    # busy slots inside the window that belong to epochs attempted before it
    head_carry_slots: int = 0
    # busy slots of in-window epochs that fall past the end of the run
    tail_clipped_slots: int = 0

    def __iadd__(self, other):
        for k in self.__dataclass_fields__:
            setattr(self, k, getattr(self, k) + getattr(other, k))
        return self


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float

    def to_dict(self):
        return {"mean": self.mean, "stderr": None if math.isnan(self.stderr) else self.stderr}


@dataclass
class SimReport:
    lambda_hat: Estimate
    p_hat: Estimate
    alpha_hat: Estimate
    counters: Counters
    replications: int
    measured_slots: int
    success_slots: int
    failure_slots: int
    per_replication: list = field(default_factory=list)

    @property
    def attempts(self):
        return self.counters.attempts

    @property
    def successes(self):
        return self.counters.successes

    @property
    def idle_slots(self):
        return self.counters.idle_slots

    @property
    def busy_success_slots(self):
        return self.counters.busy_success_slots

    @property
    def busy_fail_slots(self):
        return self.counters.busy_fail_slots

    def to_dict(self):
        c = self.counters
        return {
            "lambda_hat": self.lambda_hat.to_dict(),
            "p_hat": self.p_hat.to_dict(),
            "alpha_hat": self.alpha_hat.to_dict(),
            "replications": self.replications,
            "measured_slots": self.measured_slots,
            "success_slots": self.success_slots,
            "failure_slots": self.failure_slots,
            "counters": {k: getattr(c, k) for k in c.__dataclass_fields__},
        }


def decode_collision(fading, rho, mu):
    """Collision receiver: only a lone transmitter whose SNR clears ``mu`` is decoded."""
    if len(fading) == 0:
        raise ValueError("need at least one transmitter")
    if len(fading) > 1:
        return [False] * len(fading)
    return [fading[0] >= mu * (1.0 / rho)]


def decode_capture(fading, rho, mu):
    """Capture receiver: each packet is decoded when its SINR clears ``mu``,
    treating every other concurrent packet as noise."""
    if len(fading) == 0:
        raise ValueError("need at least one transmitter")
    total = math.fsum(fading)
    noise = 1.0 / rho
    return [h >= mu * ((total - h) + noise) for h in fading]


def empirical_capture_success(n_c, mu, rho, samples, seed):
    """Monte Carlo success frequency of one packet against ``n_c`` interferers."""
    if samples < 10_000:
        raise ValueError("samples must be >= 10^4")
    rng = np.random.default_rng(seed)
    h = rng.exponential(size=samples)
    interference = rng.exponential(size=(samples, n_c)).sum(axis=1) if n_c else np.zeros(samples)
    return float(np.mean(h >= mu * (interference + 1.0 / rho)))


class _Uniforms:
    """Buffered uniforms on (0, 1] from a PCG64 stream."""

    def __init__(self, seed, stream, block=1 << 16):
        ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=(int(stream),))
        self._rng = np.random.Generator(np.random.PCG64(ss))
        self._block = block
        self._buf = []
        self._i = 0

    def next(self):
        if self._i >= len(self._buf):
            self._buf = (1.0 - self._rng.random(self._block)).tolist()
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return u


def _counter_sampler(config, u):
    """Function mapping a backoff stage to a fresh idle-slot countdown."""
    K = config.cutoff
    if config.backoff_mode is BackoffMode.WINDOW:
        windows = [config.window * 2 ** i for i in range(K + 1)]

        def draw(stage):
            w = windows[stage]
            c = int(u.next() * w)
            # u lies in (0, 1], so c == w only when u == 1
            return c if c < w else w - 1

        return draw

    q = config.params.schedule.q_values().tolist()
    log_fail = [math.log1p(-v) if v < 1.0 else None for v in q]

    def draw(stage):
        lf = log_fail[stage]
        if lf is None:
            return 0
        return int(math.log(u.next()) / lf)

    return draw


def run_replication(config: SimConfig, replication: int, trace=None) -> Counters:
    """Simulate one independent replication and return its raw counters."""
    params = config.params
    n = params.n
    K = config.cutoff
    L_T = config.success_slots
    L_F = config.failure_slots
    total = config.total_mini_slots
    warm = config.warmup_mini_slots
    mu, rho = params.mu, params.rho
    capture = params.receiver is Receiver.CAPTURE

    u = _Uniforms(config.seed, replication)
    draw = _counter_sampler(config, u)
    stage = [0] * n
    counter = [draw(0) for _ in range(n)]
    c = Counters()
    slot = 0
    rng_next = u.next
    log = math.log

    while slot < total:
        cmin = min(counter)
        attempt_slot = slot + cmin
        # idle mini-slots slot .. attempt_slot inclusive
        lo = max(slot, warm)
        hi = min(attempt_slot + 1, total)
        if hi > lo:
            c.idle_slots += hi - lo
        if trace is not None:
            for s in range(slot, min(attempt_slot, total)):
                trace.append((s, "idle", 0, 0))
        if attempt_slot >= total:
            break
        step = cmin + 1
        tx = []
        for j in range(n):
            if counter[j] == cmin:
                tx.append(j)
            else:
                counter[j] -= step
        fading = [-log(rng_next()) for _ in tx]
        if capture:
            ok = decode_capture(fading, rho, mu)
        else:
            ok = decode_collision(fading, rho, mu)
        n_ok = sum(ok)
        busy = L_T if n_ok else L_F
        busy_start = attempt_slot + 1
        busy_end = busy_start + busy
        in_window = attempt_slot >= warm
        b_lo = max(busy_start, warm)
        b_hi = min(busy_end, total)
        counted = max(0, b_hi - b_lo)
        if n_ok:
            c.busy_success_slots += counted
        else:
            c.busy_fail_slots += counted
        if in_window:
            c.attempts += len(tx)
            c.successes += n_ok
            c.failures += len(tx) - n_ok
            if n_ok:
                c.success_events += 1
            else:
                c.failure_events += 1
            c.tail_clipped_slots += busy - counted
        else:
            c.head_carry_slots += counted
        if trace is not None:
            trace.append((attempt_slot, "attempt", len(tx), n_ok))
            trace.append((busy_start, "success" if n_ok else "failure", len(tx), n_ok))
        for j, good in zip(tx, ok):
            if good:
                stage[j] = 0
            elif stage[j] < K:
                stage[j] += 1
            counter[j] = draw(stage[j])
        slot = busy_end
    return c


def _run_one(args):
    config, rep = args
    return run_replication(config, rep)


def _mean_stderr(values):
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        return Estimate(float(arr.mean()), math.nan)
    return Estimate(float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size)))


def summarize(config: SimConfig, per_rep) -> SimReport:
    """Aggregate replication counters into estimates with standard errors."""
    measured = config.total_mini_slots - config.warmup_mini_slots
    L_T = config.success_slots
    lam, p, alp = [], [], []
    total = Counters()
    for c in per_rep:
        total += c
        lam.append(c.successes * L_T / measured)
        p.append(c.successes / c.attempts if c.attempts else math.nan)
        alp.append(c.idle_slots / measured)
    return SimReport(
        lambda_hat=_mean_stderr(lam),
        p_hat=_mean_stderr(p),
        alpha_hat=_mean_stderr(alp),
        counters=total,
        replications=len(per_rep),
        measured_slots=measured,
        success_slots=L_T,
        failure_slots=config.failure_slots,
        per_replication=list(per_rep),
    )


def run(config: SimConfig, workers: int = 1) -> SimReport:
    """Run every replication of ``config`` and aggregate.

    Replications are independent streams keyed by ``(seed, replication)``, so
    the result does not depend on ``workers``.
    """
    config.validate()
    validate(config.params)
    jobs = [(config, r) for r in range(config.replications)]
    if workers > 1 and config.replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_rep = list(pool.map(_run_one, jobs))
    else:
        per_rep = [_run_one(j) for j in jobs]
    return summarize(config, per_rep)


def write_trace(config: SimConfig, path, replication=0):
    """Run one replication with tracing enabled and write the events as CSV."""
    rows = []
    counters = run_replication(config, replication, trace=rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mini_slot", "event", "num_transmitters", "num_decoded"])
        w.writerows(rows)
    return counters
