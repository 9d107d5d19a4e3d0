"""Online prefetch controller: logistic profitability score + epsilon-greedy
bandit over (threshold, window) arms, with a shadow mode that only logs."""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np

THRESHOLDS = (0.3, 0.4, 0.5, 0.6, 0.7)
WINDOWS = (4, 8, 12)
THREAD_BUCKETS = 8
FEATURE_DIM = 9 + THREAD_BUCKETS
OUTCOME_HISTORY = 64
SHORT_LOOP_FETCHES = 32

# tie order: lowest threshold first, then window 8, then 4, then 12
ARMS: Tuple[Tuple[float, int], ...] = tuple(
    sorted(((t, w) for t in THRESHOLDS for w in WINDOWS), key=lambda a: (a[0], a[1] != 8, a[1]))
)

HIT, USELESS, POLLUTING = "hit", "useless", "polluting"


def pc_delta_summary(delta: int) -> List[float]:
    mag = abs(delta) & ((1 << 20) - 1)
    sign = (delta > 0) - (delta < 0)
    return [
        float(sign),
        bin(mag).count("1") / 20.0,
        (mag & 0xFF) / 255.0,
        min(math.log2(mag + 1) / 20.0, 1.0),
    ]


def make_features(
    delta: int,
    window_density: float,
    hit_rate: float,
    pollution_rate: float,
    short_loop: bool,
    thread_tag: int,
) -> np.ndarray:
    x = np.zeros(FEATURE_DIM)
    x[0:4] = pc_delta_summary(delta)
    x[4] = window_density
    x[5] = hit_rate
    x[6] = pollution_rate
    x[7] = 1.0 if short_loop else 0.0
    x[8 + (thread_tag % THREAD_BUCKETS)] = 1.0
    x[-1] = 1.0
    return x


def score(features: np.ndarray, weights: np.ndarray) -> float:
    z = float(np.dot(features, weights))
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def logistic_loss(weights: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    z = X @ weights
    # log(1 + e^z) - y z, written stably
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def logistic_gradient(weights: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    z = X @ weights
    p = 0.5 * (1.0 + np.tanh(0.5 * z))
    return (p - y) @ X / len(y)


def update_weights(weights: np.ndarray, batch: Sequence[Tuple[np.ndarray, float]], lr: float) -> np.ndarray:
    """One gradient step of mean logistic loss over ``batch``."""
    if not batch:
        return weights
    X = np.array([b[0] for b in batch])
    y = np.array([b[1] for b in batch], dtype=float)
    return weights - lr * logistic_gradient(weights, X, y)


def reward(hits: int, useless: int, polluting: int, lambda_useless: float = 0.5, lambda_evict: float = 1.0) -> float:
    return hits - lambda_useless * useless - lambda_evict * polluting


class EpsilonGreedy:
    """Running-mean epsilon-greedy over ``n`` arms; ties go to the lowest index."""

    def __init__(self, n: int, epsilon: float, rng: np.random.Generator):
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        self.epsilon = epsilon
        self.rng = rng
        self.means = np.zeros(n)
        self.counts = np.zeros(n, dtype=np.int64)

    def select(self) -> int:
        if self.epsilon and self.rng.random() < self.epsilon:
            return int(self.rng.integers(0, len(self.means)))
        return int(np.argmax(self.means))

    def update(self, arm: int, r: float) -> None:
        self.counts[arm] += 1
        self.means[arm] += (r - self.means[arm]) / self.counts[arm]


@dataclass
class ControllerConfig:
    lr: float = 0.01
    epsilon: float = 0.05
    period: int = 100_000
    horizon: int = 10_000
    shadow: bool = False
    lambda_useless: float = 0.5
    lambda_evict: float = 1.0
    seed: int = 0


@dataclass
class Decision:
    issue_time: int
    source: int
    arm: int
    predicted_p: float
    features: np.ndarray
    issue: bool
    targets: List[int] = field(default_factory=list)
    outstanding: int = 0
    hits: int = 0
    useless: int = 0
    polluting: int = 0

    @property
    def threshold(self) -> float:
        return ARMS[self.arm][0]

    @property
    def window(self) -> int:
        return ARMS[self.arm][1]


CALIBRATION_COLUMNS = ("cycle", "source_line", "predicted_p", "chosen_arm", "hypothetical_targets", "hypothetical_bandwidth")


class Controller:
    def __init__(self, config: ControllerConfig = ControllerConfig()):
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.weights = np.zeros(FEATURE_DIM)
        self.bandit = EpsilonGreedy(len(ARMS), config.epsilon, self.rng)
        self.batch: List[Tuple[np.ndarray, float]] = []
        self.next_update = config.period
        self.recent: Dict[int, Deque[str]] = {}
        self.calibration: List[tuple] = []
        self.rewards: List[Tuple[int, float]] = []
        self.issued = self.hits = self.useless = self.polluting = 0
        self.periods = 0

    @property
    def shadow(self) -> bool:
        return self.config.shadow

    def select_arm(self) -> int:
        return self.bandit.select()

    def source_rates(self, source: int) -> Tuple[float, float]:
        hist = self.recent.get(source)
        if not hist:
            return 0.0, 0.0
        n = len(hist)
        return sum(o == HIT for o in hist) / n, sum(o == POLLUTING for o in hist) / n

    def decide(self, features: np.ndarray, now: int, source: int) -> Decision:
        arm = self.select_arm()
        p = score(features, self.weights)
        issue = p >= ARMS[arm][0] and not self.shadow
        return Decision(now, source, arm, p, features, issue)

    def log_shadow(self, d: Decision, targets: Sequence[int], bandwidth: int) -> None:
        t, w = ARMS[d.arm]
        self.calibration.append(
            (d.issue_time, d.source, d.predicted_p, f"{t}:{w}", " ".join(f"{x:#x}" for x in targets), bandwidth)
        )

    def register(self, d: Decision, issued: int) -> None:
        d.outstanding = issued
        self.issued += issued

    def on_outcome(self, d: Decision, outcome: str) -> None:
        if outcome == HIT:
            d.hits += 1
            self.hits += 1
        elif outcome == USELESS:
            d.useless += 1
            self.useless += 1
        else:
            d.polluting += 1
            self.polluting += 1
        hist = self.recent.get(d.source)
        if hist is None:
            hist = self.recent[d.source] = deque(maxlen=OUTCOME_HISTORY)
        hist.append(outcome)
        d.outstanding -= 1
        if d.outstanding == 0:
            self._mature(d)

    def _mature(self, d: Decision) -> None:
        c = self.config
        r = reward(d.hits, d.useless, d.polluting, c.lambda_useless, c.lambda_evict)
        self.bandit.update(d.arm, r)
        self.batch.append((d.features, 1.0 if r > 0 else 0.0))
        self.rewards.append((d.arm, r))

    @property
    def in_flight(self) -> int:
        return self.issued - self.hits - self.useless - self.polluting

    def tick(self, now: int) -> None:
        while now >= self.next_update:
            self.weights = update_weights(self.weights, self.batch, self.config.lr)
            self.batch = []
            self.next_update += self.config.period
            self.periods += 1

    def calibration_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CALIBRATION_COLUMNS)
        for row in self.calibration:
            cyc, src, p, arm, tg, bw = row
            w.writerow((cyc, f"{src:#x}", repr(p), arm, tg, bw))
        return buf.getvalue()
