"""Empirical game-theoretic analysis of trained policies.

Trained policies are split into cooperator and defector pools by
thresholding a social-behavior metric (beam-use rate for Gathering,
lone-wolf rate for Wolfpack; larger always means more defecting).
Pool-vs-pool playouts then estimate the four outcomes of the induced
2x2 matrix game:

* R -- both players drawn from the cooperator pool
* P -- both from the defector pool
* S -- the cooperator's payoff in a mixed pairing
* T -- the defector's payoff in a mixed pairing

and the matrix is checked against the social-dilemma inequalities
(R > P, R > S, 2R > T + S, and greed T > R or fear P > S) and placed in
a quadrant of the (fear, greed) plane: both positive is Prisoner's
Dilemma, greed alone is Chicken, fear alone is Stag Hunt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .harness import run_episode
from .learner import EvalPolicy, load_policy
from .engine import derive_rng


class InvalidThresholds(ValueError):
    pass


class EmptyPool(ValueError):
    pass


class PoolLabel(Enum):
    COOPERATOR = "C"
    DEFECTOR = "D"
    NEITHER = "neither"


def classify_policy(metric: float, alpha_c: float, alpha_d: float) -> PoolLabel:
    """Threshold a defection-oriented metric into C / D / neither.

    Values strictly below ``alpha_c`` are cooperators, strictly above
    ``alpha_d`` defectors; the band between is excluded from both pools.
    """
    if alpha_c > alpha_d:
        raise InvalidThresholds(f"alpha_c ({alpha_c}) must not exceed alpha_d ({alpha_d})")
    if metric < alpha_c:
        return PoolLabel.COOPERATOR
    if metric > alpha_d:
        return PoolLabel.DEFECTOR
    return PoolLabel.NEITHER


def percentile_thresholds(metrics, lo: float = 25.0, hi: float = 75.0) -> tuple[float, float]:
    """Default (alpha_c, alpha_d): percentiles of the metric population."""
    values = np.asarray(list(metrics), dtype=float)
    if values.size == 0:
        raise ValueError("no metric values")
    return float(np.percentile(values, lo)), float(np.percentile(values, hi))


@dataclass(frozen=True)
class CellStat:
    """Mean payoff of one matrix cell with its sampling statistics."""

    mean: float
    se: float
    n: int

    @classmethod
    def from_samples(cls, samples) -> "CellStat":
        arr = np.asarray(samples, dtype=float)
        if arr.size == 0:
            return cls(math.nan, math.inf, 0)
        if arr.size == 1:
            return cls(float(arr[0]), math.inf, 1)
        return cls(float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size)), int(arr.size))


@dataclass(frozen=True)
class EmpiricalPayoffMatrix:
    R: CellStat
    P: CellStat
    S: CellStat
    T: CellStat
    budget_exhausted: bool = False

    @property
    def fear(self) -> float:
        return self.P.mean - self.S.mean

    @property
    def greed(self) -> float:
        return self.T.mean - self.R.mean

    @classmethod
    def from_values(cls, r: float, p: float, s: float, t: float) -> "EmpiricalPayoffMatrix":
        exact = lambda v: CellStat(float(v), 0.0, 1)
        return cls(R=exact(r), P=exact(p), S=exact(s), T=exact(t))


CONDITION_NAMES = ("R>P", "R>S", "2R>T+S", "greed-or-fear")


@dataclass(frozen=True)
class InequalityReport:
    """Verdicts for the four social-dilemma inequalities plus which of
    the two defection motives (greed, fear) holds."""

    reward_beats_punishment: bool    # R > P
    reward_beats_sucker: bool        # R > S
    no_alternation_gain: bool        # 2R > T + S
    greed_or_fear: bool
    greed: bool                      # T > R
    fear: bool                       # P > S

    @property
    def verdicts(self) -> tuple[bool, bool, bool, bool]:
        return (
            self.reward_beats_punishment,
            self.reward_beats_sucker,
            self.no_alternation_gain,
            self.greed_or_fear,
        )

    @property
    def all_hold(self) -> bool:
        return all(self.verdicts)

    @property
    def failed(self) -> tuple[str, ...]:
        return tuple(name for name, ok in zip(CONDITION_NAMES, self.verdicts) if not ok)


def check_ssd_inequalities(m: EmpiricalPayoffMatrix) -> InequalityReport:
    r, p, s, t = m.R.mean, m.P.mean, m.S.mean, m.T.mean
    greed = t > r
    fear = p > s
    return InequalityReport(
        reward_beats_punishment=r > p,
        reward_beats_sucker=r > s,
        no_alternation_gain=2 * r > t + s,
        greed_or_fear=greed or fear,
        greed=greed,
        fear=fear,
    )


class DilemmaType(Enum):
    PRISONERS_DILEMMA = "PrisonersDilemma"
    CHICKEN = "Chicken"
    STAG_HUNT = "StagHunt"
    NOT_SOCIAL_DILEMMA = "NotSocialDilemma"


@dataclass(frozen=True)
class Classification:
    kind: DilemmaType
    failed: tuple[str, ...] = ()

    def __str__(self) -> str:
        return self.kind.value


def classify_matrix(m: EmpiricalPayoffMatrix) -> Classification:
    """Place a payoff matrix in the dilemma taxonomy.

    Any failed inequality yields NotSocialDilemma with the failure list.
    Otherwise the signs of greed and fear decide: both strictly positive
    is Prisoner's Dilemma, greed alone Chicken, fear alone Stag Hunt (a
    zero motive falls to the quadrant of the strictly positive one).
    """
    report = check_ssd_inequalities(m)
    if not report.all_hold:
        return Classification(DilemmaType.NOT_SOCIAL_DILEMMA, report.failed)
    if report.greed and report.fear:
        return Classification(DilemmaType.PRISONERS_DILEMMA)
    if report.greed:
        return Classification(DilemmaType.CHICKEN)
    return Classification(DilemmaType.STAG_HUNT)


def estimate_payoffs(
    pool_c,
    pool_d,
    env_factory,
    *,
    rng: np.random.Generator,
    eval_epsilon: float = 0.05,
    se_tol: float | None = None,
    max_episodes_per_cell: int = 1000,
) -> EmpiricalPayoffMatrix:
    """Estimate (R, P, S, T) by repeated pool-vs-pool playouts.

    Each round plays one eval episode per cell pairing -- (C,C), (C,D),
    (D,C), (D,D) -- with both policies freshly sampled from their pools,
    and accumulates undiscounted per-agent returns: both players' into R
    and P, the cooperator's into S and the defector's into T (both mixed
    orderings pool together).  Rounds continue until every cell's
    standard error of the mean falls below the tolerance (default: 1% of
    the largest cell magnitude; an exactly zero SE always counts as
    converged), or until ``max_episodes_per_cell`` rounds, which flags
    the result as budget-exhausted.

    ``env_factory`` must map an episode index to a fresh env; indices
    are assigned deterministically, so the whole estimate is a pure
    function of the pools, the factory, and ``rng``.
    """
    if not pool_c or not pool_d:
        raise EmptyPool("both pools must be nonempty")

    pools = {"C": list(pool_c), "D": list(pool_d)}
    pairings = (("C", "C"), ("C", "D"), ("D", "C"), ("D", "D"))
    samples: dict[str, list[float]] = {"R": [], "P": [], "S": [], "T": []}

    def pick(label):
        pool = pools[label]
        return pool[int(rng.integers(len(pool)))]

    episode_index = 0
    rounds = 0
    budget_exhausted = False
    while True:
        for row, col in pairings:
            env = env_factory(episode_index)
            episode_index += 1
            log = run_episode(env, [pick(row), pick(col)], "eval", eval_epsilon=eval_epsilon)
            u = (log.undiscounted_return(0), log.undiscounted_return(1))
            if (row, col) == ("C", "C"):
                samples["R"].extend(u)
            elif (row, col) == ("D", "D"):
                samples["P"].extend(u)
            elif (row, col) == ("C", "D"):
                samples["S"].append(u[0])
                samples["T"].append(u[1])
            else:
                samples["T"].append(u[0])
                samples["S"].append(u[1])
        rounds += 1

        stats = {k: CellStat.from_samples(v) for k, v in samples.items()}
        if se_tol is not None and math.isinf(se_tol):
            break
        tol = se_tol
        if tol is None:
            largest = max(abs(c.mean) for c in stats.values())
            tol = 0.01 * largest
        if all(c.se == 0.0 or c.se < tol for c in stats.values()):
            break
        if rounds >= max_episodes_per_cell:
            budget_exhausted = True
            break

    return EmpiricalPayoffMatrix(
        R=stats["R"], P=stats["P"], S=stats["S"], T=stats["T"],
        budget_exhausted=budget_exhausted,
    )


def load_pool_manifest(path, *, eval_seed: int = 0):
    """Read a policy-pool manifest into (cooperators, defectors).

    Each non-comment line is ``<C|D> <metric> <checkpoint path>``
    (whitespace-separated; paths relative to the manifest's directory).
    The metric value is informational here; the labels decide the pools.
    """
    import os

    pool_c, pool_d = [], []
    base = os.path.dirname(os.path.abspath(path))
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3 or parts[0] not in ("C", "D"):
                raise ValueError(f"{path}:{lineno}: expected '<C|D> <metric> <path>'")
            label, _metric, ckpt = parts
            if not os.path.isabs(ckpt):
                ckpt = os.path.join(base, ckpt)
            net, _step = load_policy(ckpt)
            index = len(pool_c) + len(pool_d)
            policy = EvalPolicy(net, rng=derive_rng(eval_seed, "pool-policy", index))
            (pool_c if label == "C" else pool_d).append(policy)
    return pool_c, pool_d


def write_payoff_report(m: EmpiricalPayoffMatrix, path) -> None:
    """Payoff report CSV: one row per cell, then a summary line."""
    import os

    report = check_ssd_inequalities(m)
    classification = classify_matrix(m)
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("cell,mean,se,n\n")
        for name in ("R", "P", "S", "T"):
            cell: CellStat = getattr(m, name)
            fh.write(f"{name},{cell.mean!r},{cell.se!r},{cell.n}\n")
        verdicts = " ".join(
            f"{name}={'pass' if ok else 'fail'}"
            for name, ok in zip(CONDITION_NAMES, report.verdicts)
        )
        fh.write(
            f"# fear={m.fear!r} greed={m.greed!r} class={classification.kind.value} "
            f"{verdicts} budget_exhausted={m.budget_exhausted}\n"
        )
