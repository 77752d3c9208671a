"""Rank-based and score-based evaluation statistics.

Rank-based: a position-discounted count of top-10% arms (dcg10) and the
Monte Carlo probability of beating a same-budget random draw. Score-based:
the analytic expected best score of random search, the sandwiched
normalization between random and full grid search, and the improvement
degree aggregate. The overall score combines both families.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence

import numpy as np

RANK_STATISTICS = ("dcg10", "time_to_top10", "best_rank")


class MetricsError(ValueError):
    pass


class DegenerateDenominator(MetricsError):
    """Grid-search and random-search references coincide; the normalized
    score is undefined for this experiment."""


def _check_ranks(ranks: Sequence[int], n: int) -> np.ndarray:
    ranks = np.asarray(ranks, dtype=int)
    if ranks.ndim != 1 or ranks.size < 1:
        raise MetricsError("need a non-empty rank list")
    if ranks.min() < 1 or ranks.max() > n:
        raise MetricsError(f"ranks must lie in [1, {n}]")
    return ranks


def top_fraction_threshold(n: int, fraction: float = 0.1) -> int:
    """Largest rank still counted as a top-`fraction` arm."""
    return math.floor(fraction * n)


def dcg10(ranks: Sequence[int], n: int) -> float:
    """Discounted count of top-10% arms over the pull sequence.

    Pull position ell contributes 1/log2(ell+1) when its rank is within the
    top 10% of the grid.
    """
    ranks = _check_ranks(ranks, n)
    return float(_stat_values(ranks[None, :], n, "dcg10")[0])


def alt_statistics(ranks: Sequence[int], n: int) -> tuple[int | None, int]:
    """(first pull position reaching a top-10% arm or None, best rank)."""
    ranks = _check_ranks(ranks, n)
    thresh = top_fraction_threshold(n)
    hits = np.nonzero(ranks <= thresh)[0]
    time_to = int(hits[0]) + 1 if hits.size else None
    return time_to, int(ranks.min())


def _stat_values(draws: np.ndarray, n: int, statistic: str) -> np.ndarray:
    """Vectorized statistic over rows of rank sequences; higher is better."""
    length = draws.shape[1]
    thresh = top_fraction_threshold(n)
    if statistic == "dcg10":
        discounts = 1.0 / np.log2(np.arange(2, length + 2))
        return ((draws <= thresh) * discounts).sum(axis=1)
    if statistic == "time_to_top10":
        hit = draws <= thresh
        any_hit = hit.any(axis=1)
        first = np.argmax(hit, axis=1) + 1
        # never reaching the top set is worse than any attainable time
        return np.where(any_hit, -first.astype(float), -(length + 1.0))
    if statistic == "best_rank":
        return -draws.min(axis=1).astype(float)
    raise MetricsError(f"unknown rank statistic {statistic!r}")


def rank_statistic(ranks: Sequence[int], n: int, statistic: str = "dcg10") -> float:
    """Evaluate one rank statistic, sign-normalized to higher-is-better."""
    ranks = _check_ranks(ranks, n)
    return float(_stat_values(ranks[None, :], n, statistic)[0])


def p_better_than_random(
    ranks: Sequence[int],
    n: int,
    statistic: str = "dcg10",
    draws: int = 10**5,
    seed: int = 0,
    _chunk: int = 4096,
) -> float:
    """Probability the engine's rank statistic strictly beats a same-budget
    random draw (without replacement); ties count as losses.

    Estimated over ``draws`` Monte Carlo samples from a stream fixed by
    ``seed``.
    """
    ranks = _check_ranks(ranks, n)
    length = ranks.size
    if length > n:
        raise MetricsError(f"budget {length} exceeds grid size {n}")
    if draws < 1:
        raise MetricsError("need at least one draw")
    s_engine = rank_statistic(ranks, n, statistic)
    rng = np.random.default_rng(seed)
    base = np.arange(1, n + 1)
    wins = 0
    remaining = draws
    while remaining > 0:
        batch = min(remaining, _chunk)
        perm = rng.permuted(
            np.broadcast_to(base, (batch, n)).copy(), axis=1
        )[:, :length]
        wins += int((s_engine > _stat_values(perm, n, statistic)).sum())
        remaining -= batch
    return wins / draws


def expected_random_best(ordered_test_scores: Sequence[float], budget: int) -> float:
    """Analytic expected selected test score of random search.

    ``ordered_test_scores`` are the test scores in descending-validation
    order over the full grid. With inclusion probability p = L/N, the arm at
    validation rank ell wins with weight (1-p)^(ell-1); the result is the
    weight-normalized average.
    """
    scores = np.asarray(ordered_test_scores, dtype=float)
    n = scores.size
    if not 1 <= budget <= n:
        raise MetricsError(f"budget must be in [1, {n}]")
    p = budget / n
    weights = (1.0 - p) ** np.arange(n)
    return float((weights * scores).sum() / weights.sum())


def normalized_score(r_star: float, r_rand: float, r_grid: float) -> float:
    """Linear normalization: random search maps to 0, full grid search to 100.

    May exceed 100 (or go negative) when grid search overfits the
    validation signal.
    """
    denom = r_grid - r_rand
    if denom == 0:
        raise DegenerateDenominator(
            "grid-search and random-search scores coincide"
        )
    return 100.0 * (r_star - r_rand) / denom


def improvement_degree(
    experiments: Iterable[tuple[float, float, float]]
) -> float:
    """Aggregate normalized score, weighting each experiment by its maximum
    possible improvement.

    Each experiment is (r_star, r_rand, r_grid). Degenerate experiments
    (r_grid == r_rand) contribute zero to both sums.
    """
    num = 0.0
    den = 0.0
    for r_star, r_rand, r_grid in experiments:
        if r_grid == r_rand:
            continue
        num += r_star - r_rand
        den += r_grid - r_rand
    if den == 0:
        raise MetricsError("all experiments are degenerate")
    return 100.0 * num / den


def overall(p_by_m: Sequence[float], imp_by_m: Sequence[float]) -> float:
    """Combined score with equal weight to both metric families.

    Probabilities are in [0, 1]; the random-search baseline (p = 0.5,
    improvement 0) maps to 0, the maximum of both families to 100.
    """
    if len(p_by_m) != 3 or len(imp_by_m) != 3:
        raise MetricsError("need values for all three budget multipliers")
    p_mean = float(np.mean(p_by_m))
    imp_mean = float(np.mean(imp_by_m))
    return (p_mean * 100.0 - 50.0) + imp_mean / 2.0


def mean_se(values: Sequence[float]) -> tuple[float, float]:
    """(mean, standard error); se is 0 for fewer than two values."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise MetricsError("no values to aggregate")
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def winner_inversions(
    results: Mapping[tuple[str, str], Mapping[str, float]]
) -> tuple[float, list[tuple[str, str, str, str, str]]]:
    """Fraction of (model pair, engine pair, data context) triples whose
    winner model flips with the engine.

    ``results[(engine, model)][context]`` is the mean selected test score.
    Ties in either comparison stay in the denominator but never invert.
    Returns (rate, inverting triples as (engine_a, engine_b, model_a,
    model_b, context)).
    """
    engines = sorted({e for e, _ in results})
    models = sorted({m for _, m in results})
    if len(engines) < 2 or len(models) < 2:
        raise MetricsError("need at least two engines and two models")
    contexts = sorted(
        {c for scores in results.values() for c in scores}
    )
    total = 0
    inverting: list[tuple[str, str, str, str, str]] = []
    for ia, ea in enumerate(engines):
        for eb in engines[ia + 1 :]:
            for im, ma in enumerate(models):
                for mb in models[im + 1 :]:
                    for ctx in contexts:
                        try:
                            a1 = results[(ea, ma)][ctx]
                            a2 = results[(ea, mb)][ctx]
                            b1 = results[(eb, ma)][ctx]
                            b2 = results[(eb, mb)][ctx]
                        except KeyError:
                            continue
                        total += 1
                        da = a1 - a2
                        db = b1 - b2
                        if da * db < 0:
                            inverting.append((ea, eb, ma, mb, ctx))
    if total == 0:
        raise MetricsError("no complete comparison triples")
    return len(inverting) / total, inverting


def winner_inversion_rate(
    results: Mapping[tuple[str, str], Mapping[str, float]]
) -> float:
    return winner_inversions(results)[0]
