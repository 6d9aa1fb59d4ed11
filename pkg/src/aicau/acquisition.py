"""Acquisition scoring and single/batch query selection.

Strategies score every grid point from the current error-field estimate;
difference variants score the one-step drop of their field between rounds,
which cancels the aleatoric term. Batch selection is either the top-m scores
or one index per leading eigenvector of the cobias-covariance matrix (or of
its between-round difference), taking each eigenvector's largest-magnitude
component.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cobias import PemseField
from .linalg import psd_project, sym_eigen

STRATEGIES = ("random", "lc", "bald", "br", "pemse", "diff-lc", "diff-br", "diff-pemse")
DIFF_BASE = {"diff-lc": "lc", "diff-br": "br", "diff-pemse": "pemse"}
BATCH_MODES = ("single", "topm", "eigen")

# strategies whose scores depend on a bias estimate
BIAS_STRATEGIES = frozenset({"br", "pemse", "diff-br", "diff-pemse"})


class PoolExhaustedError(RuntimeError):
    """No eligible grid index remains to select."""


@dataclass
class AcquisitionScores:
    strategy: str
    values: np.ndarray
    eligible_mask: np.ndarray
    used_fallback: bool = False


@dataclass
class SelectionProvenance:
    index: int
    eigen_rank: int = -1
    eigenvalue: float = np.nan
    component: float = np.nan
    fallback: bool = False


@dataclass
class BatchSelection:
    indices: list
    mode: str
    provenance: list = field(default_factory=list)

    @property
    def used_fallback(self) -> bool:
        return any(p.fallback for p in self.provenance)


def kappa(prev: np.ndarray, curr: np.ndarray) -> np.ndarray:
    """One-step backward difference prev - curr (a drop is positive)."""
    prev = np.asarray(prev, dtype=float)
    curr = np.asarray(curr, dtype=float)
    if prev.shape != curr.shape:
        raise ValueError(f"field shapes differ: {prev.shape} vs {curr.shape}")
    return prev - curr


def kappa_field(prev: PemseField, curr: PemseField, which: str) -> np.ndarray:
    """Between-round drop of an error field, formed component by component.

    For the full error field the aleatoric difference is computed explicitly;
    when both rounds carry the same aleatoric values it is exactly zero, so
    the result coincides exactly with the reducible-only difference.
    """
    if which == "lc":
        return kappa(prev.model_var, curr.model_var)
    if which == "br":
        return kappa(prev.bias_sq, curr.bias_sq)
    if which == "pemse":
        return (
            kappa(prev.model_var, curr.model_var)
            + kappa(prev.bias_sq, curr.bias_sq)
            + kappa(prev.noise_var, curr.noise_var)
        )
    raise ValueError(f"unknown field: {which}")


def score(
    strategy: str,
    field_now: PemseField,
    eligible_mask: np.ndarray,
    prev_field: PemseField | None = None,
    rng: np.random.Generator | None = None,
    bald_noise_var: float = 0.01,
) -> AcquisitionScores:
    """Per-index acquisition values for one strategy.

    Difference strategies need a previous-round field; without one they fall
    back to their base strategy and flag it.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy: {strategy}")
    eligible_mask = np.asarray(eligible_mask, dtype=bool)

    used_fallback = False
    name = strategy
    if name in DIFF_BASE and prev_field is None:
        name = DIFF_BASE[name]
        used_fallback = True

    if name == "random":
        if rng is None:
            raise ValueError("the random strategy needs its rng stream")
        values = rng.uniform(size=field_now.model_var.shape[0])
    elif name == "lc":
        values = field_now.model_var.copy()
    elif name == "bald":
        if bald_noise_var <= 0:
            raise ValueError("bald_noise_var must be positive")
        values = 0.5 * np.log1p(field_now.model_var / bald_noise_var)
    elif name == "br":
        values = field_now.bias_sq.copy()
    elif name == "pemse":
        values = field_now.reducible
    else:
        values = kappa_field(prev_field, field_now, DIFF_BASE[strategy])

    if values.shape != eligible_mask.shape:
        raise ValueError("scores and eligibility mask have different lengths")
    return AcquisitionScores(
        strategy=strategy, values=values, eligible_mask=eligible_mask, used_fallback=used_fallback
    )


def select_single(scores: AcquisitionScores) -> int:
    """Highest-scoring eligible index; ties go to the lowest index."""
    if not scores.eligible_mask.any():
        raise PoolExhaustedError("no eligible index to select")
    masked = np.where(scores.eligible_mask, scores.values, -np.inf)
    return int(np.argmax(masked))


def select_batch_topm(scores: AcquisitionScores, m: int) -> BatchSelection:
    """The m highest-scoring eligible indices, distinct, best first."""
    if m < 1:
        raise ValueError("batch size must be >= 1")
    eligible = np.flatnonzero(scores.eligible_mask)
    if eligible.size < m:
        raise PoolExhaustedError(f"need {m} eligible indices, have {eligible.size}")
    # descending score, ascending index on ties
    order = np.lexsort((eligible, -scores.values[eligible]))
    chosen = eligible[order[:m]]
    return BatchSelection(
        indices=[int(i) for i in chosen],
        mode="topm",
        provenance=[SelectionProvenance(index=int(i)) for i in chosen],
    )


def select_batch_eigen(
    matrix: np.ndarray,
    m: int,
    mode: str = "omega",
    eligible_mask: np.ndarray | None = None,
    distinct: bool = False,
    rank_tol: float = 1e-8,
) -> BatchSelection:
    """One query per leading eigenvector: the index of its largest component.

    mode "omega" PSD-projects the matrix and walks all numerically nonzero
    eigenvalues; mode "difference" takes the matrix as a between-round
    difference and uses only its positive eigenvalues. When usable eigenpairs
    run out (or an eigenvector offers no unselected index under `distinct`),
    remaining slots are filled from the largest matrix diagonal entries and
    flagged as fallback picks.
    """
    if mode not in ("omega", "difference"):
        raise ValueError(f"unknown eigen-batch mode: {mode}")
    if m < 1:
        raise ValueError("batch size must be >= 1")
    work = psd_project(matrix) if mode == "omega" else np.asarray(matrix, dtype=float)
    n = work.shape[0]
    if eligible_mask is None:
        eligible_mask = np.ones(n, dtype=bool)
    eligible = np.asarray(eligible_mask, dtype=bool)
    if distinct and eligible.sum() < m:
        raise PoolExhaustedError(f"need {m} distinct eligible indices, have {eligible.sum()}")

    pairs = sym_eigen(work)
    scale = max(float(np.abs(pairs.eigenvalues).max()) if n else 0.0, 1e-300)
    usable = pairs.eigenvalues > rank_tol * scale

    chosen: list[int] = []
    provenance: list[SelectionProvenance] = []
    taken = np.zeros(n, dtype=bool)

    for rank in np.flatnonzero(usable):
        if len(chosen) == m:
            break
        comp = np.abs(pairs.eigenvectors[:, rank])
        mask = eligible & ~taken if distinct else eligible
        if not mask.any():
            continue
        idx = int(np.argmax(np.where(mask, comp, -np.inf)))
        chosen.append(idx)
        taken[idx] = True
        provenance.append(
            SelectionProvenance(
                index=idx,
                eigen_rank=int(rank),
                eigenvalue=float(pairs.eigenvalues[rank]),
                component=float(comp[idx]),
            )
        )

    if len(chosen) < m:
        # eigenpairs exhausted: fill from the largest diagonal entries
        diag = np.diag(work)
        mask = eligible & ~taken if distinct else eligible
        remaining = np.flatnonzero(mask)
        order = np.lexsort((remaining, -diag[remaining]))
        for pos in order:
            if len(chosen) == m:
                break
            idx = int(remaining[pos])
            chosen.append(idx)
            taken[idx] = True
            provenance.append(SelectionProvenance(index=idx, fallback=True))
        while len(chosen) < m and not distinct and remaining.size:
            # duplicates permitted and diagonal exhausted: repeat the best one
            idx = int(remaining[order[0]])
            chosen.append(idx)
            provenance.append(SelectionProvenance(index=idx, fallback=True))

    if len(chosen) < m:
        raise PoolExhaustedError(f"could only select {len(chosen)} of {m} requested indices")
    return BatchSelection(indices=chosen, mode="eigen", provenance=provenance)
