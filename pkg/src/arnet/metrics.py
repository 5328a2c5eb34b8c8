"""Detection metrics: equal error rate and the normalized minimum tandem
detection cost, both computed from an exhaustive threshold sweep.

Score convention: higher means more bona fide. At threshold ``t`` a trial is
accepted when ``score >= t``, so the false-acceptance rate (spoof accepted)
is non-increasing in ``t`` and the false-rejection rate (bona fide rejected)
is non-decreasing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

BONAFIDE = "bonafide"
SPOOF = "spoof"


@dataclass(frozen=True)
class ScoreEntry:
    utt_id: str
    score: float
    label: str


@dataclass
class ScoreSet:
    """Per-trial detection scores with ground-truth labels."""

    entries: list[ScoreEntry] = field(default_factory=list)

    def __post_init__(self):
        for e in self.entries:
            if e.label not in (BONAFIDE, SPOOF):
                raise DataError(f"unknown label {e.label!r} for {e.utt_id!r}")
            if not np.isfinite(e.score):
                raise DataError(f"non-finite score for {e.utt_id!r}")

    def add(self, utt_id: str, score: float, label: str) -> None:
        e = ScoreEntry(utt_id, float(score), label)
        if e.label not in (BONAFIDE, SPOOF):
            raise DataError(f"unknown label {label!r} for {utt_id!r}")
        if not np.isfinite(e.score):
            raise DataError(f"non-finite score for {utt_id!r}")
        self.entries.append(e)

    def scores_by_label(self) -> tuple[np.ndarray, np.ndarray]:
        bona = np.array([e.score for e in self.entries if e.label == BONAFIDE])
        spoof = np.array([e.score for e in self.entries if e.label == SPOOF])
        return bona, spoof

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class AsvOperatingPoint:
    """Fixed verification-system error rates, priors, and costs that the
    tandem cost combines with the countermeasure's sweep.

    The default priors/costs follow the ASVspoof 2019 evaluation protocol;
    the default miss/false-alarm rates are a synthetic desk-scale stand-in,
    not an official operating point.
    """

    p_miss_asv: float = 0.01
    p_fa_asv: float = 0.01
    p_miss_spoof_asv: float = 0.05
    pi_tar: float = 0.9405
    pi_non: float = 0.0095
    pi_spoof: float = 0.05
    c_miss_asv: float = 1.0
    c_fa_asv: float = 10.0
    c_miss_cm: float = 1.0
    c_fa_cm: float = 10.0

    def __post_init__(self):
        for name in ("p_miss_asv", "p_fa_asv", "p_miss_spoof_asv"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0,1], got {v}")
        if abs(self.pi_tar + self.pi_non + self.pi_spoof - 1.0) > 1e-9:
            raise ConfigError(
                f"priors must sum to 1, got "
                f"{self.pi_tar + self.pi_non + self.pi_spoof}")
        for name in ("c_miss_asv", "c_fa_asv", "c_miss_cm", "c_fa_cm"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    def cost_coefficients(self) -> tuple[float, float]:
        """(C1, C2): the weights on the countermeasure's miss and
        false-alarm rates in the tandem cost."""
        c1 = self.pi_tar * (self.c_miss_cm - self.c_miss_asv * self.p_miss_asv) \
            - self.pi_non * self.c_fa_asv * self.p_fa_asv
        c2 = self.c_fa_cm * self.pi_spoof * (1.0 - self.p_miss_spoof_asv)
        return c1, c2


@dataclass
class EvalReport:
    eer: float
    eer_threshold: float
    min_tdcf: float
    tdcf_threshold: float
    n_bonafide: int
    n_spoof: int


def _sweep_arrays(s: ScoreSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thresholds (-inf, each distinct score, +inf) with FAR/FRR per point."""
    bona, spoof = s.scores_by_label()
    if bona.size == 0 or spoof.size == 0:
        raise DataError(
            f"metrics need both classes; got {bona.size} bona fide and "
            f"{spoof.size} spoof scores")
    thresholds = np.concatenate(
        [[-np.inf], np.unique(np.concatenate([bona, spoof])), [np.inf]])
    bona_sorted = np.sort(bona)
    spoof_sorted = np.sort(spoof)
    # accepted iff score >= t
    far = (spoof.size - np.searchsorted(spoof_sorted, thresholds, side="left")) / spoof.size
    frr = np.searchsorted(bona_sorted, thresholds, side="left") / bona.size
    return thresholds, far, frr


def det_points(s: ScoreSet) -> list[tuple[float, float, float]]:
    """(threshold, FAR, FRR) along the sweep; FAR non-increasing, FRR
    non-decreasing."""
    thresholds, far, frr = _sweep_arrays(s)
    return list(zip(thresholds.tolist(), far.tolist(), frr.tolist()))


def _interp_eer(thresholds: np.ndarray, far: np.ndarray,
                frr: np.ndarray) -> tuple[float, float]:
    diff = far - frr  # non-increasing along the sweep
    zero_idx = np.nonzero(diff == 0.0)[0]
    if zero_idx.size:
        i = int(zero_idx[0])  # ties break toward the lower threshold
        return float(far[i]), float(thresholds[i])
    crossings = np.nonzero((diff[:-1] > 0.0) & (diff[1:] < 0.0))[0]
    i = int(crossings[0])
    alpha = diff[i] / (diff[i] - diff[i + 1])
    eer = far[i] + alpha * (far[i + 1] - far[i])
    lo, hi = thresholds[i], thresholds[i + 1]
    if np.isfinite(lo) and np.isfinite(hi):
        thr = lo + alpha * (hi - lo)
    else:
        thr = lo if np.isfinite(lo) else hi
    return float(eer), float(thr)


def compute_eer(s: ScoreSet) -> tuple[float, float]:
    """Equal error rate and its threshold.

    Sweeps every distinct score, then linearly interpolates between the
    adjacent sweep points where FAR - FRR changes sign; an exact tie picks
    the lowest such threshold.
    """
    thresholds, far, frr = _sweep_arrays(s)
    return _interp_eer(thresholds, far, frr)


def compute_min_tdcf(s: ScoreSet,
                     op: AsvOperatingPoint | None = None) -> tuple[float, float]:
    """Minimum normalized tandem detection cost over the threshold sweep.

    ``tdcf(t) = C1 * FRR(t) + C2 * FAR(t)``, normalized by ``min(C1, C2)``
    so that the trivial accept-all / reject-all policies both score 1.
    """
    if op is None:
        op = AsvOperatingPoint()
    c1, c2 = op.cost_coefficients()
    if c1 <= 0 or c2 <= 0:
        raise ConfigError(
            f"degenerate tandem operating point: C1={c1:.6f}, C2={c2:.6f} "
            f"(both must be positive)")
    thresholds, far, frr = _sweep_arrays(s)
    costs = (c1 * frr + c2 * far) / min(c1, c2)
    i = int(np.argmin(costs))  # first minimum = lowest threshold
    return float(costs[i]), float(thresholds[i])


def evaluate(s: ScoreSet, op: AsvOperatingPoint | None = None) -> EvalReport:
    eer, eer_thr = compute_eer(s)
    tdcf, tdcf_thr = compute_min_tdcf(s, op)
    bona, spoof = s.scores_by_label()
    return EvalReport(eer=eer, eer_threshold=eer_thr, min_tdcf=tdcf,
                      tdcf_threshold=tdcf_thr, n_bonafide=int(bona.size),
                      n_spoof=int(spoof.size))
