"""Affordance-grounding evaluation metrics: KLD, SIM, and NSS.

Conventions follow the standard saliency benchmarks: KLD and SIM compare
sum-normalized maps, NSS is the mean z-scored prediction over a fixation
set binarized from the ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyFixationSet, FieldError
from .fields import ScalarField, read_field, sum_normalize, zscore_normalize

__all__ = ["KLD_EPS", "kld", "sim", "nss", "SampleScore", "MetricsReport", "evaluate_corpus"]

KLD_EPS = 1e-12


def kld(pred: ScalarField, gt: ScalarField) -> float:
    """Kullback-Leibler divergence of gt from pred on sum-normalized maps.

    Computes sum(G * log(G / (P + eps) + eps)) with eps = 1e-12; clamped at
    zero since the epsilon smoothing can push identical maps a hair negative.
    Lower is better; not symmetric in its arguments.
    """
    p = sum_normalize(pred).data
    g = sum_normalize(gt).data
    value = float(np.sum(g * np.log(g / (p + KLD_EPS) + KLD_EPS)))
    return max(value, 0.0)


def sim(pred: ScalarField, gt: ScalarField) -> float:
    """Histogram intersection of the sum-normalized maps, in [0, 1]."""
    p = sum_normalize(pred).data
    g = sum_normalize(gt).data
    return float(np.minimum(p, g).sum())


def nss(pred: ScalarField, gt: ScalarField, fix_frac: float = 0.5) -> float:
    """Mean z-scored prediction over the fixation set {gt >= fix_frac * max(gt)}.

    Invariant under positive affine rescaling of pred. Population standard
    deviation is used for the z-scoring.
    """
    if not 0.0 < fix_frac <= 1.0:
        raise ValueError(f"fix_frac must be in (0, 1], got {fix_frac}")
    z = zscore_normalize(pred).data
    gmax = float(gt.data.max())
    if gmax <= 0.0:
        raise EmptyFixationSet("ground truth has no positive values")
    fixations = gt.data >= fix_frac * gmax
    if not fixations.any():
        raise EmptyFixationSet("no pixel reaches the fixation threshold")
    return float(z[fixations].mean())


@dataclass
class SampleScore:
    name: str
    kld: float | None = None
    sim: float | None = None
    nss: float | None = None
    errors: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"name": self.name, "kld": self.kld, "sim": self.sim, "nss": self.nss, "errors": self.errors}


@dataclass
class MetricsReport:
    """Corpus-level metric means plus per-sample detail."""

    kld: float | None
    sim: float | None
    nss: float | None
    fix_frac: float
    per_sample: list[SampleScore]
    missing: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kld": self.kld,
            "sim": self.sim,
            "nss": self.nss,
            "fix_frac": self.fix_frac,
            "normalization": "sum",
            "per_sample": [s.to_dict() for s in self.per_sample],
            "missing": self.missing,
        }


def _mean(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def evaluate_corpus(pred_dir, gt_dir, fix_frac: float = 0.5) -> MetricsReport:
    """Score every matching *.afg pair under two directories.

    Pairs are matched by filename. Unmatched files are reported as missing;
    per-sample metric failures are collected in that sample's error list and
    excluded from the corresponding mean. Nothing here raises on bad samples.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    pred_names = {p.name for p in pred_dir.glob("*.afg")}
    gt_names = {p.name for p in gt_dir.glob("*.afg")}
    missing = sorted(f"no ground truth for {n}" for n in pred_names - gt_names)
    missing += sorted(f"no prediction for {n}" for n in gt_names - pred_names)

    per_sample: list[SampleScore] = []
    klds: list[float] = []
    sims: list[float] = []
    nsss: list[float] = []
    for name in sorted(pred_names & gt_names):
        score = SampleScore(name=name)
        try:
            pred = read_field(pred_dir / name)
            gt = read_field(gt_dir / name)
        except FieldError as exc:
            score.errors.append(f"load: {exc}")
            per_sample.append(score)
            continue
        for label, fn, sink in (
            ("kld", lambda: kld(pred, gt), klds),
            ("sim", lambda: sim(pred, gt), sims),
            ("nss", lambda: nss(pred, gt, fix_frac), nsss),
        ):
            try:
                value = fn()
            except FieldError as exc:
                score.errors.append(f"{label}: {exc}")
            else:
                setattr(score, label, value)
                sink.append(value)
        per_sample.append(score)

    return MetricsReport(
        kld=_mean(klds),
        sim=_mean(sims),
        nss=_mean(nsss),
        fix_frac=fix_frac,
        per_sample=per_sample,
        missing=missing,
    )
