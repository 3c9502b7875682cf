"""Competency reports: Likert labels, return histograms and canonical JSON."""

from __future__ import annotations

import bisect
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._validation import check_finite_real, check_positive_int, check_samples, check_scale
from .exceptions import InvalidInputError

DEFAULT_LABELS = ("very low", "low", "moderate", "high", "very high")


@dataclass(frozen=True)
class LikertScale:
    """Ordered labels over ``[edges[0], edges[-1]]``.

    A score on an inner edge belongs to the bin above it; the top edge
    belongs to the top bin.
    """

    labels: tuple
    edges: tuple

    def __post_init__(self):
        labels, edges = tuple(self.labels), tuple(float(e) for e in self.edges)
        if len(edges) != len(labels) + 1:
            raise InvalidInputError("LikertScale needs exactly one more edge than labels")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise InvalidInputError("Likert edges must be strictly increasing")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def equal_width(cls, low, high, labels=DEFAULT_LABELS):
        low, high = check_scale(low, high)
        k = len(labels)
        edges = [low + (high - low) * i / k for i in range(k + 1)]
        edges[-1] = high
        return cls(tuple(labels), tuple(edges))

    @property
    def low(self):
        return self.edges[0]

    @property
    def high(self):
        return self.edges[-1]

    def index(self, x):
        x = check_finite_real(x, "score")
        if not self.low <= x <= self.high:
            raise InvalidInputError(f"score {x} outside Likert range [{self.low}, {self.high}]")
        return bisect.bisect_right(self.edges[1:-1], x)


def to_likert(x, scale):
    return scale.labels[scale.index(x)]


@dataclass(frozen=True)
class Histogram:
    edges: tuple
    counts: tuple
    r_bar: float
    mass_left: float
    mass_at: float
    mass_right: float

    def to_dict(self):
        return {
            "edges": list(self.edges),
            "counts": list(self.counts),
            "r_bar": self.r_bar,
            "mass_left": self.mass_left,
            "mass_at": self.mass_at,
            "mass_right": self.mass_right,
        }


def histogram_data(samples, n_bins, r_bar):
    """Equal-width histogram of returns with mass fractions either side of ``r_bar``.

    A sample with no spread gets one unit-width bin centred on its value.
    """
    x = check_samples(getattr(samples, "returns", samples))
    n_bins = check_positive_int(n_bins, "n_bins")
    r_bar = check_finite_real(r_bar, "r_bar")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        edges = np.array([lo - 0.5, lo + 0.5])
        counts = np.array([x.size])
    else:
        counts, edges = np.histogram(x, bins=n_bins, range=(lo, hi))
    n = x.size
    return Histogram(
        edges=tuple(float(e) for e in edges),
        counts=tuple(int(c) for c in counts),
        r_bar=r_bar,
        mass_left=int(np.sum(x < r_bar)) / n,
        mass_at=int(np.sum(x == r_bar)) / n,
        mass_right=int(np.sum(x > r_bar)) / n,
    )


@dataclass(frozen=True)
class CompetencyReport:
    task_id: str
    config: object
    features: object
    outcome: object
    histogram: Histogram
    likert_outcome: str
    solver_quality: object = None
    likert_quality: str | None = None
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        d = {
            "task_id": self.task_id,
            "config": self.config.to_dict(),
            "features": self.features.to_dict(),
            "outcome": self.outcome.to_dict(),
            "likert_outcome": self.likert_outcome,
            "histogram": self.histogram.to_dict(),
            "provenance": dict(self.provenance),
        }
        if self.solver_quality is not None:
            d["solver_quality"] = self.solver_quality.to_dict()
            d["likert_quality"] = self.likert_quality
        return d


def assemble_report(
    task_id,
    config,
    features,
    outcome,
    samples,
    solver_quality=None,
    n_bins=20,
    likert_labels=DEFAULT_LABELS,
    provenance=None,
):
    """Bundle assessments into a :class:`CompetencyReport`.

    Likert bins are equal-width over each factor's own scale.
    """
    p = outcome.params
    hist = histogram_data(samples, n_bins, p.r_bar)
    if sum(hist.counts) != outcome.n_samples:
        raise InvalidInputError("histogram counts do not match the outcome sample size")
    likert_o = to_likert(outcome.x_o, LikertScale.equal_width(p.scale_low, p.scale_high, likert_labels))
    likert_q = None
    if solver_quality is not None:
        sq = solver_quality
        likert_q = to_likert(sq.x_q, LikertScale.equal_width(sq.scale_low, sq.scale_high, likert_labels))
    prov = {"tool_version": __version__}
    prov.update(provenance or {})
    return CompetencyReport(
        task_id=task_id,
        config=config,
        features=features,
        outcome=outcome,
        histogram=hist,
        likert_outcome=likert_o,
        solver_quality=solver_quality,
        likert_quality=likert_q,
        provenance=prov,
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def serialize_report(report):
    """Canonical JSON: sorted keys, shortest round-trip floats, trailing newline.

    Non-finite floats are written as the strings ``"inf"``, ``"-inf"``, ``"nan"``.
    """
    data = report.to_dict() if hasattr(report, "to_dict") else report
    return json.dumps(_jsonable(data), sort_keys=True, indent=2, allow_nan=False, ensure_ascii=True) + "\n"


def write_text_atomic(path, text):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_report(report, path):
    write_text_atomic(path, serialize_report(report))
