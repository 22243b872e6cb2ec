"""Classification metrics, the boxcar baseline and report rendering.

The positive class is "coherent". Soft score maps are thresholded at 0.6
(values >= threshold are positive). Scores averaged over a sample set are
means of per-image metrics, not ratios of pooled counts.
"""

import json
import time
from dataclasses import dataclass

import numpy as np

from . import coherence, pipeline
from .errors import ParameterError, ShapeError

DECISION_THRESHOLD = 0.6

# Benchmark reference scores (averaged over 100 simulated 1000x1000
# interferograms) used as a qualitative anchor for desk-scale runs. The
# nonlocal methods are not implemented here; their columns render as n/a.
REFERENCE_SCORES = {
    "boxcar": {"accuracy": 0.8008, "precision": 0.8248, "recall": 0.8522},
    "nlinsar": {"accuracy": 0.8273, "precision": 0.8126, "recall": 0.9265},
    "nlsar": {"accuracy": 0.4951, "precision": 0.7389, "recall": 0.2983},
    "proposed": {"accuracy": 0.8425, "precision": 0.8399, "recall": 0.9107},
}


@dataclass
class MetricsReport:
    method: str
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float | None
    precision: float | None
    recall: float | None
    seconds_per_image: float | None = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
        }


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def classification_metrics(pred, truth, threshold: float = DECISION_THRESHOLD,
                           method: str = "") -> MetricsReport:
    """Confusion counts and ratios of a score map against {0,1} truth.

    Ratios whose denominator is zero are reported as None; the counts are
    always present.
    """
    p = np.asarray(pred)
    t = np.asarray(truth)
    if p.shape != t.shape:
        raise ShapeError(f"dimension mismatch: {p.shape} vs {t.shape}")
    if not np.isin(t, (0, 1)).all():
        raise ParameterError("truth must contain only 0/1 labels")
    hard = p >= threshold
    tv = t.astype(bool)
    tp = int(np.count_nonzero(hard & tv))
    fp = int(np.count_nonzero(hard & ~tv))
    tn = int(np.count_nonzero(~hard & ~tv))
    fn = int(np.count_nonzero(~hard & tv))
    return MetricsReport(
        method=method,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        accuracy=_ratio(tp + tn, tp + fp + tn + fn),
        precision=_ratio(tp, tp + fp),
        recall=_ratio(tp, tp + fn),
    )


def average_reports(reports, method: str = "") -> MetricsReport:
    """Mean of per-image metrics; counts are summed for context.

    Images where a ratio is undefined are skipped in that ratio's mean.
    """
    if not reports:
        raise ParameterError("nothing to average")

    def mean_of(attr):
        vals = [getattr(r, attr) for r in reports if getattr(r, attr) is not None]
        return float(np.mean(vals)) if vals else None

    seconds = [r.seconds_per_image for r in reports if r.seconds_per_image is not None]
    return MetricsReport(
        method=method or reports[0].method,
        tp=sum(r.tp for r in reports),
        fp=sum(r.fp for r in reports),
        tn=sum(r.tn for r in reports),
        fn=sum(r.fn for r in reports),
        accuracy=mean_of("accuracy"),
        precision=mean_of("precision"),
        recall=mean_of("recall"),
        seconds_per_image=float(np.mean(seconds)) if seconds else None,
    )


def compare_methods(
    samples,
    classifier_params,
    denoiser_params=None,
    boxcar_window: int = 7,
    threshold: float = DECISION_THRESHOLD,
    boxcar_reference: str = "denoised",
):
    """Score the boxcar baseline and the CNN classifier on a sample set.

    The baseline thresholds the windowed coherence of each noisy image
    against its denoised version (or the clean reference when
    boxcar_reference="clean"). Timing wraps inference only, normalized to
    seconds per 1000x1000 image; the shared denoising step is not billed
    to either method.
    """
    if not samples:
        raise ParameterError("empty sample list")
    if boxcar_reference not in ("denoised", "clean"):
        raise ParameterError(f"unknown boxcar reference {boxcar_reference!r}")
    if boxcar_reference == "denoised" and denoiser_params is None:
        raise ParameterError("denoiser parameters required to pair with denoised images")

    per_image = {"boxcar": [], "proposed": []}
    for sample in samples:
        pixels = sample.noisy.size
        norm = 1e6 / pixels
        if boxcar_reference == "denoised":
            reference = pipeline.denoise_image(denoiser_params, sample.noisy)
        else:
            reference = sample.clean

        start = time.perf_counter()
        coh = coherence.estimate_coherence(sample.noisy, reference, boxcar_window)
        boxcar_seconds = (time.perf_counter() - start) * norm
        rep = classification_metrics(coh, sample.truth_mask, threshold, method="boxcar")
        rep.seconds_per_image = boxcar_seconds
        per_image["boxcar"].append(rep)

        start = time.perf_counter()
        scores = pipeline.classify_image(classifier_params, sample.noisy)
        cnn_seconds = (time.perf_counter() - start) * norm
        rep = classification_metrics(scores, sample.truth_mask, threshold, method="proposed")
        rep.seconds_per_image = cnn_seconds
        per_image["proposed"].append(rep)

    return [
        average_reports(per_image["boxcar"], "boxcar"),
        average_reports(per_image["proposed"], "proposed"),
    ]


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def render_table(reports) -> str:
    """Plain-text score table; unimplemented methods render as n/a."""
    by_method = {r.method: r for r in reports}
    columns = ["Boxcar", "NLInSAR", "NLSAR", "Proposed"]
    keys = ["boxcar", "nlinsar", "nlsar", "proposed"]
    lines = ["Metric    " + "".join(f"{c:>10}" for c in columns)]
    for metric in ("accuracy", "precision", "recall"):
        row = f"{metric:<10}"
        for key in keys:
            rep = by_method.get(key)
            row += f"{_fmt(getattr(rep, metric) if rep else None):>10}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def report_json(reports, extra: dict | None = None) -> str:
    """Deterministic JSON for the score report (no timing fields)."""
    doc = {"methods": [r.to_dict() for r in reports]}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def timings_json(reports) -> str:
    """Per-method wall-clock seconds per 1000x1000-equivalent image."""
    doc = {
        r.method: r.seconds_per_image
        for r in reports
        if r.seconds_per_image is not None
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
