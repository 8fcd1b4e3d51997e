"""Least-squares convergence orders on log-log data."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import FitFailure

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OrderFit:
    slope: float
    intercept: float
    residual: float  # max |log error - fitted line|
    used: tuple[float, ...]
    excluded: tuple[float, ...] = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "used_eps": list(self.used),
            "excluded_eps": list(self.excluded),
        }


def fit_order(ladder) -> OrderFit:
    """Fit ``log(error) = slope * log(eps) + c`` by least squares.

    Points with non-positive or non-finite error are excluded (and logged).

    Raises:
        FitFailure: fewer than three usable points remain.
    """
    pts = [(float(e), float(err)) for e, err in ladder]
    good = [(e, err) for e, err in pts if e > 0 and np.isfinite(err) and err > 0]
    bad = tuple(e for e, err in pts if (e, err) not in good)
    if bad:
        log.warning("excluding points with non-positive error at eps=%s", bad)
    if len(good) < 3:
        raise FitFailure(f"need at least 3 positive points, have {len(good)}")
    le = np.log([e for e, _ in good])
    lr = np.log([err for _, err in good])
    slope, intercept = np.polyfit(le, lr, 1)
    resid = float(np.max(np.abs(lr - (slope * le + intercept))))
    return OrderFit(float(slope), float(intercept), resid, tuple(e for e, _ in good), bad)
