"""Certification metrics: certified percentage and certified-accuracy curves.

Certified accuracy at radius r follows the evaluation formula verbatim:
its denominator is the count of non-abstaining items. Because the more
common convention divides by the full test set instead, the report also
carries that variant in a separate, labeled column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .certify import CertificateResult


@dataclass
class ItemOutcome:
    input_id: int
    true_label: int
    cert: CertificateResult
    wall_time_us: int

    @property
    def certified_radius(self) -> int:
        # Lattice-unit radius: radius^2 = radius_sq_x4 / 4 = quantile_z^2.
        return self.cert.quantile_z


@dataclass
class MetricsReport:
    dataset: str
    total: int
    certified_count: int
    correct_certified: int
    abstain_only: bool
    radius_grid: list
    ca_certified: list  # Fractions, denominator = certified count (0 -> flag)
    ca_full: list  # Fractions, denominator = full test set
    mean_time_us: float
    median_time_us: float
    rows: list = field(default_factory=list, repr=False)

    @property
    def certified_percentage(self) -> Fraction:
        return Fraction(self.certified_count, self.total)

    @property
    def abstain_rate(self) -> Fraction:
        return 1 - self.certified_percentage

    def to_csv(self) -> str:
        lines = ["radius,radius_normalized,ca_certified_denom,ca_full_testset"]
        for r, cc, cf in zip(self.radius_grid, self.ca_certified, self.ca_full):
            lines.append(f"{r},{float(Fraction(r, 255)):.6f},{float(cc):.6f},{float(cf):.6f}")
        lines.append(
            f"# cp={float(self.certified_percentage):.6f}"
            f" abstain_rate={float(self.abstain_rate):.6f}"
            f" abstain_only={int(self.abstain_only)}"
            f" mean_time_us={self.mean_time_us:.1f}"
            f" median_time_us={self.median_time_us:.1f}"
        )
        return "\n".join(lines) + "\n"


def build_report(dataset_name: str, outcomes: list, radius_grid: list) -> MetricsReport:
    total = len(outcomes)
    if total == 0:
        raise ValueError("no outcomes to summarize")
    certified = [o for o in outcomes if o.cert.certified]
    ncert = len(certified)
    correct = [o for o in certified if o.cert.label == o.true_label]
    ca_cert = []
    ca_full = []
    for r in radius_grid:
        hits = sum(1 for o in correct if o.certified_radius >= r)
        ca_cert.append(Fraction(hits, ncert) if ncert else Fraction(0))
        ca_full.append(Fraction(hits, total))
    times = sorted(o.wall_time_us for o in outcomes)
    mid = total // 2
    median = times[mid] if total % 2 else (times[mid - 1] + times[mid]) / 2
    return MetricsReport(
        dataset=dataset_name,
        total=total,
        certified_count=ncert,
        correct_certified=len(correct),
        abstain_only=ncert == 0,
        radius_grid=list(radius_grid),
        ca_certified=ca_cert,
        ca_full=ca_full,
        mean_time_us=sum(times) / total,
        median_time_us=float(median),
        rows=outcomes,
    )
