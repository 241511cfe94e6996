"""Disparate impact and equal-opportunity differences over subgroup pairings.

Subgroup counts are small integers, so everything is computed with
`fractions.Fraction`: a fairness flag must never flip because of floating
point error. A group selector may pool several attribute values (for
pooled reference groups); an overlap between the monitored and reference
selectors is permitted but flagged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

DEFAULT_DI_BOUNDS = (Fraction(4, 5), Fraction(5, 4))


class EmptyGroup(ValueError):
    """A selector matched no records."""


@dataclass(frozen=True)
class OutcomeRecord:
    """One evaluated unit: model outcome R, true label Y, group attribute A."""

    r: int
    y: int
    a: str

    def __post_init__(self) -> None:
        if self.r not in (0, 1) or self.y not in (0, 1):
            raise ValueError("outcome and label must be binary")


@dataclass(frozen=True)
class GroupSpec:
    """Monitored (unprivileged) vs reference (privileged) selectors.

    Each selector is one attribute value or a tuple of pooled values.
    """

    attribute: str
    unprivileged: str | tuple[str, ...]
    privileged: str | tuple[str, ...]

    @staticmethod
    def _values(selector: str | tuple[str, ...]) -> frozenset[str]:
        return frozenset((selector,) if isinstance(selector, str) else selector)

    @property
    def unprivileged_values(self) -> frozenset[str]:
        return self._values(self.unprivileged)

    @property
    def privileged_values(self) -> frozenset[str]:
        return self._values(self.privileged)

    @property
    def overlap(self) -> bool:
        return bool(self.unprivileged_values & self.privileged_values)

    def __post_init__(self) -> None:
        if self.unprivileged_values == self.privileged_values:
            raise ValueError("monitored and reference selectors must differ")

    @staticmethod
    def label(selector: str | tuple[str, ...]) -> str:
        return selector if isinstance(selector, str) else "".join(selector)


def _split(
    records: Iterable[OutcomeRecord], group: GroupSpec
) -> tuple[list[OutcomeRecord], list[OutcomeRecord]]:
    records = list(records)
    unpriv = [rec for rec in records if rec.a in group.unprivileged_values]
    priv = [rec for rec in records if rec.a in group.privileged_values]
    if not unpriv:
        raise EmptyGroup(f"no records for monitored group {group.unprivileged!r}")
    if not priv:
        raise EmptyGroup(f"no records for reference group {group.privileged!r}")
    return unpriv, priv


def _positive_rate(records: list[OutcomeRecord]) -> Fraction:
    return Fraction(sum(rec.r for rec in records), len(records))


def disparate_impact(records: Iterable[OutcomeRecord], group: GroupSpec) -> Fraction | None:
    """P(R=1 | monitored) / P(R=1 | reference); None when the reference rate is 0."""
    unpriv, priv = _split(records, group)
    priv_rate = _positive_rate(priv)
    if priv_rate == 0:
        return None
    return _positive_rate(unpriv) / priv_rate


def equal_opportunity_difference(
    records: Iterable[OutcomeRecord], group: GroupSpec
) -> tuple[Fraction | None, Fraction | None]:
    """(EOD_0, EOD_1): monitored minus reference conditional rates.

    EOD_1 compares P(R=1 | Y=1) across groups, EOD_0 compares P(R=0 | Y=0).
    A component is None when either group lacks records in its stratum.
    """
    unpriv, priv = _split(records, group)

    def stratum_diff(y: int, outcome: int) -> Fraction | None:
        u = [rec for rec in unpriv if rec.y == y]
        p = [rec for rec in priv if rec.y == y]
        if not u or not p:
            return None
        u_rate = Fraction(sum(1 for rec in u if rec.r == outcome), len(u))
        p_rate = Fraction(sum(1 for rec in p if rec.r == outcome), len(p))
        return u_rate - p_rate

    return stratum_diff(0, 0), stratum_diff(1, 1)


@dataclass(frozen=True)
class FairnessReport:
    group: GroupSpec
    di: Fraction | None
    eod_0: Fraction | None
    eod_1: Fraction | None
    four_fifths: str  # "pass" | "fail" | "undefined"
    n_unprivileged: int
    n_privileged: int
    overlap_flag: bool
    di_bounds: tuple[Fraction, Fraction] = field(default=DEFAULT_DI_BOUNDS)

    def as_dict(self) -> dict:
        def frac(v: Fraction | None) -> dict | None:
            if v is None:
                return None
            return {"numerator": v.numerator, "denominator": v.denominator, "value": float(v)}

        return {
            "attribute": self.group.attribute,
            "unprivileged": GroupSpec.label(self.group.unprivileged),
            "privileged": GroupSpec.label(self.group.privileged),
            "di": frac(self.di),
            "eod_0": frac(self.eod_0),
            "eod_1": frac(self.eod_1),
            "four_fifths": self.four_fifths,
            "n_unprivileged": self.n_unprivileged,
            "n_privileged": self.n_privileged,
            "overlap_flag": self.overlap_flag,
            "di_bounds": [float(self.di_bounds[0]), float(self.di_bounds[1])],
        }


def fairness_report(
    records: Iterable[OutcomeRecord],
    group: GroupSpec,
    di_bounds: tuple[Fraction, Fraction] = DEFAULT_DI_BOUNDS,
) -> FairnessReport:
    """Assemble DI, EOD_0/EOD_1 and the four-fifths flag for one pairing."""
    records = list(records)
    unpriv, priv = _split(records, group)
    di = disparate_impact(records, group)
    eod_0, eod_1 = equal_opportunity_difference(records, group)
    lower, upper = di_bounds
    if di is None:
        flag = "undefined"
    else:
        flag = "pass" if lower <= di <= upper else "fail"
    return FairnessReport(
        group=group,
        di=di,
        eod_0=eod_0,
        eod_1=eod_1,
        four_fifths=flag,
        n_unprivileged=len(unpriv),
        n_privileged=len(priv),
        overlap_flag=group.overlap,
        di_bounds=di_bounds,
    )
