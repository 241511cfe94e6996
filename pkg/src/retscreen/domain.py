"""Severity grades, acquisition metadata, and the referral-category mapping.

Shared vocabulary for the screening workflow and the evaluation harness.
All enums carry their canonical text encoding as the value, so serialization
is `member.value` everywhere.
"""

from __future__ import annotations

from enum import Enum


class UnsupportedGrade(ValueError):
    """Raised when an enucleated eye (R5) reaches a referral mapping."""


class Grade(Enum):
    """Diabetic-retinopathy severity grades.

    R0-R4 follow the ICO severity order (none .. proliferative). R5
    (enucleated eye) and R6 (ungradable image) sit outside that order.
    """

    R0 = "R0"
    R1 = "R1"
    R2 = "R2"
    R3 = "R3"
    R4 = "R4"
    R5 = "R5"
    R6 = "R6"

    @property
    def gradable(self) -> bool:
        return self not in (Grade.R5, Grade.R6)

    @property
    def severity(self) -> int:
        """Rank within the severity order. Undefined for R5/R6."""
        if not self.gradable:
            raise UnsupportedGrade(f"{self.value} has no severity rank")
        return int(self.value[1])


class Projection(Enum):
    """Field of the fundus photograph: macula-centered or optic-nerve-centered."""

    MACULA = "A"
    OPTIC_NERVE = "B"


class Laterality(Enum):
    LEFT = "L"
    RIGHT = "R"


class Sex(Enum):
    """UNKNOWN is accepted on ingestion only; sex-sliced fairness runs drop it."""

    MALE = "M"
    FEMALE = "F"
    UNKNOWN = "U"


class ReferralScheme(Enum):
    """RDR refers severe disease only; ACR additionally refers ungradable images."""

    RDR = "RDR"
    ACR = "ACR"


class ReferralCategory(Enum):
    NON_REFERABLE = "non_referable"
    REFERABLE = "referable"
    EXCLUDED = "excluded"

    @property
    def code(self) -> int:
        """Binary class code (0 non-referable, 1 referable); EXCLUDED has none."""
        if self is ReferralCategory.EXCLUDED:
            raise ValueError("excluded units carry no class code")
        return 1 if self is ReferralCategory.REFERABLE else 0


class Disposition(Enum):
    """Final outcome of a screening. Terminal except RETAKE."""

    REVIEW_12_MONTHS = "review_12_months"
    REVIEW_6_MONTHS = "review_6_months"
    REFER_SPECIALIST = "refer_specialist"
    REFER_UNGRADABLE = "refer_ungradable"
    RETAKE = "retake"


_REFERABLE_GRADES = frozenset((Grade.R3, Grade.R4))


def referral_category(grade: Grade, scheme: ReferralScheme) -> ReferralCategory:
    """Map a severity grade to a referral category under the given scheme.

    Both schemes refer R3/R4 and keep R0-R2 non-referable; they differ only
    on ungradable images, which ACR refers and RDR excludes from evaluation.
    R5 must be filtered out upstream.
    """
    if grade is Grade.R5:
        raise UnsupportedGrade("enucleated eyes (R5) must be excluded before referral mapping")
    if grade is Grade.R6:
        if scheme is ReferralScheme.ACR:
            return ReferralCategory.REFERABLE
        return ReferralCategory.EXCLUDED
    if grade in _REFERABLE_GRADES:
        return ReferralCategory.REFERABLE
    return ReferralCategory.NON_REFERABLE
