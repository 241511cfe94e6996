"""Per-image decision flow: quality gate, anatomy check, retake decision,
then referral and grading, with a full stage trace.

The flow is a fixed decision table. Quality and anatomy always run first;
if either fails, a human decision provider chooses between retaking the
image and proceeding as ungradable. Otherwise the referral model routes to
exactly one of the two grading models, which fixes the disposition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol

import numpy as np

from .backends import AnatomyOutput, Backend, ClassifierOutput, ModelId
from .domain import Disposition, Grade, ReferralCategory, ReferralScheme

MAX_RETAKES_CAP = 5

LOW_QUALITY = "low_quality"
MISSING_MACULA = "missing_macula"
MISSING_OPTIC_NERVE = "missing_optic_nerve"


class MdDecision(Enum):
    RETAKE_IMAGE = "retake"
    PROCEED_UNGRADABLE = "proceed_ungradable"


class MdProvider(Protocol):
    """Source of the on-site medical decision when the quality gate fails."""

    def decide(self, image_id: str, reason: str) -> MdDecision: ...


@dataclass(frozen=True)
class PresetMd:
    """Fixed decision, optionally overridden per image id."""

    default: MdDecision
    per_image: dict[str, MdDecision] = field(default_factory=dict)

    def decide(self, image_id: str, reason: str) -> MdDecision:
        return self.per_image.get(image_id, self.default)


@dataclass(frozen=True)
class ScreeningPolicy:
    quality_threshold: float = 0.5
    require_macula: bool = True
    require_optic_nerve: bool = True
    max_retakes: int = 2

    def __post_init__(self) -> None:
        if not 0.0 <= self.quality_threshold <= 1.0:
            raise ValueError("quality_threshold outside [0, 1]")
        if not 0 <= self.max_retakes <= MAX_RETAKES_CAP:
            raise ValueError(f"max_retakes outside [0, {MAX_RETAKES_CAP}]")


@dataclass(frozen=True)
class QualityVerdict:
    passed: bool
    reasons: tuple[str, ...] = ()


def quality_gate(
    mq: ClassifierOutput, anatomy: AnatomyOutput, policy: ScreeningPolicy
) -> QualityVerdict:
    """Pass iff the quality score clears the threshold and required anatomy is present."""
    reasons = []
    if mq.score < policy.quality_threshold:
        reasons.append(LOW_QUALITY)
    if policy.require_macula and not anatomy.macula.present:
        reasons.append(MISSING_MACULA)
    if policy.require_optic_nerve and not anatomy.optic_nerve.present:
        reasons.append(MISSING_OPTIC_NERVE)
    return QualityVerdict(passed=not reasons, reasons=tuple(reasons))


@dataclass(frozen=True)
class StageRecord:
    stage: str  # model id or "MD"
    output: dict
    decision: str

    def as_dict(self) -> dict:
        return {"stage": self.stage, "output": self.output, "decision": self.decision}


@dataclass(frozen=True)
class ScreeningResult:
    image_id: str
    stages: tuple[StageRecord, ...]
    quality: QualityVerdict
    disposition: Disposition
    grades: tuple[Grade, ...]  # candidate grades implied by the grading stage
    retakes_used: int = 0

    def referral(self, scheme: ReferralScheme) -> ReferralCategory:
        return disposition_category(self.disposition, scheme)

    def as_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "stages": [s.as_dict() for s in self.stages],
            "quality": {"passed": self.quality.passed, "reasons": list(self.quality.reasons)},
            "disposition": self.disposition.value,
            "grades": [g.value for g in self.grades],
            "retakes_used": self.retakes_used,
            "referral": {
                scheme.value: disposition_category(self.disposition, scheme).value
                for scheme in ReferralScheme
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScreeningResult":
        return cls(
            image_id=d["image_id"],
            stages=tuple(
                StageRecord(stage=s["stage"], output=s["output"], decision=s["decision"])
                for s in d["stages"]
            ),
            quality=QualityVerdict(
                passed=d["quality"]["passed"], reasons=tuple(d["quality"]["reasons"])
            ),
            disposition=Disposition(d["disposition"]),
            grades=tuple(Grade(g) for g in d["grades"]),
            retakes_used=d.get("retakes_used", 0),
        )


def disposition_category(disposition: Disposition, scheme: ReferralScheme) -> ReferralCategory:
    """Referral category implied by a disposition.

    Ungradable outcomes play the role of grade R6; a pending RETAKE is
    treated the same way (the image produced no grade), which under RDR
    excludes it and under ACR refers it.
    """
    if disposition is Disposition.REFER_SPECIALIST:
        return ReferralCategory.REFERABLE
    if disposition in (Disposition.REVIEW_12_MONTHS, Disposition.REVIEW_6_MONTHS):
        return ReferralCategory.NON_REFERABLE
    # refer_ungradable and retake
    if scheme is ReferralScheme.ACR:
        return ReferralCategory.REFERABLE
    return ReferralCategory.EXCLUDED


def _classifier_stage(model: ModelId, out: ClassifierOutput, decision: str) -> StageRecord:
    return StageRecord(
        stage=model.value, output={"label": out.label, "score": out.score}, decision=decision
    )


def run_screening(
    image_id: str,
    backend: Backend,
    policy: ScreeningPolicy = ScreeningPolicy(),
    md_provider: MdProvider = PresetMd(MdDecision.PROCEED_UNGRADABLE),
    pixels: np.ndarray | None = None,
    retakes_used: int = 0,
) -> ScreeningResult:
    """Run one image through the decision flow.

    Deterministic for deterministic backends: identical inputs produce an
    identical result, trace included. `retakes_used` is the number of
    retakes already consumed for this acquisition; once the policy limit is
    reached a further retake request resolves to REFER_UNGRADABLE.
    """
    stages: list[StageRecord] = []

    mq = backend.classify(ModelId.MQ, image_id, pixels)
    ma = backend.detect_anatomy(image_id, pixels)
    verdict = quality_gate(mq, ma, policy)

    stages.append(
        _classifier_stage(ModelId.MQ, mq, "pass" if mq.score >= policy.quality_threshold else LOW_QUALITY)
    )
    anatomy_reasons = [r for r in verdict.reasons if r != LOW_QUALITY]
    stages.append(
        StageRecord(
            stage=ModelId.MA.value,
            output={
                "macula": {"present": ma.macula.present, "score": ma.macula.score},
                "optic_nerve": {"present": ma.optic_nerve.present, "score": ma.optic_nerve.score},
            },
            decision=",".join(anatomy_reasons) if anatomy_reasons else "pass",
        )
    )

    if not verdict.passed:
        reason = ",".join(verdict.reasons)
        decision = md_provider.decide(image_id, reason)
        if decision is MdDecision.RETAKE_IMAGE and retakes_used >= policy.max_retakes:
            stages.append(
                StageRecord(
                    stage="MD",
                    output={"reason": reason, "decision": decision.value},
                    decision="retake_limit_exceeded",
                )
            )
            disposition = Disposition.REFER_UNGRADABLE
        elif decision is MdDecision.RETAKE_IMAGE:
            stages.append(
                StageRecord(
                    stage="MD",
                    output={"reason": reason, "decision": decision.value},
                    decision=decision.value,
                )
            )
            disposition = Disposition.RETAKE
        else:
            stages.append(
                StageRecord(
                    stage="MD",
                    output={"reason": reason, "decision": decision.value},
                    decision=decision.value,
                )
            )
            disposition = Disposition.REFER_UNGRADABLE
        return ScreeningResult(
            image_id=image_id,
            stages=tuple(stages),
            quality=verdict,
            disposition=disposition,
            grades=(Grade.R6,) if disposition is not Disposition.RETAKE else (),
            retakes_used=retakes_used,
        )

    m1 = backend.classify(ModelId.M1, image_id, pixels)
    if m1.label == 0:
        stages.append(_classifier_stage(ModelId.M1, m1, "grade_low"))
        m2 = backend.classify(ModelId.M2, image_id, pixels)
        if m2.label == 0:
            stages.append(_classifier_stage(ModelId.M2, m2, Disposition.REVIEW_12_MONTHS.value))
            disposition, grades = Disposition.REVIEW_12_MONTHS, (Grade.R0, Grade.R1)
        else:
            stages.append(_classifier_stage(ModelId.M2, m2, Disposition.REVIEW_6_MONTHS.value))
            disposition, grades = Disposition.REVIEW_6_MONTHS, (Grade.R2,)
    else:
        stages.append(_classifier_stage(ModelId.M1, m1, "grade_high"))
        m3 = backend.classify(ModelId.M3, image_id, pixels)
        grade = Grade.R3 if m3.label == 0 else Grade.R4
        stages.append(_classifier_stage(ModelId.M3, m3, f"{Disposition.REFER_SPECIALIST.value}:{grade.value}"))
        disposition, grades = Disposition.REFER_SPECIALIST, (grade,)

    return ScreeningResult(
        image_id=image_id,
        stages=tuple(stages),
        quality=verdict,
        disposition=disposition,
        grades=grades,
        retakes_used=retakes_used,
    )
