"""Per-minute decision flow: classify, check idling, otherwise ask the fuzzy system."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .classifier.forest import ForestModel, predict_many
from .fuzzy import ControlAction, FuzzyConfig, decide_action
from .telemetry import DrivingEvent, Label, dump_jsonl, format_timestamp, iter_jsonl, parse_timestamp


class Reason(str, enum.Enum):
    IDLING = "Idling"
    DRIVING_PATTERN = "DrivingPattern"
    NONE = "None"


MESSAGES = {
    ControlAction.STOP_ENGINE: "Excessive idling detected: please stop the engine.",
    ControlAction.BREAK: "Speed is high: please brake.",
    ControlAction.BREAK_SMOOTHLY: "Speed is high and braking is harsh: please brake smoothly.",
    ControlAction.KEEP_THE_SPEED: "Please keep a steady speed.",
    ControlAction.ACCELERATE_SMOOTHLY: "Speed is low: please accelerate smoothly.",
    ControlAction.ACCELERATE: "Speed is low: please accelerate.",
}


@dataclass(frozen=True)
class FeedbackDecision:
    journey_id: str
    minute_start: object  # datetime of the event this decision answers
    verdict: Label
    vote_fraction: float
    action: ControlAction | None
    reason: Reason
    message: str
    crisp: float | None = None

    def __post_init__(self):
        if (self.action is None) != (self.verdict is Label.EFFICIENT):
            raise ValueError("an action is present exactly when the verdict is Inefficient")
        if (self.reason is Reason.IDLING) != (self.action is ControlAction.STOP_ENGINE):
            raise ValueError("reason Idling goes with StopEngine and nothing else")

    def to_dict(self) -> dict:
        return {
            "journey_id": self.journey_id,
            "minute_start": format_timestamp(self.minute_start),
            "verdict": self.verdict.value,
            "vote_fraction": self.vote_fraction,
            "action": None if self.action is None else self.action.value,
            "reason": self.reason.value,
            "message": self.message,
            "crisp": self.crisp,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeedbackDecision":
        return cls(
            journey_id=str(d["journey_id"]),
            minute_start=parse_timestamp(d["minute_start"]),
            verdict=Label(d["verdict"]),
            vote_fraction=float(d["vote_fraction"]),
            action=None if d["action"] is None else ControlAction(d["action"]),
            reason=Reason(d["reason"]),
            message=str(d["message"]),
            crisp=None if d.get("crisp") is None else float(d["crisp"]),
        )


def message_for(action: ControlAction | None) -> str:
    return "" if action is None else MESSAGES[action]


def format_feedback(decision: FeedbackDecision) -> str:
    """Advisory text for a decision; Efficient verdicts get an empty message."""
    return message_for(decision.action)


def _decide(
    event: DrivingEvent, verdict: Label, fraction: float, fuzzy_config: FuzzyConfig
) -> FeedbackDecision:
    crisp = None
    if verdict is Label.EFFICIENT:
        action, reason = None, Reason.NONE
    elif event.is_idling:
        action, reason = ControlAction.STOP_ENGINE, Reason.IDLING
    else:
        action, crisp = decide_action(event.avg_speed, event.avg_acceleration, fuzzy_config)
        reason = Reason.DRIVING_PATTERN
    return FeedbackDecision(
        event.journey_id,
        event.minute_start,
        verdict,
        float(fraction),
        action,
        reason,
        message_for(action),
        crisp,
    )


def evaluate_event(
    event: DrivingEvent, model: ForestModel, fuzzy_config: FuzzyConfig
) -> FeedbackDecision:
    labels, fractions = predict_many(model, [event])
    return _decide(event, labels[0], fractions[0], fuzzy_config)


def run_stream(
    events: Iterable[DrivingEvent],
    model: ForestModel,
    fuzzy_config: FuzzyConfig,
    sink: Callable[[FeedbackDecision], None] | None = None,
) -> list[FeedbackDecision]:
    """One decision per event, in input order, each handed to ``sink`` as it is made."""
    decisions = []
    for event in events:
        decision = evaluate_event(event, model, fuzzy_config)
        if sink is not None:
            sink(decision)
        decisions.append(decision)
    return decisions


def replay(
    events: Sequence[DrivingEvent], model: ForestModel, fuzzy_config: FuzzyConfig
) -> list[FeedbackDecision]:
    """Batch form of :func:`run_stream` that votes all events in one pass."""
    labels, fractions = predict_many(model, events)
    return [_decide(e, lab, q, fuzzy_config) for e, lab, q in zip(events, labels, fractions)]


def write_decisions(decisions: Iterable[FeedbackDecision], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        dump_jsonl((d.to_dict() for d in decisions), fh)


def read_decisions(path: str | Path) -> list[FeedbackDecision]:
    with open(path, encoding="utf-8") as fh:
        return [FeedbackDecision.from_dict(d) for d in iter_jsonl(fh)]
