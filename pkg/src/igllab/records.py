"""Line-delimited interaction-record files for off-policy replay.

One JSON object per line, schema_version 1. Reals are serialized with
Python's shortest round-trip representation, so a write/read cycle
reproduces every float bit-exactly. Each line parses independently; the
reader yields records as it goes and raises on the first bad line, naming
it.

Record object keys::

    schema_version   1
    dimension        size of the shared feature index space
    context          {"user_id": int, "features": {"idx": value, ...}}
    actions          [{"action_id": int, "features": {...}}, ...]
    chosen_index     int
    behavior_probs   [float, ...]
    feedback_signal  int
    latent_reward    -1 | 0 | 1, omitted when unknown

Conformance fixtures (valid and invalid files) live under
``tests/data/records``.
"""

from __future__ import annotations

import json
from typing import IO, Iterable, Iterator

from .core import (
    ActionSet,
    Context,
    Feedback,
    FeatureVector,
    InteractionRecord,
    LatentReward,
    PolicyDistribution,
    ValidationError as CoreValidationError,
    validate_record,
)

SCHEMA_VERSION = 1


class SinkError(Exception):
    """Writing to the output sink failed."""


class ParseError(Exception):
    """A line is not a well-formed record object."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(Exception):
    """A parsed record violates a domain invariant; names the line."""

    def __init__(self, line: int, cause: CoreValidationError):
        super().__init__(f"line {line}: {cause}")
        self.line = line
        self.cause = cause


def _features_obj(fv: FeatureVector) -> dict:
    return {str(i): v for i, v in fv.items()}


def _features_from_obj(obj: dict, dimension: int) -> FeatureVector:
    return FeatureVector.from_pairs(
        ((int(k), float(v)) for k, v in obj.items()), dimension
    )


def record_to_json(rec: InteractionRecord) -> str:
    obj = {
        "schema_version": SCHEMA_VERSION,
        "dimension": rec.context.features.dimension,
        "context": {
            "user_id": rec.context.user_id,
            "features": _features_obj(rec.context.features),
        },
        "actions": [
            {"action_id": aid, "features": _features_obj(fv)}
            for aid, fv in zip(rec.action_set.action_ids, rec.action_set.features)
        ],
        "chosen_index": rec.chosen_index,
        "behavior_probs": list(rec.behavior_probs.probs),
        "feedback_signal": rec.feedback.signal_id,
    }
    if rec.latent_reward is not None:
        obj["latent_reward"] = int(rec.latent_reward)
    return json.dumps(obj, separators=(",", ":"))


def record_from_json(line: str, line_no: int = 0) -> InteractionRecord:
    try:
        obj = json.loads(line)
        if not isinstance(obj, dict):
            raise TypeError("record line must be a JSON object")
        version = obj["schema_version"]
        if version != SCHEMA_VERSION:
            raise TypeError(f"unsupported schema_version {version}")
        dim = int(obj["dimension"])
        ctx = obj["context"]
        context = Context(int(ctx["user_id"]), _features_from_obj(ctx["features"], dim))
        actions = ActionSet(
            tuple(int(a["action_id"]) for a in obj["actions"]),
            tuple(_features_from_obj(a["features"], dim) for a in obj["actions"]),
        )
        latent = obj.get("latent_reward")
        return InteractionRecord(
            context=context,
            action_set=actions,
            chosen_index=int(obj["chosen_index"]),
            behavior_probs=PolicyDistribution.from_array(obj["behavior_probs"]),
            feedback=Feedback(int(obj["feedback_signal"])),
            latent_reward=None if latent is None else LatentReward(latent),
        )
    except CoreValidationError:
        raise
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as err:
        raise ParseError(line_no, str(err)) from err


def write_records(records: Iterable[InteractionRecord], sink: IO[str] | str) -> int:
    """Write one validated record per line; returns the count written."""
    if isinstance(sink, str):
        with open(sink, "w", encoding="utf-8") as fh:
            return write_records(records, fh)
    count = 0
    for rec in records:
        validate_record(rec)
        try:
            sink.write(record_to_json(rec))
            sink.write("\n")
        except OSError as err:
            raise SinkError(str(err)) from err
        count += 1
    return count


def read_records(source: IO[str] | str) -> Iterator[InteractionRecord]:
    """Yield validated records in file order.

    Raises :class:`ParseError` or :class:`ValidationError` naming the
    offending line; records before it have already been yielded.
    """
    if isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            yield from read_records(fh)
        return
    for line_no, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            rec = record_from_json(line, line_no)
            validate_record(rec)
        except CoreValidationError as err:
            raise ValidationError(line_no, err) from err
        yield rec
