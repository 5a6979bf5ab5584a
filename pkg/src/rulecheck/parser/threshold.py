from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ThresholdError

THRESHOLD_TYPES = ("limit", "threshold", "both")
TRACK_MODES = ("by_src", "by_dst", "by_rule", "by_both")


@dataclass(frozen=True)
class ThresholdSpec:
    type: str
    track: str
    count: int
    seconds: int


def parse_threshold(raw: str, keyword: str = "threshold") -> ThresholdSpec:
    """Parse a ``threshold`` or ``detection_filter`` value.

    ``detection_filter`` carries no ``type`` token and is reported as
    type ``threshold``. Stray commas between a key and its value
    (``seconds, 60``) are tolerated.
    """
    tokens = [t for t in re.split(r"[\s,]+", raw.strip()) if t]
    if len(tokens) % 2:
        raise ThresholdError(f"unpaired token in {raw!r}")
    fields: dict[str, str] = {}
    for key, value in zip(tokens[::2], tokens[1::2]):
        if key not in ("type", "track", "count", "seconds"):
            raise ThresholdError(f"unknown threshold key {key!r}")
        if key in fields:
            raise ThresholdError(f"duplicate threshold key {key!r}")
        fields[key] = value
    if keyword == "detection_filter":
        if "type" in fields:
            raise ThresholdError("detection_filter does not take a type")
        fields["type"] = "threshold"
    missing = {"type", "track", "count", "seconds"} - fields.keys()
    if missing:
        raise ThresholdError(f"missing {', '.join(sorted(missing))} in {raw!r}")
    if fields["type"] not in THRESHOLD_TYPES:
        raise ThresholdError(f"unknown threshold type {fields['type']!r}")
    if fields["track"] not in TRACK_MODES:
        raise ThresholdError(f"unknown track mode {fields['track']!r}")
    try:
        count = int(fields["count"])
        seconds = int(fields["seconds"])
    except ValueError:
        raise ThresholdError(f"non-integer count/seconds in {raw!r}") from None
    if count < 1:
        raise ThresholdError("count must be >= 1")
    if seconds < 1:
        raise ThresholdError("seconds must be >= 1")
    return ThresholdSpec(fields["type"], fields["track"], count, seconds)
