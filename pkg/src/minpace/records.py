"""Logged tick records and their JSONL representation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

_CORE = ("t", "alpha", "I", "cost", "value")


class RecordError(ValueError):
    """Malformed or invalid tick log line."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class TickRecord:
    t: int
    alpha: float
    I: int
    cost: float
    value: float
    features: tuple | None = None
    extra: dict = field(default_factory=dict, compare=True)

    def __post_init__(self):
        if self.I < 1:
            raise RecordError(f"opportunity count must be >= 1, got {self.I}")
        if self.cost < 0 or self.value < 0:
            raise RecordError("cost and value must be non-negative")
        if self.alpha < 0:
            raise RecordError("alpha must be non-negative")

    @property
    def cost_per_opp(self):
        return self.cost / self.I

    @property
    def value_per_opp(self):
        return self.value / self.I

    def to_dict(self):
        d = {"t": self.t, "alpha": self.alpha, "I": self.I, "cost": self.cost, "value": self.value}
        if self.features is not None:
            d["features"] = list(self.features)
        d.update(self.extra)
        return d

    @classmethod
    def from_dict(cls, d):
        missing = [k for k in _CORE if k not in d]
        if missing:
            raise RecordError(f"missing fields {missing}")
        extra = {k: v for k, v in d.items() if k not in _CORE and k != "features"}
        feats = d.get("features")
        I = d["I"]
        if isinstance(I, float) and I.is_integer():
            I = int(I)
        if not isinstance(I, int) or isinstance(I, bool):
            raise RecordError(f"I must be an integer, got {I!r}")
        return cls(
            t=int(d["t"]),
            alpha=float(d["alpha"]),
            I=I,
            cost=float(d["cost"]),
            value=float(d["value"]),
            features=tuple(feats) if feats is not None else None,
            extra=extra,
        )


def write_tick_log(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_tick_log(path):
    """Read a JSONL tick log; errors name the offending (1-based) line."""
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordError(f"invalid JSON ({exc.msg})", lineno) from None
        if not isinstance(d, dict):
            raise RecordError("expected a JSON object", lineno)
        try:
            out.append(TickRecord.from_dict(d))
        except (RecordError, TypeError, ValueError) as exc:
            msg = str(exc) if not isinstance(exc, RecordError) else exc.args[0]
            raise RecordError(msg, lineno) from None
    return out
