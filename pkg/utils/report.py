"""Structured run reports printed and saved by the command line."""
from __future__ import annotations

import hashlib
from typing import Any

from pydantic import BaseModel, Field


class ReportRow(BaseModel):
    name: str
    value: Any = None
    expected: Any = None
    passed: bool | None = None
    detail: str = ""


class RunReport(BaseModel):
    command: str
    inputs_digest: str = ""
    rows: list[ReportRow] = Field(default_factory=list)
    diagnostics: dict[str, Any] = Field(default_factory=dict)
    wall_time: float | None = None

    def add(self, name: str, value: Any = None, expected: Any = None, passed: bool | None = None, detail: str = "") -> ReportRow:
        row = ReportRow(name=name, value=value, expected=expected, passed=passed, detail=detail)
        self.rows.append(row)
        return row

    @property
    def ok(self) -> bool:
        return all(r.passed is not False for r in self.rows)

    def render(self) -> str:
        width = max([len(r.name) for r in self.rows] + [4])
        lines = [f"# {self.command}"]
        for r in self.rows:
            status = "" if r.passed is None else ("PASS" if r.passed else "FAIL")
            value = f"{r.value:.10g}" if isinstance(r.value, float) else ("" if r.value is None else str(r.value))
            line = f"{r.name:<{width}}  {value:<20} {status}".rstrip()
            if r.detail:
                line += f"  ({r.detail})"
            lines.append(line)
        if self.wall_time is not None:
            lines.append(f"wall time: {self.wall_time:.3f}s")
        return "\n".join(lines)


def digest(*chunks: bytes | str) -> str:
    h = hashlib.sha256()
    for chunk in chunks:
        h.update(chunk.encode() if isinstance(chunk, str) else chunk)
    return h.hexdigest()[:16]
