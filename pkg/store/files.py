"""JSON file layer for algebras, measurements, channels, witnesses, tasks and reports."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, TypeVar

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, ValidationError, field_validator

from models.algebra import Algebra, AlgebraElement, Measurement, StateEnsemble, StateFunctional
from models.channels import Channel
from models.witness import DiscriminationTask, WitnessForm
from solver.sdp import SdpProblem
from utils.errors import FieldViolation, ParseError, ReasonCodes, abort
from utils.report import RunReport

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)

MatrixJson = list[list[tuple[float, float]]]


class StoreError(Exception):
    """Raised when a file cannot be read or written at all."""
    pass


def encode_matrix(m: np.ndarray) -> MatrixJson:
    arr = np.asarray(m, dtype=complex)
    return [[(float(v.real), float(v.imag)) for v in row] for row in arr]


def decode_matrix(data: MatrixJson) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


class _Schema(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")


class AlgebraSchema(_Schema):
    blocks: list[PositiveInt] = Field(min_length=1)

    def build(self) -> Algebra:
        return Algebra(tuple(self.blocks))

    @classmethod
    def of(cls, a: Algebra) -> AlgebraSchema:
        return cls(blocks=list(a.blocks))


def _check_square(m: MatrixJson) -> MatrixJson:
    if any(len(row) != len(m) for row in m):
        raise ValueError("matrix must be square with [re, im] entries")
    return m


class BlocksSchema(_Schema):
    """Per-block matrices of an element or functional."""

    blocks: list[MatrixJson]

    @field_validator("blocks")
    @classmethod
    def square(cls, v):
        return [_check_square(m) for m in v]

    def matrices(self) -> list[np.ndarray]:
        return [decode_matrix(m) for m in self.blocks]

    @classmethod
    def of(cls, blocks) -> BlocksSchema:
        return cls(blocks=[encode_matrix(b) for b in blocks])


class MeasurementSchema(_Schema):
    algebra: AlgebraSchema
    effects: dict[str, BlocksSchema] = Field(min_length=1)

    def build(self) -> Measurement:
        a = self.algebra.build()
        effects = tuple(AlgebraElement(a, tuple(e.matrices())) for e in self.effects.values())
        return Measurement(a, tuple(self.effects), effects)

    @classmethod
    def of(cls, m: Measurement) -> MeasurementSchema:
        return cls(
            algebra=AlgebraSchema.of(m.algebra),
            effects={x: BlocksSchema.of(e.blocks) for x, e in zip(m.outcomes, m.effects)},
        )


class ChannelSchema(_Schema):
    in_alg: AlgebraSchema = Field(alias="in")
    out_alg: AlgebraSchema = Field(alias="out")
    choi: dict[str, MatrixJson]

    @field_validator("choi")
    @classmethod
    def keys_and_shapes(cls, v):
        for key, m in v.items():
            parts = key.split(",")
            if len(parts) != 2 or not all(p.strip().isdigit() for p in parts):
                raise ValueError(f"choi key {key!r} must look like 'i,j'")
            _check_square(m)
        return v

    def build(self) -> Channel:
        choi = {}
        for key, m in self.choi.items():
            i, j = (int(p) for p in key.split(","))
            choi[(i, j)] = decode_matrix(m)
        return Channel(self.in_alg.build(), self.out_alg.build(), choi)

    @classmethod
    def of(cls, c: Channel) -> ChannelSchema:
        return cls(
            in_alg=AlgebraSchema.of(c.in_alg),
            out_alg=AlgebraSchema.of(c.out_alg),
            choi={f"{i},{j}": encode_matrix(b) for (i, j), b in sorted(c.choi.items())},
        )


class WitnessSchema(_Schema):
    in_alg: AlgebraSchema = Field(alias="in")
    out1: AlgebraSchema
    out2: AlgebraSchema
    delta0: float
    phi1: list[tuple[BlocksSchema, BlocksSchema]]
    phi2: list[tuple[BlocksSchema, BlocksSchema]]

    def build(self) -> WitnessForm:
        a, b1, b2 = self.in_alg.build(), self.out1.build(), self.out2.build()

        def terms(raw, out):
            return tuple(
                (StateFunctional(a, tuple(s.matrices())), AlgebraElement(out, tuple(e.matrices())))
                for s, e in raw
            )

        return WitnessForm(a, (b1, b2), self.delta0, terms(self.phi1, b1), terms(self.phi2, b2))

    @classmethod
    def of(cls, w: WitnessForm) -> WitnessSchema:
        def terms(raw):
            return [(BlocksSchema.of(s.blocks), BlocksSchema.of(e.blocks)) for s, e in raw]

        return cls(
            in_alg=AlgebraSchema.of(w.in_alg),
            out1=AlgebraSchema.of(w.out_algs[0]),
            out2=AlgebraSchema.of(w.out_algs[1]),
            delta0=w.delta0,
            phi1=terms(w.phi1),
            phi2=terms(w.phi2),
        )


class TaskSchema(_Schema):
    in_alg: AlgebraSchema = Field(alias="in")
    ensemble: dict[str, BlocksSchema]
    m1: MeasurementSchema
    m2: MeasurementSchema

    def build(self) -> DiscriminationTask:
        a = self.in_alg.build()
        ensemble = StateEnsemble(
            a,
            tuple(self.ensemble),
            tuple(StateFunctional(a, tuple(s.matrices())) for s in self.ensemble.values()),
        )
        return DiscriminationTask(ensemble, self.m1.build(), self.m2.build())

    @classmethod
    def of(cls, t: DiscriminationTask) -> TaskSchema:
        return cls(
            in_alg=AlgebraSchema.of(t.in_alg),
            ensemble={z: BlocksSchema.of(s.blocks) for z, s in zip(t.ensemble.labels, t.ensemble.states)},
            m1=MeasurementSchema.of(t.m1),
            m2=MeasurementSchema.of(t.m2),
        )


def _violations(e: ValidationError) -> list[FieldViolation]:
    return [FieldViolation(".".join(str(p) for p in err["loc"]) or "<root>", err["msg"]) for err in e.errors()]


def parse_text(text: str, schema: type[M], source: str = "<input>") -> M:
    """Decode JSON text against ``schema``; syntax and schema errors become ParseError."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        abort(ParseError, ReasonCodes.PARSE_ERROR, f"{source}:{e.lineno}:{e.colno}: {e.msg}")
    try:
        return schema.model_validate(data)
    except ValidationError as e:
        abort(ParseError, ReasonCodes.PARSE_ERROR, f"{source}: does not match the {schema.__name__} layout", fields=_violations(e))


class JsonStore:
    def __init__(self, root: str | Path = "."):
        self.root = Path(root)

    def path(self, name: str | Path) -> Path:
        p = Path(name)
        return p if p.is_absolute() else self.root / p

    def _read(self, name: str | Path, schema: type[M]) -> M:
        path = self.path(name)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise StoreError(f"Cannot read {path}: {e}") from e
        return parse_text(text, schema, str(path))

    def _write(self, name: str | Path, payload: Any) -> Path:
        path = self.path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(payload, BaseModel):
            text = payload.model_dump_json(indent=2, by_alias=True)
        else:
            text = json.dumps(payload, indent=2)
        path.write_text(text + "\n", encoding="utf-8")
        logger.info(f"wrote {path}")
        return path

    # ============ Measurement Methods ============

    def load_measurement(self, name) -> Measurement:
        return self._read(name, MeasurementSchema).build()

    def save_measurement(self, m: Measurement, name) -> Path:
        return self._write(name, MeasurementSchema.of(m))

    # ============ Channel Methods ============

    def load_channel(self, name) -> Channel:
        return self._read(name, ChannelSchema).build()

    def save_channel(self, c: Channel, name) -> Path:
        return self._write(name, ChannelSchema.of(c))

    # ============ Witness Methods ============

    def load_witness(self, name) -> WitnessForm:
        return self._read(name, WitnessSchema).build()

    def save_witness(self, w: WitnessForm, name) -> Path:
        return self._write(name, WitnessSchema.of(w))

    def load_task(self, name) -> DiscriminationTask:
        return self._read(name, TaskSchema).build()

    def save_task(self, t: DiscriminationTask, name) -> Path:
        return self._write(name, TaskSchema.of(t))

    # ============ Report Methods ============

    def save_report(self, report: RunReport, name) -> Path:
        return self._write(name, report)

    def save_problem(self, p: SdpProblem, name) -> Path:
        """Debug dump of an SDP for cross-checking with an external solver."""
        return self._write(name, p.to_dict())
