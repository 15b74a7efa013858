"""Tests for the JSON file layer."""
import json

import numpy as np
import pytest

from models.algebra import Algebra, ic_povm
from models.channels import identity_channel, random_channel
from services.catalog import xi_cc_clone, xi_mm
from services.witnesses import evaluate, task_from_witness
from store.files import AlgebraSchema, ChannelSchema, StoreError, decode_matrix, encode_matrix, parse_text
from utils.errors import ParseError, ReasonCodes
from utils.report import RunReport


def test_matrix_encoding_keeps_complex_entries():
    """Entries are written as [re, im] pairs."""
    m = np.array([[1.0, 2j], [-2j, 0.5]])

    encoded = encode_matrix(m)

    assert encoded[0][1] == (0.0, 2.0)
    assert np.array_equal(decode_matrix(encoded), m)


def test_channel_save_load(store, rng, mixed_algebra):
    """A channel between block algebras survives a save/load cycle."""
    c = random_channel(mixed_algebra, Algebra.abelian(2), rng)

    store.save_channel(c, "c.json")
    loaded = store.load_channel("c.json")

    assert loaded.in_alg == c.in_alg
    assert loaded.out_alg == c.out_alg
    for key in c.keys():
        assert np.allclose(loaded.choi[key], c.choi[key], atol=1e-15)


def test_channel_file_layout(store, qubit):
    """Channel files carry in/out algebras and 'i,j' keyed Choi blocks."""
    path = store.save_channel(identity_channel(qubit), "id.json")

    data = json.loads(path.read_text())

    assert data["in"] == {"blocks": [2]}
    assert data["out"] == {"blocks": [2]}
    assert list(data["choi"]) == ["0,0"]


def test_witness_save_load(store, rng, qubit):
    """A stored witness evaluates exactly like the original."""
    w = xi_cc_clone(2)
    c1, c2 = random_channel(qubit, qubit, rng), random_channel(qubit, qubit, rng)

    store.save_witness(w, "w.json")
    loaded = store.load_witness("w.json")

    assert loaded.delta0 == w.delta0
    assert evaluate(loaded, c1, c2) == pytest.approx(evaluate(w, c1, c2), abs=1e-12)


def test_measurement_save_load(store, mixed_algebra):
    """Outcome labels and effects are preserved."""
    m = ic_povm(mixed_algebra, prefix="a")

    store.save_measurement(m, "m.json")
    loaded = store.load_measurement("m.json")

    assert loaded.outcomes == m.outcomes
    assert all(np.allclose(a.blocks[0], b.blocks[0]) for a, b in zip(loaded.effects, m.effects))


def test_task_save_load(store):
    """Tasks keep their ensemble and readouts."""
    out = Algebra.abelian(2)
    task = task_from_witness(xi_mm(2), ic_povm(out, prefix="a"), ic_povm(out, prefix="b")).task

    store.save_task(task, "t.json")
    loaded = store.load_task("t.json")

    assert loaded.ensemble.labels == task.ensemble.labels
    assert loaded.m2.outcomes == task.m2.outcomes
    assert loaded.ensemble.probability("b1") == pytest.approx(task.ensemble.probability("b1"))


def test_report_written(store):
    """Reports are stored as JSON documents."""
    report = RunReport(command="check")
    report.add("e*", 0.25)

    path = store.save_report(report, "out/report.json")

    assert json.loads(path.read_text())["rows"][0]["value"] == 0.25


def test_parse_error_has_position():
    """Syntax errors point at line and column."""
    with pytest.raises(ParseError) as exc_info:
        parse_text('{\n  "blocks": [2,\n}', AlgebraSchema, "alg.json")

    assert exc_info.value.reason == ReasonCodes.PARSE_ERROR
    assert "alg.json:3:1:" in exc_info.value.message


def test_schema_violation_lists_fields():
    """Non-positive block sizes are reported per field."""
    with pytest.raises(ParseError) as exc_info:
        parse_text('{"blocks": [2, 0]}', AlgebraSchema)

    assert [f.field for f in exc_info.value.fields] == ["blocks.1"]


def test_unknown_keys_rejected():
    """Extra top-level keys are not silently ignored."""
    with pytest.raises(ParseError):
        parse_text('{"blocks": [2], "colour": "red"}', AlgebraSchema)


def test_bad_choi_key_rejected():
    """Choi keys must look like 'i,j'."""
    text = json.dumps({"in": {"blocks": [1]}, "out": {"blocks": [1]}, "choi": {"0-0": [[[1.0, 0.0]]]}})

    with pytest.raises(ParseError):
        parse_text(text, ChannelSchema)


def test_non_square_matrix_rejected():
    """Choi blocks must be square."""
    text = json.dumps({"in": {"blocks": [1]}, "out": {"blocks": [2]}, "choi": {"0,0": [[[1.0, 0.0], [0.0, 0.0]]]}})

    with pytest.raises(ParseError):
        parse_text(text, ChannelSchema)


def test_missing_file(store):
    """Unreadable paths raise StoreError."""
    with pytest.raises(StoreError):
        store.load_channel("nope.json")
