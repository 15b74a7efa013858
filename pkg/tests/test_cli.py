"""Tests for the witnesskit command line."""
import json
from pathlib import Path

import pytest

from cli import cli
from store.files import JsonStore
from utils.config import settings


@pytest.fixture
def workdir(runner, tmp_path):
    with runner.isolated_filesystem(temp_dir=tmp_path) as path:
        yield Path(path)


def _run(runner, *args):
    return runner.invoke(cli, list(args), obj={})


def test_export_channel(runner, workdir):
    """export writes a loadable channel file."""
    result = _run(runner, "export", "identity", "id.json", "--d", "2")

    assert result.exit_code == 0, result.output
    channel = JsonStore(workdir).load_channel("id.json")
    assert channel.in_alg.blocks == (2,)


def test_check_incompatible_pair(runner, workdir):
    """Two qubit identities are reported incompatible and the report is saved."""
    _run(runner, "export", "identity", "id.json")

    result = _run(runner, "check", "id.json", "id.json", "--output", "report.json")

    assert result.exit_code == 0, result.output
    assert "INCOMPATIBLE" in result.output
    report = json.loads((workdir / "report.json").read_text())
    assert report["rows"][0]["value"] == "INCOMPATIBLE"
    assert report["diagnostics"]["status"] == "optimal"


def test_check_emits_joint(runner, workdir):
    """A compatible classical pair writes its joint channel."""
    _run(runner, "export", "identity_abelian", "c.json", "--d", "2")

    result = _run(runner, "check", "c.json", "c.json", "--emit-joint", "joint.json")

    assert result.exit_code == 0, result.output
    assert "COMPATIBLE" in result.output
    assert "INCOMPATIBLE" not in result.output
    joint = JsonStore(workdir).load_channel("joint.json")
    assert joint.out_alg.blocks == (1, 1, 1, 1)


def test_witness_eval_detects(runner, workdir):
    """ξ_mm detects the sharp MUB measurements."""
    _run(runner, "export", "xi_mm", "w.json")
    _run(runner, "export", "noisy_mub_channel", "a.json", "--gamma", "1.0", "--member", "1")
    _run(runner, "export", "noisy_mub_channel", "b.json", "--gamma", "1.0", "--member", "2")

    result = _run(runner, "witness", "eval", "w.json", "a.json", "b.json")

    assert result.exit_code == 0, result.output
    assert "True" in result.output


def test_witness_tighten_writes_witness(runner, workdir):
    """tighten leaves a witness, not a report, at --output."""
    _run(runner, "export", "xi_cc_clone", "w.json")

    result = _run(runner, "witness", "tighten", "w.json", "--output", "tight.json")

    assert result.exit_code == 0, result.output
    tight = JsonStore(workdir).load_witness("tight.json")
    assert tight.delta0 == pytest.approx(6.0, abs=1e-5)


def test_witness_to_task(runner, workdir):
    """to-task with the built-in IC readouts passes its own check."""
    _run(runner, "export", "xi_mm", "w.json")

    result = _run(runner, "witness", "to-task", "w.json", "--output", "task.json")

    assert result.exit_code == 0, result.output
    assert "PASS" in result.output
    assert JsonStore(workdir).load_task("task.json").m1.outcomes == ("a0", "a1")


def test_parse_error_exit_code(runner, workdir):
    """Malformed JSON exits with code 2."""
    (workdir / "bad.json").write_text("{\n")

    result = _run(runner, "check", "bad.json", "bad.json")

    assert result.exit_code == 2
    assert "PARSE_ERROR" in result.output


def test_algebra_mismatch_exit_code(runner, workdir):
    """Channels on different inputs are an input error."""
    _run(runner, "export", "identity", "q.json")
    _run(runner, "export", "identity_abelian", "c.json")

    result = _run(runner, "check", "q.json", "c.json")

    assert result.exit_code == 1
    assert "ALGEBRA_MISMATCH" in result.output


def test_reproduce_unknown_section(runner, workdir):
    """Only the known result sections are accepted."""
    result = _run(runner, "reproduce", "--section", "5")

    assert result.exit_code == 2


def test_scan_gamma_short(runner, workdir):
    """A short scan prints its rows and the boundary estimate."""
    result = _run(runner, "scan-gamma", "2", "--steps", "2")

    assert result.exit_code == 0, result.output
    assert "boundary estimate" in result.output


def test_timing_flag(runner, workdir):
    """--timing adds wall time to the report."""
    result = _run(runner, "--timing", "export", "xi_mm", "w.json")

    assert result.exit_code == 0, result.output
    assert "wall time" in result.output


def test_from_pair_on_compatible_inputs(runner, workdir):
    """from-pair refuses a compatible pair with an explicit message."""
    _run(runner, "export", "identity_abelian", "c.json")

    result = _run(runner, "witness", "from-pair", "c.json", "c.json", "--output", "w.json")

    assert result.exit_code == 1
    assert "PAIR_COMPATIBLE" in result.output
    assert not (workdir / "w.json").exists()


def test_check_dumps_sdp(runner, workdir):
    """--dump-sdp writes the compatibility program with its blocks and rows."""
    _run(runner, "export", "identity", "id.json")

    result = _run(runner, "check", "id.json", "id.json", "--dump-sdp", "sdp.json")

    assert result.exit_code == 0, result.output
    dump = json.loads((workdir / "sdp.json").read_text())
    assert set(dump) == {"blocks", "objective", "constraints", "rhs"}
    assert len(dump["rhs"]) == len(dump["constraints"][0])


def test_global_options_do_not_leak(runner, workdir):
    """--seed and --jobs apply to one invocation only."""
    before = settings.seed, settings.jobs

    result = _run(runner, "--seed", "7", "--jobs", "2", "export", "xi_mm", "w.json")

    assert result.exit_code == 0, result.output
    assert (settings.seed, settings.jobs) == before


def test_export_projection_pair_incompatible(runner, workdir):
    """The two projection channels are reported incompatible."""
    _run(runner, "export", "projection_channel", "p1.json", "--member", "1")
    _run(runner, "export", "projection_channel", "p2.json", "--member", "2")

    result = _run(runner, "check", "p1.json", "p2.json")

    assert result.exit_code == 0, result.output
    assert "INCOMPATIBLE" in result.output
