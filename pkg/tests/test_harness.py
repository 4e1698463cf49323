import json
import struct

import numpy as np
import pytest

from eventforest.errors import BadMagic, ConfigError, MismatchedStream, ShapeMismatch, TruncatedFile
from eventforest.harness import RunConfig, compare, load_config, read_stream, run, run_many, validate, write_stream
from eventforest.harness import cli, metrics
from eventforest.harness.config import dump_config, parse_config_text
from eventforest.harness.streamio import MAGIC, iter_stream, read_truth, write_truth
from eventforest.harness.validate import Check, ValidationReport
from eventforest.synth import StreamSpec, generate

TINY = dict(dim=8, tokens_per_frame=16, shortterm_frames=4, shortterm_tokens=4, budget=200,
            num_events=6, frames_min=4, frames_max=8)


def tiny(**changes):
    return RunConfig(**{**TINY, **changes})


def random_stream(rng, count, tokens, dim):
    times = np.cumsum(rng.uniform(0.1, 2.0, count))
    frames = rng.standard_normal((count, tokens, dim)).astype(np.float32)
    return times, frames


# -- binary stream format ------------------------------------------------------

def test_stream_round_trip_is_bit_exact(tmp_path, rng):
    path = tmp_path / "s.evmf"
    times, frames = random_stream(rng, 7, 5, 3)
    write_stream(path, times, frames)
    t2, f2 = read_stream(path)
    assert t2.tobytes() == times.tobytes() and f2.tobytes() == frames.tobytes()
    lazy = list(iter_stream(path))
    assert [t for t, _ in lazy] == times.tolist()
    assert all(np.array_equal(x, y) for (_, x), y in zip(lazy, frames))


def test_stream_layout_on_disk(tmp_path):
    path = tmp_path / "s.evmf"
    write_stream(path, [1.5], np.full((1, 2, 3), 0.25, dtype=np.float32))
    raw = path.read_bytes()
    assert raw[:8] == b"EVMF0001" and struct.unpack("<III", raw[8:20]) == (1, 2, 3)
    assert struct.unpack("<d", raw[20:28]) == (1.5,)
    assert np.frombuffer(raw[28:], dtype="<f4").tolist() == [0.25] * 6


def test_empty_stream(tmp_path):
    path = tmp_path / "e.evmf"
    write_stream(path, np.zeros(0), np.zeros((0, 4, 2), dtype=np.float32))
    times, frames = read_stream(path)
    assert len(times) == 0 and frames.shape == (0, 4, 2)


def test_bad_magic(tmp_path):
    path = tmp_path / "x.evmf"
    path.write_bytes(b"NOTMAGIC" + b"\0" * 40)
    with pytest.raises(BadMagic):
        read_stream(path)


def test_truncated_payload_and_header(tmp_path, rng):
    path = tmp_path / "t.evmf"
    write_stream(path, *random_stream(rng, 3, 4, 2))
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(TruncatedFile):
        read_stream(path)
    path.write_bytes(MAGIC + b"\1\0")
    with pytest.raises(TruncatedFile):
        read_stream(path)


def test_header_claiming_more_frames(tmp_path, rng):
    path = tmp_path / "m.evmf"
    write_stream(path, *random_stream(rng, 3, 4, 2))
    raw = bytearray(path.read_bytes())
    raw[8:12] = struct.pack("<I", 4)
    path.write_bytes(bytes(raw))
    with pytest.raises(TruncatedFile):
        read_stream(path)


def test_trailing_bytes_are_rejected(tmp_path, rng):
    path = tmp_path / "g.evmf"
    write_stream(path, *random_stream(rng, 2, 4, 2))
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(ShapeMismatch):
        read_stream(path)


def test_write_rejects_misshaped_input(tmp_path):
    with pytest.raises(ShapeMismatch):
        write_stream(tmp_path / "x", [1.0, 2.0], np.zeros((1, 2, 2), dtype=np.float32))


def test_truth_sidecar(tmp_path):
    _, _, truth = generate(StreamSpec(seed=1, num_events=3, d=4, tokens_per_frame=4))
    write_truth(tmp_path / "s.evmf", truth)
    assert read_truth(tmp_path / "s.evmf").to_dict() == truth.to_dict()
    assert read_truth(tmp_path / "missing.evmf") is None


# -- configuration -------------------------------------------------------------

def test_config_text_parsing():
    text = "# comment\npolicy = fifo  # trailing\n\nw-s = 0.5\nbudget=4096\nstream = a b.evmf\n"
    assert parse_config_text(text) == {"policy": "fifo", "w_s": 0.5, "budget": 4096, "stream": "a b.evmf"}


@pytest.mark.parametrize("text", ["nokey", "colour = red", "budget = lots"])
def test_config_text_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("policy = uniform\nseed = 4\n")
    cfg = load_config(path, seed=9, budget=None)
    assert (cfg.policy, cfg.seed, cfg.budget) == ("uniform", 9, 8192)
    assert load_config(None, **parse_config_text(dump_config(cfg))) == cfg


def test_default_forest_budget():
    assert RunConfig().forest_budget(729) == 5159
    assert RunConfig().forest_budget() == 8192 - 256 - 18 * 128


@pytest.mark.parametrize("changes", [dict(policy="lru"), dict(w_s=0, w_m=0, w_t=0), dict(w_m=-1)])
def test_invalid_config_values(changes):
    with pytest.raises(ConfigError):
        RunConfig(**changes)


def test_budget_must_leave_room_for_memory():
    with pytest.raises(ConfigError):
        RunConfig(budget=3033).forest_budget(729)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")


# -- metrics -------------------------------------------------------------------

def test_metric_helpers():
    assert metrics.compression_ratio(1024, 2048 * 256) == 1 - 1024 / 524288
    assert metrics.compression_ratio(0, 0) == 0.0
    assert metrics.event_recall([(1, 3), (4, 6), (7, 9)], [(2, 2), (8, 12)]) == 2 / 3
    assert metrics.event_recall([(1, 3)], []) == 0.0
    curve = metrics.retention_curve(np.arange(20.0))
    assert len(curve) == 10 and curve[0] == 0.5 and curve[-1] == 18.5
    assert metrics.first_third(np.array([3.0, 0, 0, 0, 0, 0])) == 1.5
    got = metrics.best_match(np.array([[1.0, 0], [0, 1]]), np.array([[2.0, 0], [1, 1]]))
    np.testing.assert_allclose(got, [1.0, np.sqrt(0.5)])


# -- run / compare -------------------------------------------------------------

def test_small_stream_under_a_huge_budget_keeps_everything():
    # short-term frames kept at full resolution, so nothing is pooled either
    rec = run(tiny(num_frames=10, num_events=2, budget=10 ** 6, shortterm_tokens=16))
    assert rec.snapshot_tokens == rec.raw_tokens == 160 and rec.compression_ratio == 0.0


def test_run_is_deterministic_and_writes_outputs(tmp_path):
    cfg = tiny(out=str(tmp_path / "m.json"), per_step=str(tmp_path / "s.csv"))
    a, b = run(cfg), run(cfg)
    assert a.to_json(timing=False) == b.to_json(timing=False)
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["policy"] == "pemf" and "timing" in doc and doc["budget_violations"] == 0
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "step,time,window_tokens,memory_tokens,snapshot_tokens"
    assert len(lines) == a.frames + 1
    assert max(int(l.split(",")[-1]) for l in lines[1:]) == a.max_step_tokens <= 200


def test_run_reads_a_binary_stream(tmp_path):
    cfg = tiny()
    times, frames, truth = generate(cfg.stream_spec())
    path = str(tmp_path / "s.evmf")
    write_stream(path, times, frames)
    write_truth(path, truth)
    from_file = run(tiny(stream=path))
    assert from_file.to_json(timing=False) == run(cfg).to_json(timing=False)


def test_similarity_only_forest_and_similarity_merge_share_a_row():
    table = compare([tiny(policy="pemf", w_s=1, w_m=0, w_t=0), tiny(policy="similarity_merge")])
    a, b = table.rows
    assert a[4:] == b[4:]
    assert table.to_csv().count("\n") == 3 and "similarity_merge" in table.to_text()


def test_single_policy_table_matches_run():
    cfg = tiny(policy="uniform")
    (row,) = compare([cfg]).rows
    rec = run(cfg)
    assert row == [rec.policy, *rec.weights, rec.compression_ratio, rec.event_recall,
                   rec.retention_first_third, *rec.retention_curve]


def test_compare_rejects_mismatched_streams():
    with pytest.raises(MismatchedStream):
        compare([tiny(), tiny(seed=1)])
    with pytest.raises(MismatchedStream):
        compare([tiny(), tiny(budget=300)])


def test_pemf_keeps_early_stream_better_than_fifo():
    records, _, _ = run_many([RunConfig(policy="pemf", seed=3), RunConfig(policy="fifo", seed=3)])
    pemf, fifo = records
    assert pemf.retention_curve[0] > fifo.retention_curve[0]
    assert pemf.budget_violations == fifo.budget_violations == 0


# -- validate ------------------------------------------------------------------

def test_validate_defaults_on_five_hundred_frames():
    report = validate(RunConfig(num_frames=500, dim=16, tokens_per_frame=64, shortterm_tokens=16))
    assert report.passed, report.to_text()
    names = {c.name: c.passed for c in report.checks}
    assert all(names[k] for k in ("pair_selection_scan", "tome_grouping", "timestamp_mean", "budget_audit"))


def test_validate_catches_a_corrupted_forest():
    report = validate(tiny(num_frames=80), corrupt="budget")
    assert not report.passed
    assert [c.name for c in report.checks if c.passed is False] == ["budget_audit"]


def test_validate_degenerate_weights():
    report = validate(tiny(num_frames=120, w_s=0, w_m=0, w_t=1))
    assert report.passed and {c.name: c.passed for c in report.checks}["fifo_degeneration"] is True
    report = validate(tiny(num_frames=120, w_s=1, w_m=0, w_t=0))
    assert report.passed and {c.name: c.passed for c in report.checks}["similarity_degeneration"] is True


# -- command line --------------------------------------------------------------

def tiny_flags(**extra):
    flags = []
    for k, v in {**TINY, **extra}.items():
        flags += ["--" + k.replace("_", "-"), str(v)]
    return flags


def test_cli_gen_run_compare_validate(tmp_path, capsys):
    path = str(tmp_path / "s.evmf")
    assert cli.main(["gen", "--out", path] + tiny_flags()) == 0
    assert json.loads(capsys.readouterr().out)["frames"] == len(read_stream(path)[0])

    out = tmp_path / "m.json"
    assert cli.main(["run", "--stream", path, "--out", str(out), "--per-step", str(tmp_path / "s.csv")]
                    + tiny_flags()) == 0
    assert json.loads(out.read_text())["frames"] == len(read_stream(path)[0])

    assert cli.main(["compare", "--stream", path, "--policies", "pemf,fifo", "--out", str(tmp_path / "c.csv")]
                    + tiny_flags()) == 0
    assert "fifo" in capsys.readouterr().out
    assert (tmp_path / "c.csv").read_text().startswith("policy,")

    assert cli.main(["validate", "--stream", path, "--max-frames", "40"] + tiny_flags()) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_cli_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("policy = fifo\nnum_frames = 30\n")
    assert cli.main(["run", "--config", str(cfg), "--policy", "uniform"] + tiny_flags()) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["policy"] == "uniform" and doc["frames"] == 30


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    assert cli.main(["run", "--policy", "lru"]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"
    assert cli.main(["run", "--budget", "100"]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
    capsys.readouterr()
    bad = tmp_path / "bad.evmf"
    bad.write_bytes(b"garbage!" * 4)
    assert cli.main(["run", "--stream", str(bad)]) == 3
    assert json.loads(capsys.readouterr().err)["error"] == "BadMagic"
    assert cli.main(["run", "--stream", str(tmp_path / "absent.evmf")]) == 3
    monkeypatch.setattr(cli, "validate", lambda *a, **k: ValidationReport([Check("budget_audit", False)]))
    assert cli.main(["validate"] + tiny_flags()) == 4
