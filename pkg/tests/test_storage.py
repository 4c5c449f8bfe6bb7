import json

import numpy as np
import pytest

from backflow.errors import DatasetCorruptionError, DomainError, FormatVersionError
from backflow.forward import TimeGrid, generate_batch
from backflow.harness import ComponentStats, SweepResult, TrialResult, TrialStatistics
from backflow.scorenet import Architecture, NormStats, TrainingReport, init_model
from backflow.storage import (
    dataset_hash,
    load_checkpoint,
    read_dataset,
    read_predictions,
    read_results_csv,
    read_trials_csv,
    save_checkpoint,
    write_dataset,
    write_predictions,
    write_results_csv,
    write_trials_csv,
)
from backflow.strain import FlowKind, StrainConfig

PLANAR = StrainConfig(kind=FlowKind.PLANAR_2D, a=1.0, nu=1.0)
GRID = TimeGrid(t_final=1.0, n_points=12)


@pytest.fixture
def batch():
    return generate_batch(PLANAR, GRID, scale=1.0, n_samples=6, rng=3)


@pytest.fixture
def model():
    grid = TimeGrid(t_final=1.0, n_points=12)
    return init_model(grid, NormStats.identity(), seed=5, arch=Architecture(8, 16, 2, 8))


class TestDataset:
    def test_round_trip_bit_identical(self, tmp_path, batch):
        path = tmp_path / "data.f64"
        digest = write_dataset(path, batch)
        loaded, meta = read_dataset(path)
        assert np.array_equal(loaded.states, batch.states)
        assert loaded.states.dtype == np.float64
        assert loaded.cfg == batch.cfg
        assert loaded.grid == batch.grid
        assert (loaded.scale, loaded.seed, loaded.attempts) == (
            batch.scale, batch.seed, batch.attempts)
        assert meta["content_hash"] == digest == dataset_hash(batch)

    def test_rewrite_is_byte_identical(self, tmp_path, batch):
        p1, p2 = tmp_path / "a.f64", tmp_path / "b.f64"
        write_dataset(p1, batch)
        write_dataset(p2, batch)
        assert p1.read_bytes() == p2.read_bytes()
        assert (tmp_path / "a.f64.json").read_text() == (tmp_path / "b.f64.json").read_text()

    def test_truncated_payload(self, tmp_path, batch):
        path = tmp_path / "data.f64"
        write_dataset(path, batch)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(DatasetCorruptionError, match="truncated"):
            read_dataset(path)

    def test_payload_tamper(self, tmp_path, batch):
        path = tmp_path / "data.f64"
        write_dataset(path, batch)
        raw = bytearray(path.read_bytes())
        raw[0] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(DatasetCorruptionError, match="hash mismatch"):
            read_dataset(path)

    def test_sidecar_tamper(self, tmp_path, batch):
        path = tmp_path / "data.f64"
        write_dataset(path, batch)
        sidecar = tmp_path / "data.f64.json"
        meta = json.loads(sidecar.read_text())
        meta["seed"] = 999
        sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True))
        with pytest.raises(DatasetCorruptionError, match="hash mismatch"):
            read_dataset(path)

    def test_version_gate(self, tmp_path, batch):
        path = tmp_path / "data.f64"
        write_dataset(path, batch)
        sidecar = tmp_path / "data.f64.json"
        meta = json.loads(sidecar.read_text())
        meta["format_version"] = 99
        sidecar.write_text(json.dumps(meta))
        with pytest.raises(FormatVersionError):
            read_dataset(path)

    def test_missing_files(self, tmp_path, batch):
        with pytest.raises(FileNotFoundError):
            read_dataset(tmp_path / "absent.f64")
        path = tmp_path / "data.f64"
        write_dataset(path, batch)
        (tmp_path / "data.f64.json").unlink()
        with pytest.raises(FileNotFoundError, match="sidecar"):
            read_dataset(path)


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path, model):
        path = tmp_path / "model.json"
        save_checkpoint(path, model, dataset_hash="abc123")
        loaded, doc = load_checkpoint(path)
        for w1, w2 in zip(model.weights, loaded.weights):
            assert np.array_equal(w1, w2)
        for b1, b2 in zip(model.biases, loaded.biases):
            assert np.array_equal(b1, b2)
        assert np.array_equal(model.embed.frequencies, loaded.embed.frequencies)
        assert loaded.activation == model.activation
        assert (loaded.n_points, loaded.dt) == (model.n_points, model.dt)
        assert doc["dataset_hash"] == "abc123"
        x = np.array([[1.3, -0.4], [0.2, 2.0]])
        assert np.array_equal(model.drift(x, 4), loaded.drift(x, 4))

    def test_training_report_section(self, tmp_path, model):
        path = tmp_path / "model.json"
        report = TrainingReport(epochs_run=7, best_epoch=5, best_val_loss=0.125,
                                train_losses=[1.0] * 7, val_losses=[1.0] * 7,
                                stopped_early=True)
        save_checkpoint(path, model, report=report)
        _, doc = load_checkpoint(path)
        assert doc["training"]["best_epoch"] == 5
        assert float(doc["training"]["best_val_loss"]) == 0.125
        assert doc["training"]["stopped_early"] is True

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("{not json")
        with pytest.raises(DatasetCorruptionError, match="not valid JSON"):
            load_checkpoint(path)

    def test_version_gate(self, tmp_path, model):
        path = tmp_path / "model.json"
        save_checkpoint(path, model)
        doc = json.loads(path.read_text())
        doc["format_version"] = 2
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatVersionError):
            load_checkpoint(path)

    def test_missing_field(self, tmp_path, model):
        path = tmp_path / "model.json"
        save_checkpoint(path, model)
        doc = json.loads(path.read_text())
        del doc["norm"]
        path.write_text(json.dumps(doc))
        with pytest.raises(DatasetCorruptionError, match="missing or malformed"):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "absent.json")


class TestPredictions:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        x0 = rng.standard_normal((5, 2)) * np.pi
        path = tmp_path / "pred.txt"
        write_predictions(path, x0, provenance={"seed": "7", "scale": "1.0"})
        loaded, prov = read_predictions(path)
        assert np.array_equal(loaded, x0)
        assert prov == {"seed": "7", "scale": "1.0"}

    def test_single_row(self, tmp_path):
        path = tmp_path / "pred.txt"
        write_predictions(path, np.array([1.5, -2.5]))
        loaded, _ = read_predictions(path)
        assert loaded.shape == (1, 2)
        assert loaded[0, 0] == 1.5

    def test_version_gate(self, tmp_path):
        path = tmp_path / "pred.txt"
        path.write_text("# backflow-predictions v9\n0 1.0 2.0\n")
        with pytest.raises(FormatVersionError):
            read_predictions(path)

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "pred.txt"
        path.write_text("1.0 2.0\n")
        with pytest.raises(DatasetCorruptionError, match="not a predictions file"):
            read_predictions(path)

    def test_malformed_row(self, tmp_path):
        path = tmp_path / "pred.txt"
        write_predictions(path, np.array([[1.0, 2.0]]))
        with open(path, "a") as fh:
            fh.write("1 2.0\n")
        with pytest.raises(DatasetCorruptionError, match="malformed"):
            read_predictions(path)


def make_stats(s, converged=True):
    r_vals = [0.4 + 0.01 * i for i in range(3)]
    z_vals = [0.2 + 0.01 * i for i in range(3)]
    trials = []
    for i, (r, z) in enumerate(zip(r_vals, z_vals)):
        trials.append(TrialResult(s=s, nu=1.0, component="R", rel_mae=r, seed=i, runtime=0.1))
        trials.append(TrialResult(s=s, nu=1.0, component="Z", rel_mae=z, seed=i, runtime=0.1))
    return TrialStatistics(
        s=s, nu=1.0, flow_kind="planar2d",
        by_component={
            "R": ComponentStats.from_values("R", r_vals),
            "Z": ComponentStats.from_values("Z", z_vals),
        },
        trials=tuple(trials), converged=converged, stop_reason="test",
    )


class TestResultsCsv:
    def test_round_trip(self, tmp_path):
        sweep = SweepResult(flow_kind="planar2d", nu=1.0,
                            rows=(make_stats(1.0), make_stats(8.0, converged=False)),
                            failures=())
        path = tmp_path / "results.csv"
        write_results_csv(path, sweep)
        rows = read_results_csv(path)
        assert len(rows) == 4
        first = rows[0]
        assert first["flow_kind"] == "planar2d"
        assert first["component"] == "R"
        assert first["s"] == 1.0
        assert first["n_trials"] == 3
        assert first["mean_rel_mae"] == pytest.approx(0.41, rel=1e-15)
        assert first["converged"] is True
        assert rows[2]["converged"] is False
        srows = [r for r in rows if r["s"] == 8.0 and r["component"] == "Z"]
        assert srows[0]["mean_rel_mae"] == pytest.approx(0.21, rel=1e-15)

    def test_multiple_sweeps_concatenate(self, tmp_path):
        s1 = SweepResult(flow_kind="planar2d", nu=1.0, rows=(make_stats(1.0),), failures=())
        s2 = SweepResult(flow_kind="axisymmetric3d", nu=0.01, rows=(make_stats(4.0),), failures=())
        path = tmp_path / "results.csv"
        write_results_csv(path, [s1, s2])
        rows = read_results_csv(path)
        assert [r["flow_kind"] for r in rows] == ["planar2d"] * 2 + ["axisymmetric3d"] * 2

    def test_rewrite_is_byte_identical(self, tmp_path):
        sweep = SweepResult(flow_kind="planar2d", nu=1.0, rows=(make_stats(1.0),), failures=())
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_results_csv(p1, sweep)
        write_results_csv(p2, sweep)
        assert p1.read_bytes() == p2.read_bytes()

    def test_version_gate(self, tmp_path):
        path = tmp_path / "results.csv"
        write_results_csv(path, SweepResult("planar2d", 1.0, (make_stats(1.0),), ()))
        text = path.read_text().replace("v1", "v3", 1)
        path.write_text(text)
        with pytest.raises(FormatVersionError):
            read_results_csv(path)

    def test_column_gate(self, tmp_path):
        path = tmp_path / "results.csv"
        path.write_text("# backflow-results v1\nwrong,columns\n1,2\n")
        with pytest.raises(DatasetCorruptionError, match="unexpected columns"):
            read_results_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_results_csv(tmp_path / "absent.csv")


class TestTrialsCsv:
    def test_round_trip_from_statistics(self, tmp_path):
        st = make_stats(2.0)
        path = tmp_path / "trials.csv"
        write_trials_csv(path, st)
        rows = read_trials_csv(path)
        assert len(rows) == 6
        assert rows[0] == {
            "flow_kind": "planar2d", "nu": 1.0, "s": 2.0,
            "component": "R", "seed": 0, "rel_mae": 0.4,
        }

    def test_bare_trials_need_flow_kind(self, tmp_path):
        trials = make_stats(2.0).trials
        path = tmp_path / "trials.csv"
        with pytest.raises(DomainError, match="flow_kind"):
            write_trials_csv(path, trials)
        write_trials_csv(path, trials, flow_kind="planar2d")
        assert len(read_trials_csv(path)) == 6

    def test_rewrite_is_byte_identical(self, tmp_path):
        st = make_stats(2.0)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_trials_csv(p1, st)
        write_trials_csv(p2, st)
        assert p1.read_bytes() == p2.read_bytes()

    def test_marker_gate(self, tmp_path):
        path = tmp_path / "trials.csv"
        path.write_text("flow_kind,nu\n")
        with pytest.raises(DatasetCorruptionError, match="marker"):
            read_trials_csv(path)
