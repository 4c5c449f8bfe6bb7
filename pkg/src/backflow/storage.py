"""Persistence: datasets, checkpoints, predictions, result tables.

Datasets are raw little-endian float64 payloads with a JSON sidecar; the
sidecar's content hash covers the metadata and the payload together, so
editing either is detected.  Checkpoints and tables are plain text with
floats written at full round-trip precision, which makes replays of the
same computation byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .errors import DatasetCorruptionError, DomainError, FormatVersionError
from .forward import TimeGrid, TrajectoryBatch
from .harness import SweepResult, TrialStatistics
from .scorenet import NormStats, ScoreModel, TimeEmbeddingSpec, TrainingReport
from .strain import FlowKind, StrainConfig

DATASET_VERSION = 1
CHECKPOINT_VERSION = 1
RESULTS_VERSION = 1
TRIALS_VERSION = 1
PREDICTIONS_VERSION = 1

_RESULTS_HEADER = [
    "flow_kind", "nu", "s", "component",
    "n_trials", "mean_rel_mae", "std", "se", "rel_se", "converged",
]
_TRIALS_HEADER = ["flow_kind", "nu", "s", "component", "seed", "rel_mae"]


def _f(x: float) -> str:
    """Full-precision decimal form; parses back to the identical double."""
    return repr(float(x))


# ---------------------------------------------------------------- datasets

def _dataset_meta(batch: TrajectoryBatch) -> dict:
    return {
        "format_version": DATASET_VERSION,
        "kind": batch.cfg.kind.value,
        "a": batch.cfg.a,
        "nu": batch.cfg.nu,
        "t_final": batch.grid.t_final,
        "n_points": batch.grid.n_points,
        "scale": batch.scale,
        "n_samples": int(batch.states.shape[0]),
        "seed": batch.seed,
        "attempts": batch.attempts,
    }


def _content_hash(meta: dict, payload: bytes) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(meta, sort_keys=True, separators=(",", ":")).encode())
    h.update(payload)
    return h.hexdigest()


def dataset_hash(batch: TrajectoryBatch) -> str:
    """Hash a batch exactly as write_dataset would record it."""
    return _content_hash(_dataset_meta(batch), _payload_bytes(batch))


def _payload_bytes(batch: TrajectoryBatch) -> bytes:
    return np.ascontiguousarray(batch.states, dtype="<f8").tobytes()


def write_dataset(path, batch: TrajectoryBatch) -> str:
    """Binary payload at `path`, JSON sidecar at `path + '.json'`."""
    path = Path(path)
    payload = _payload_bytes(batch)
    meta = _dataset_meta(batch)
    meta["content_hash"] = _content_hash(meta, payload)
    path.write_bytes(payload)
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta["content_hash"]


def read_dataset(path) -> tuple[TrajectoryBatch, dict]:
    """Load and validate; returns the batch plus its sidecar metadata."""
    path = Path(path)
    sidecar = Path(str(path) + ".json")
    if not path.exists():
        raise FileNotFoundError(f"dataset payload not found: {path}")
    if not sidecar.exists():
        raise FileNotFoundError(f"dataset sidecar not found: {sidecar}")
    meta = json.loads(sidecar.read_text())
    version = meta.get("format_version")
    if version != DATASET_VERSION:
        raise FormatVersionError(
            f"dataset format version {version!r}, this build reads {DATASET_VERSION}"
        )
    payload = path.read_bytes()
    expected = meta["n_samples"] * meta["n_points"] * 2 * 8
    if len(payload) != expected:
        raise DatasetCorruptionError(
            f"payload is {len(payload)} bytes, expected {expected} (truncated or padded)"
        )
    recorded = meta.pop("content_hash", None)
    actual = _content_hash(meta, payload)
    if recorded != actual:
        raise DatasetCorruptionError(
            f"content hash mismatch for {path} (sidecar or payload was modified)"
        )
    meta["content_hash"] = recorded
    cfg = StrainConfig(kind=FlowKind(meta["kind"]), a=meta["a"], nu=meta["nu"])
    grid = TimeGrid(t_final=meta["t_final"], n_points=meta["n_points"])
    states = np.frombuffer(payload, dtype="<f8").reshape(
        meta["n_samples"], meta["n_points"], 2
    ).copy()
    batch = TrajectoryBatch(
        cfg=cfg,
        grid=grid,
        scale=meta["scale"],
        seed=meta["seed"],
        states=states,
        attempts=meta["attempts"],
    )
    return batch, meta


# -------------------------------------------------------------- checkpoints

def save_checkpoint(
    path,
    model: ScoreModel,
    dataset_hash: str | None = None,
    report: TrainingReport | None = None,
) -> None:
    """Plain-JSON checkpoint; floats keep full precision so reload is exact."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "activation": model.activation,
        "weights": [[[_f(v) for v in row] for row in w] for w in model.weights],
        "biases": [[_f(v) for v in b] for b in model.biases],
        "embed": {
            "dim": model.embed.dim,
            "frequencies": [_f(v) for v in model.embed.frequencies],
        },
        "norm": {
            name: [_f(v) for v in getattr(model.norm, name)]
            for name in ("x_mean", "x_std", "y_mean", "y_std")
        },
        "grid": {"n_points": model.n_points, "dt": _f(model.dt)},
        "dataset_hash": dataset_hash,
    }
    if report is not None:
        doc["training"] = {
            "epochs_run": report.epochs_run,
            "best_epoch": report.best_epoch,
            "best_val_loss": None if report.best_val_loss is None else _f(report.best_val_loss),
            "stopped_early": report.stopped_early,
        }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path) -> tuple[ScoreModel, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetCorruptionError(f"checkpoint is not valid JSON: {exc}") from exc
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise FormatVersionError(
            f"checkpoint format version {version!r}, this build reads {CHECKPOINT_VERSION}"
        )
    try:
        weights = [np.array([[float(v) for v in row] for row in w]) for w in doc["weights"]]
        biases = [np.array([float(v) for v in b]) for b in doc["biases"]]
        embed = TimeEmbeddingSpec(
            dim=doc["embed"]["dim"],
            frequencies=np.array([float(v) for v in doc["embed"]["frequencies"]]),
        )
        norm = NormStats(**{
            name: np.array([float(v) for v in doc["norm"][name]])
            for name in ("x_mean", "x_std", "y_mean", "y_std")
        })
        model = ScoreModel(
            weights=weights,
            biases=biases,
            activation=doc["activation"],
            embed=embed,
            norm=norm,
            n_points=doc["grid"]["n_points"],
            dt=float(doc["grid"]["dt"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetCorruptionError(f"checkpoint has a missing or malformed field: {exc}") from exc
    return model, doc


# -------------------------------------------------------------- predictions

def write_predictions(path, predicted_x0: np.ndarray, provenance: dict | None = None) -> None:
    predicted_x0 = np.atleast_2d(np.asarray(predicted_x0, dtype=np.float64))
    lines = [f"# backflow-predictions v{PREDICTIONS_VERSION}"]
    for key in sorted(provenance or {}):
        lines.append(f"# {key}: {(provenance or {})[key]}")
    lines.append("# columns: index r z")
    for i, (r, z) in enumerate(predicted_x0):
        lines.append(f"{i} {_f(r)} {_f(z)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_predictions(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"predictions file not found: {path}")
    text = path.read_text().splitlines()
    if not text or not text[0].startswith("# backflow-predictions v"):
        raise DatasetCorruptionError(f"{path} is not a predictions file")
    version = text[0].rsplit("v", 1)[-1]
    if version != str(PREDICTIONS_VERSION):
        raise FormatVersionError(
            f"predictions format version {version}, this build reads {PREDICTIONS_VERSION}"
        )
    provenance = {}
    rows = []
    for line in text[1:]:
        if line.startswith("#"):
            body = line[1:].strip()
            if ": " in body and not body.startswith("columns:"):
                key, val = body.split(": ", 1)
                provenance[key] = val
            continue
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DatasetCorruptionError(f"malformed predictions row: {line!r}")
        rows.append((float(parts[1]), float(parts[2])))
    return np.array(rows).reshape(-1, 2), provenance


# ------------------------------------------------------------ result tables

def _write_versioned_csv(path, tag: str, version: int, header: list, rows: list) -> None:
    buf = io.StringIO()
    buf.write(f"# {tag} v{version}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue())


def _read_versioned_csv(path, tag: str, version: int, header: list) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"results file not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith(f"# {tag} v"):
        raise DatasetCorruptionError(f"{path} does not carry the expected '{tag}' marker")
    found = lines[0].rsplit("v", 1)[-1]
    if found != str(version):
        raise FormatVersionError(f"{tag} version {found}, this build reads {version}")
    reader = csv.DictReader(lines[1:])
    if reader.fieldnames != header:
        raise DatasetCorruptionError(
            f"unexpected columns {reader.fieldnames} (expected {header})"
        )
    return list(reader)


def write_results_csv(path, sweeps) -> None:
    """One row per (scale, component) with mean/std/se/rel_se/converged."""
    if isinstance(sweeps, SweepResult):
        sweeps = [sweeps]
    rows = []
    for sw in sweeps:
        for st in sw.rows:
            for comp in ("R", "Z"):
                cs = st.by_component[comp]
                rows.append([
                    sw.flow_kind, _f(sw.nu), _f(st.s), comp,
                    cs.n_trials, _f(cs.mean_rel_mae), _f(cs.std),
                    _f(cs.se), _f(cs.rel_se), str(st.converged).lower(),
                ])
    _write_versioned_csv(path, "backflow-results", RESULTS_VERSION, _RESULTS_HEADER, rows)


def read_results_csv(path) -> list[dict]:
    out = []
    for raw in _read_versioned_csv(path, "backflow-results", RESULTS_VERSION, _RESULTS_HEADER):
        try:
            out.append({
                "flow_kind": raw["flow_kind"],
                "nu": float(raw["nu"]),
                "s": float(raw["s"]),
                "component": raw["component"],
                "n_trials": int(raw["n_trials"]),
                "mean_rel_mae": float(raw["mean_rel_mae"]),
                "std": float(raw["std"]),
                "se": float(raw["se"]),
                "rel_se": float(raw["rel_se"]),
                "converged": raw["converged"] == "true",
            })
        except (TypeError, ValueError) as exc:
            raise DatasetCorruptionError(f"malformed results row {raw}: {exc}") from exc
    return out


def write_trials_csv(path, trials, flow_kind: str | None = None) -> None:
    """Per-trial metric rows; no wall-clock columns so replays are identical."""
    if isinstance(trials, TrialStatistics):
        flow_kind = trials.flow_kind
        trials = trials.trials
    if flow_kind is None:
        raise DomainError("flow_kind is required when passing bare trial results")
    rows = [
        [flow_kind, _f(t.nu), _f(t.s), t.component, t.seed, _f(t.rel_mae)]
        for t in trials
    ]
    _write_versioned_csv(path, "backflow-trials", TRIALS_VERSION, _TRIALS_HEADER, rows)


def read_trials_csv(path) -> list[dict]:
    out = []
    for raw in _read_versioned_csv(path, "backflow-trials", TRIALS_VERSION, _TRIALS_HEADER):
        try:
            out.append({
                "flow_kind": raw["flow_kind"],
                "nu": float(raw["nu"]),
                "s": float(raw["s"]),
                "component": raw["component"],
                "seed": int(raw["seed"]),
                "rel_mae": float(raw["rel_mae"]),
            })
        except (TypeError, ValueError) as exc:
            raise DatasetCorruptionError(f"malformed trial row {raw}: {exc}") from exc
    return out
