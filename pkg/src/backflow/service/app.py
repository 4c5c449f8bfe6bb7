"""HTTP surface over the core pipeline.

Endpoints run synchronously and operate on server-side file paths; the
bundled CLI mounts this app in process by default, so the same handlers
back both the command line and a remote deployment.  Package errors map
onto stable HTTP statuses with the exception class name in the body, which
clients translate into exit codes.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..backward import reconstruct
from ..errors import (
    DatasetCorruptionError,
    DomainError,
    FormatVersionError,
    ModelDivergenceError,
)
from ..forward import generate_batch, initial_state, split_batch
from ..harness import relative_mae, run_trial, sweep
from ..oracle_checks import ALL_CHECKS, run_all_checks
from ..plots import emit_metrics_svg, emit_trajectory_svg
from ..scorenet import NormStats, build_training_pairs, init_model, train
from ..storage import (
    load_checkpoint,
    read_dataset,
    read_predictions,
    save_checkpoint,
    write_dataset,
    write_predictions,
    write_results_csv,
    write_trials_csv,
)
from . import schemas as s

_STATUS = {
    DomainError: 400,
    FileNotFoundError: 404,
    FormatVersionError: 409,
    DatasetCorruptionError: 409,
    ModelDivergenceError: 500,
    RuntimeError: 500,
}


def _select_split(batch, split: str, train_fraction: float):
    if split == "all":
        return batch
    train_part, val_part = split_batch(batch, train_fraction)
    return train_part if split == "train" else val_part


def create_app() -> FastAPI:
    app = FastAPI(title="backflow", version=__version__)

    for exc_type, status in _STATUS.items():
        def handler(request: Request, exc: Exception, status=status):
            return JSONResponse(
                status_code=status,
                content=s.ErrorBody(error=type(exc).__name__, detail=str(exc)).model_dump(),
            )

        app.add_exception_handler(exc_type, handler)

    @app.get("/health", response_model=s.HealthResponse)
    def health() -> s.HealthResponse:
        return s.HealthResponse(status="ok", version=__version__)

    @app.post("/generate", response_model=s.GenerateResponse)
    def generate(req: s.GenerateRequest) -> s.GenerateResponse:
        batch = generate_batch(
            req.flow.to_config(), req.grid.to_grid(), req.scale, req.n_samples, req.seed
        )
        content_hash = write_dataset(req.out_path, batch)
        return s.GenerateResponse(
            path=req.out_path,
            sidecar_path=req.out_path + ".json",
            n_samples=batch.n_trajectories,
            attempts=batch.attempts,
            content_hash=content_hash,
        )

    @app.post("/train", response_model=s.TrainResponse)
    def train_endpoint(req: s.TrainRequest) -> s.TrainResponse:
        batch, meta = read_dataset(req.dataset_path)
        train_batch, val_batch = split_batch(batch, req.train_fraction)
        pairs_train = build_training_pairs(train_batch)
        pairs_val = build_training_pairs(val_batch)
        model = init_model(batch.grid, NormStats.from_pairs(pairs_train), seed=req.seed)
        model, report = train(pairs_train, pairs_val, req.train.to_config(req.seed), model)
        save_checkpoint(
            req.checkpoint_path, model, dataset_hash=meta["content_hash"], report=report
        )
        return s.TrainResponse(
            checkpoint_path=req.checkpoint_path,
            epochs_run=report.epochs_run,
            best_epoch=report.best_epoch,
            best_val_loss=report.best_val_loss,
            stopped_early=report.stopped_early,
            dataset_hash=meta["content_hash"],
        )

    @app.post("/reconstruct", response_model=s.ReconstructResponse)
    def reconstruct_endpoint(req: s.ReconstructRequest) -> s.ReconstructResponse:
        model, doc = load_checkpoint(req.checkpoint_path)
        batch, meta = read_dataset(req.dataset_path)
        part = _select_split(batch, req.split, req.train_fraction)
        result = reconstruct(model, batch.grid, part.terminal_states())
        write_predictions(
            req.predictions_path,
            result.predicted_x0,
            provenance={
                "dataset_hash": meta["content_hash"],
                "checkpoint_dataset_hash": doc.get("dataset_hash"),
                "split": req.split,
                "train_fraction": req.train_fraction,
            },
        )
        return s.ReconstructResponse(
            predictions_path=req.predictions_path, n_states=result.predicted_x0.shape[0]
        )

    @app.post("/evaluate", response_model=s.EvaluateResponse)
    def evaluate(req: s.EvaluateRequest) -> s.EvaluateResponse:
        predicted, _ = read_predictions(req.predictions_path)
        batch, _ = read_dataset(req.dataset_path)
        part = _select_split(batch, req.split, req.train_fraction)
        if predicted.shape[0] != part.n_trajectories:
            raise DomainError(
                f"{predicted.shape[0]} predictions but the {req.split} split holds "
                f"{part.n_trajectories} trajectories"
            )
        x0 = initial_state(batch.cfg, batch.grid, batch.scale)
        return s.EvaluateResponse(
            metrics=[
                s.ComponentMetric(
                    component=c, rel_mae=relative_mae(x0, predicted, part, c)
                )
                for c in ("R", "Z")
            ],
            n_states=part.n_trajectories,
        )

    @app.post("/trial", response_model=s.TrialResponse)
    def trial(req: s.TrialRequest) -> s.TrialResponse:
        results = run_trial(
            req.scale,
            req.flow.to_config(),
            req.grid.to_grid(),
            req.train.to_config(req.seed),
            req.seed,
            n_samples=req.n_samples,
            train_fraction=req.train_fraction,
        )
        if req.trials_csv_path:
            write_trials_csv(req.trials_csv_path, list(results), req.flow.kind)
        return s.TrialResponse(
            metrics=[
                s.ComponentMetric(component=t.component, rel_mae=t.rel_mae) for t in results
            ],
            seed=req.seed,
            runtime_seconds=results[0].runtime,
            trials_csv_path=req.trials_csv_path,
        )

    @app.post("/sweep", response_model=s.SweepResponse)
    def sweep_endpoint(req: s.SweepRequest) -> s.SweepResponse:
        result = sweep(
            req.s_values,
            req.flow.to_config(),
            req.grid.to_grid(),
            req.train.to_config(req.base_seed),
            req.base_seed,
            target_rel_se=req.target_rel_se,
            max_trials=req.max_trials,
            require_both=req.require_both,
            n_samples=req.n_samples,
            train_fraction=req.train_fraction,
        )
        if req.results_csv_path:
            write_results_csv(req.results_csv_path, result)
        rows = [
            s.SweepRow(
                s=st.s,
                component=comp,
                n_trials=cs.n_trials,
                mean_rel_mae=cs.mean_rel_mae,
                std=cs.std,
                se=cs.se,
                rel_se=cs.rel_se,
                converged=st.converged,
            )
            for st in result.rows
            for comp, cs in ((c, st.by_component[c]) for c in ("R", "Z"))
        ]
        return s.SweepResponse(
            flow_kind=result.flow_kind,
            nu=result.nu,
            rows=rows,
            failures=result.failures,
            results_csv_path=req.results_csv_path,
        )

    @app.post("/oracle-check", response_model=s.OracleCheckResponse)
    def oracle_check(req: s.OracleCheckRequest) -> s.OracleCheckResponse:
        by_name = {fn.__name__.removeprefix("check_"): fn for fn in ALL_CHECKS}
        if req.names is None:
            results = run_all_checks()
        else:
            unknown = sorted(set(req.names) - set(by_name))
            if unknown:
                raise DomainError(
                    f"unknown checks {unknown}; available: {sorted(by_name)}"
                )
            results = [by_name[name]() for name in req.names]
        checks = [
            s.OracleCheckResult(
                name=r.name, passed=r.passed, measures=r.measures, detail=r.detail
            )
            for r in results
        ]
        return s.OracleCheckResponse(
            checks=checks, all_passed=all(c.passed for c in checks)
        )

    @app.post("/plot/metrics", response_model=s.PlotResponse)
    def plot_metrics(req: s.MetricsPlotRequest) -> s.PlotResponse:
        emit_metrics_svg(req.results_csv_path, req.out_path)
        return s.PlotResponse(out_path=req.out_path)

    @app.post("/plot/trajectories", response_model=s.PlotResponse)
    def plot_trajectories(req: s.TrajectoryPlotRequest) -> s.PlotResponse:
        batch, _ = read_dataset(req.dataset_path)
        overlay = None
        if req.checkpoint_path:
            model, _ = load_checkpoint(req.checkpoint_path)
            shown = batch.states[: req.count]
            overlay = reconstruct(model, batch.grid, shown[:, -1, :]).paths
        emit_trajectory_svg(
            batch.grid.times(), batch.states, req.out_path, count=req.count, overlay=overlay
        )
        return s.PlotResponse(out_path=req.out_path)

    return app
