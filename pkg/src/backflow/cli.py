"""Command line client for the pipeline service.

By default the commands mount the HTTP app in process, so no server needs
to run; `--server URL` points the same commands at a remote instance.
File paths are interpreted by the server (identical to local paths in the
in-process default).

Exit codes: 0 success, 2 usage, 3 invalid input, 4 corrupt file,
5 unsupported format version, 6 missing file, 7 diverged model, 1 other.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx

EXIT_BY_ERROR = {
    "DomainError": 3,
    "DegenerateVarianceError": 3,
    "DegenerateDenominatorError": 3,
    "RequestValidationError": 3,
    "DatasetCorruptionError": 4,
    "FormatVersionError": 5,
    "FileNotFoundError": 6,
    "ModelDivergenceError": 7,
}
EXIT_BY_STATUS = {400: 3, 422: 3, 404: 6, 409: 4}


class ClientError(Exception):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


class Client:
    """POSTs request models either in process or over the wire."""

    def __init__(self, server: str | None):
        if server:
            self._http = httpx.Client(base_url=server, timeout=None)
        else:
            import warnings

            with warnings.catch_warnings():
                # the import emits an upstream advisory, not ours to fix
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service import create_app

            self._http = TestClient(create_app())

    def post(self, path: str, payload: dict) -> dict:
        try:
            resp = self._http.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise ClientError(f"cannot reach server: {exc}", 1) from exc
        if resp.status_code >= 400:
            raise ClientError(*_describe_failure(resp))
        return resp.json()


def _describe_failure(resp) -> tuple:
    try:
        body = resp.json()
    except ValueError:
        body = {}
    error = body.get("error", "")
    detail = body.get("detail", resp.text)
    if isinstance(detail, list):  # request model validation
        error = error or "RequestValidationError"
        detail = "; ".join(
            f"{'.'.join(str(p) for p in item.get('loc', []))}: {item.get('msg', '')}"
            for item in detail
        )
    code = EXIT_BY_ERROR.get(error, EXIT_BY_STATUS.get(resp.status_code, 1))
    label = error or f"HTTP {resp.status_code}"
    return f"{label}: {detail}", code


def _parse_scales(text: str) -> list:
    """Accepts '1..12', '1,4,8,12', or a single number."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return [float(v) for v in range(int(lo), int(hi) + 1)]
    return [float(part) for part in text.split(",") if part.strip()]


def _flow_payload(args) -> dict:
    return {"kind": args.kind, "a": args.a, "nu": args.nu}


def _grid_payload(args) -> dict:
    return {"t_final": args.t_final, "n_points": args.n_points}


def _train_payload(args) -> dict:
    return {
        "learning_rate": args.lr,
        "beta1": args.beta1,
        "beta2": args.beta2,
        "eps": args.eps,
        "batch_size": args.batch_size,
        "max_epochs": args.max_epochs,
        "patience": args.patience,
    }


def _add_flow_flags(p, multi_nu: bool = False):
    p.add_argument("--kind", choices=["axisymmetric3d", "planar2d"], default="axisymmetric3d")
    p.add_argument("--a", type=float, default=1.0, help="strain rate (default 1)")
    if multi_nu:
        p.add_argument(
            "--nu", type=float, nargs="+", default=[1.0, 0.01],
            help="viscosities, one sweep each (default: 1 0.01)",
        )
    else:
        p.add_argument("--nu", type=float, default=1.0, help="viscosity (default 1)")


def _add_grid_flags(p):
    p.add_argument("--t-final", type=float, default=2.0, help="time horizon (default 2)")
    p.add_argument("--n-points", type=int, default=200, help="grid points (default 200)")


def _add_train_flags(p):
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=20)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="backflow",
        description="Simulate strained particle flows, learn backward drifts, "
        "reconstruct initial positions, and score the result.",
    )
    parser.add_argument("--server", default=None, help="remote service URL (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate a trajectory dataset")
    _add_flow_flags(p)
    _add_grid_flags(p)
    p.add_argument("--s", type=float, default=1.0, help="initial scale (default 1)")
    p.add_argument("--n-samples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="dataset payload path")

    p = sub.add_parser("train", help="fit the drift network on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)

    p = sub.add_parser("reconstruct", help="roll terminals back with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="predictions path")
    p.add_argument("--split", choices=["validation", "train", "all"], default="validation")
    p.add_argument("--train-fraction", type=float, default=0.8)

    p = sub.add_parser("evaluate", help="score predictions against a dataset")
    p.add_argument("--predictions", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=["validation", "train", "all"], default="validation")
    p.add_argument("--train-fraction", type=float, default=0.8)

    p = sub.add_parser("trial", help="one end-to-end run at a single seed")
    _add_flow_flags(p)
    _add_grid_flags(p)
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--n-samples", type=int, default=10000)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)
    p.add_argument("--out-csv", default=None, help="write per-trial metric rows here")
    p.add_argument("--manifest", default=None, help="load the full request from this JSON file")
    p.add_argument("--save-manifest", default=None, help="write the resolved request JSON here")

    p = sub.add_parser("sweep", help="trial statistics over a range of scales")
    _add_flow_flags(p, multi_nu=True)
    _add_grid_flags(p)
    p.add_argument("--s", default="1..12", help="scales: '1..12', '1,4,8', or one value")
    p.add_argument("--n-samples", type=int, default=10000)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--base-seed", type=int, default=0)
    _add_train_flags(p)
    p.add_argument("--target-rel-se", type=float, default=0.06)
    p.add_argument("--max-trials", type=int, default=80)
    p.add_argument(
        "--any-component", action="store_true",
        help="stop when either component meets the target (default: both)",
    )
    p.add_argument("--out-csv", required=True, help="results CSV (per-viscosity suffix if several)")

    p = sub.add_parser("oracle-check", help="run the closed-form numerical checks")
    p.add_argument("--only", nargs="+", default=None, help="subset of check names")

    p = sub.add_parser("plot", help="render results or trajectories to SVG")
    p.add_argument("--results", default=None, help="results CSV (metrics chart)")
    p.add_argument("--trajectories", action="store_true", help="draw trajectory overlays instead")
    p.add_argument("--dataset", default=None, help="dataset for trajectory mode")
    p.add_argument("--checkpoint", default=None, help="overlay reconstructions from this model")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _cmd_generate(client: Client, args) -> int:
    out = client.post("/generate", {
        "flow": _flow_payload(args),
        "grid": _grid_payload(args),
        "scale": args.s,
        "n_samples": args.n_samples,
        "seed": args.seed,
        "out_path": args.out,
    })
    print(f"wrote {out['path']} ({out['n_samples']} trajectories, "
          f"{out['attempts']} attempts, hash {out['content_hash'][:12]})")
    return 0


def _cmd_train(client: Client, args) -> int:
    out = client.post("/train", {
        "dataset_path": args.dataset,
        "checkpoint_path": args.checkpoint,
        "train_fraction": args.train_fraction,
        "train": _train_payload(args),
        "seed": args.seed,
    })
    best = out["best_val_loss"]
    best_text = "none" if best is None else f"{best:.6g}"
    print(f"wrote {out['checkpoint_path']} (epochs {out['epochs_run']}, "
          f"best epoch {out['best_epoch']}, val loss {best_text})")
    return 0


def _cmd_reconstruct(client: Client, args) -> int:
    out = client.post("/reconstruct", {
        "checkpoint_path": args.checkpoint,
        "dataset_path": args.dataset,
        "predictions_path": args.out,
        "split": args.split,
        "train_fraction": args.train_fraction,
    })
    print(f"wrote {out['predictions_path']} ({out['n_states']} states)")
    return 0


def _cmd_evaluate(client: Client, args) -> int:
    out = client.post("/evaluate", {
        "predictions_path": args.predictions,
        "dataset_path": args.dataset,
        "split": args.split,
        "train_fraction": args.train_fraction,
    })
    for m in out["metrics"]:
        print(f"{m['component']} relative MAE: {m['rel_mae']:.6f}")
    return 0


def _trial_request(args) -> dict:
    if args.manifest:
        request = json.loads(Path(args.manifest).read_text())
    else:
        request = {
            "flow": _flow_payload(args),
            "grid": _grid_payload(args),
            "scale": args.s,
            "n_samples": args.n_samples,
            "train_fraction": args.train_fraction,
            "train": _train_payload(args),
            "seed": args.seed,
        }
        if args.out_csv:
            request["trials_csv_path"] = args.out_csv
    return request


def _cmd_trial(client: Client, args) -> int:
    request = _trial_request(args)
    if args.save_manifest:
        Path(args.save_manifest).write_text(json.dumps(request, indent=2) + "\n")
    out = client.post("/trial", request)
    for m in out["metrics"]:
        print(f"{m['component']} relative MAE: {m['rel_mae']:.6f}")
    print(f"seed {out['seed']}, {out['runtime_seconds']:.1f}s")
    if out.get("trials_csv_path"):
        print(f"wrote {out['trials_csv_path']}")
    return 0


def _cmd_sweep(client: Client, args) -> int:
    scales = _parse_scales(args.s)
    nus = args.nu
    for nu in nus:
        if len(nus) == 1:
            csv_path = args.out_csv
        else:
            stem = Path(args.out_csv)
            csv_path = str(stem.with_name(f"{stem.stem}-nu{nu:g}{stem.suffix}"))
        out = client.post("/sweep", {
            "flow": {"kind": args.kind, "a": args.a, "nu": nu},
            "grid": _grid_payload(args),
            "s_values": scales,
            "n_samples": args.n_samples,
            "train_fraction": args.train_fraction,
            "train": _train_payload(args),
            "base_seed": args.base_seed,
            "target_rel_se": args.target_rel_se,
            "max_trials": args.max_trials,
            "require_both": not args.any_component,
            "results_csv_path": csv_path,
        })
        print(f"nu={nu:g}: {len(out['rows'])} rows -> {out['results_csv_path']}")
        for failure in out["failures"]:
            print(f"  failed at s={failure[0]}: {failure[1]}", file=sys.stderr)
    return 0


def _cmd_oracle_check(client: Client, args) -> int:
    out = client.post("/oracle-check", {"names": args.only})
    for check in out["checks"]:
        print(f"{'PASS' if check['passed'] else 'FAIL'} {check['name']}: {check['detail']}")
    return 0 if out["all_passed"] else 1


def _cmd_plot(client: Client, args) -> int:
    if args.trajectories:
        if not args.dataset:
            print("error: --trajectories needs --dataset", file=sys.stderr)
            return 2
        out = client.post("/plot/trajectories", {
            "dataset_path": args.dataset,
            "out_path": args.out,
            "count": args.count,
            "checkpoint_path": args.checkpoint,
        })
    else:
        if not args.results:
            print("error: metrics plot needs --results", file=sys.stderr)
            return 2
        out = client.post("/plot/metrics", {
            "results_csv_path": args.results,
            "out_path": args.out,
        })
    print(f"wrote {out['out_path']}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


_HANDLERS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "reconstruct": _cmd_reconstruct,
    "evaluate": _cmd_evaluate,
    "trial": _cmd_trial,
    "sweep": _cmd_sweep,
    "oracle-check": _cmd_oracle_check,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        return _cmd_serve(args)
    try:
        client = Client(args.server)
        return _HANDLERS[args.command](client, args)
    except ClientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 6 if isinstance(exc, FileNotFoundError) else 1


if __name__ == "__main__":
    sys.exit(main())
