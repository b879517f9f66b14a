"""Operator entry points.

Every subcommand is deterministic given explicit seeds, logs its resolved
configuration, and prints one machine-readable JSON summary on completion.
Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from .canvas import load_png
from .data import (
    ManifestError,
    SynthConfig,
    generate_synthetic,
    load_manifest,
    save_dataset,
)
from .diffusion import (
    CategoryCodec,
    ConstraintSpec,
    DiffusionSchedule,
    build_mask,
    sample as diffusion_sample,
)
from .estimator import check_canvas_pair
from .geometry import BBox, Element, Layout, load_layout
from .gradcheck import run_gradcheck
from .metrics import aggregate_reports, evaluate_layout
from .model import Conditioning, ModelConfig, NoiseModel
from .numerics import checkpoint_hash
from .training import TrainConfig, Trainer, load_model

# unknown flags and bad values are validation errors (exit 1); unexpected
# failures exit 2
click.UsageError.exit_code = 1


def emit(summary: dict) -> None:
    click.echo(json.dumps(summary))


def log(message: str) -> None:
    click.echo(message, err=True)


def run_guarded(fn):
    try:
        fn()
    except (ValueError, KeyError, FileNotFoundError, ManifestError) as exc:
        log(f"error: {exc}")
        sys.exit(1)
    except click.exceptions.Exit:
        raise
    except Exception as exc:  # noqa: BLE001 - runtime failure boundary
        log(f"runtime failure: {exc}")
        sys.exit(2)


@click.group()
def main():
    """Constrained poster-layout generation toolkit."""


@main.command("synth-data")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--num", "num_samples", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--resolution", default=64, show_default=True)
def synth_data(out_dir, num_samples, seed, resolution):
    """Generate a synthetic poster dataset with a JSONL manifest."""

    def body():
        cfg = SynthConfig(num_samples=num_samples, resolution=resolution, seed=seed)
        log(f"generating {num_samples} samples at {resolution}x{resolution} (seed {seed})")
        t0 = time.perf_counter()
        result = generate_synthetic(cfg)
        manifest = save_dataset(result.samples, out_dir)
        emit(
            {
                "command": "synth-data",
                "config": {"num": num_samples, "seed": seed, "resolution": resolution, "out": str(out_dir)},
                "generated": len(result.samples),
                "skipped": result.skipped,
                "manifest": str(manifest),
                "elapsed_s": time.perf_counter() - t0,
            }
        )

    run_guarded(body)


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--steps", default=20_000, show_default=True)
@click.option("--batch", default=32, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--preset", type=click.Choice(["tiny", "desk"]), default="tiny", show_default=True,
              help="tiny: d=32 @ 32px; desk: d=64 @ 64px")
@click.option("--max-elements", default=10, show_default=True)
@click.option("--timesteps", default=100, show_default=True)
@click.option("--resume", "resume_path", type=click.Path(exists=True), default=None,
              help="continue a saved run; model flags come from the checkpoint")
@click.option("--loss-log", type=click.Path(), default=None, help="JSONL per-step loss log")
def train(data_dir, out_path, steps, batch, lr, seed, preset, max_elements, timesteps, resume_path, loss_log):
    """Train the denoiser on a dataset directory (manifest.jsonl inside)."""

    def body():
        samples = load_manifest(Path(data_dir) / "manifest.jsonl")
        t0 = time.perf_counter()
        if resume_path:
            trainer = Trainer.resume(resume_path, samples)
            trainer.cfg = TrainConfig(
                steps=steps, batch_size=trainer.cfg.batch_size, lr=trainer.cfg.lr,
                ema_decay=trainer.cfg.ema_decay, grad_clip=trainer.cfg.grad_clip,
                seed=trainer.cfg.seed, padding_in_loss=trainer.cfg.padding_in_loss,
            )
            log(f"resumed at step {trainer.step}, training to {steps}")
        else:
            if preset == "tiny":
                model_cfg = ModelConfig.tiny(max_elements=max_elements, timesteps=timesteps)
            else:
                model_cfg = ModelConfig(max_elements=max_elements, timesteps=timesteps)
            train_cfg = TrainConfig(steps=steps, batch_size=batch, lr=lr, seed=seed)
            sched = DiffusionSchedule.linear(model_cfg.timesteps)
            model = NoiseModel(model_cfg, seed=seed)
            trainer = Trainer(model, sched, samples, train_cfg)
            log(f"training {model.num_parameters():,} parameters for {steps} steps "
                f"on {len(samples)} samples")
        log_rows = []

        def progress(step, loss):
            log_rows.append({"step": step, "loss": loss})
            if step % 500 == 0 or step == trainer.cfg.steps:
                log(f"step {step}: loss {np.mean(trainer.history[-100:]):.4f}")

        trainer.run(progress=progress)
        trainer.save(out_path)
        if loss_log:
            with open(loss_log, "w", encoding="utf-8") as f:
                for row in log_rows:
                    f.write(json.dumps(row) + "\n")
        first = float(np.mean(trainer.history[:50])) if trainer.history else 0.0
        final = float(np.mean(trainer.history[-50:])) if trainer.history else 0.0
        emit(
            {
                "command": "train",
                "config": {
                    "data": str(data_dir), "out": str(out_path), "steps": steps,
                    "batch": trainer.cfg.batch_size, "lr": trainer.cfg.lr,
                    "seed": trainer.cfg.seed, "preset": preset, "resumed": bool(resume_path),
                },
                "parameters": trainer.model.num_parameters(),
                "step": trainer.step,
                "first_loss": first,
                "final_loss": final,
                "checkpoint": str(out_path),
                "elapsed_s": time.perf_counter() - t0,
            }
        )

    run_guarded(body)


def _load_constraints(path, n, codec):
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    task = raw.get("task", "unconstrained")
    elements = []
    anchored = []
    for entry in raw.get("elements", []):
        box = BBox(
            float(entry.get("cx", 0.0)),
            float(entry.get("cy", 0.0)),
            float(entry.get("w", 0.0)),
            float(entry.get("h", 0.0)),
        )
        elements.append(Element(entry["category"], box))
        anchored.append(bool(entry.get("anchored", False)))
    layout = Layout(elements)
    spec = ConstraintSpec.from_layout(task, layout, n, codec, anchored if any(anchored) else None)
    base = Path(path).parent
    canvas = load_png(base / raw["canvas"])
    saliency = load_png(base / raw["saliency"])
    return spec, canvas, saliency


@main.command("sample")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--task", default=None, help="override the task in the constraints file")
@click.option("--constraints", "constraints_path", type=click.Path(exists=True), default=None,
              help="JSON with canvas/saliency paths, task, and partial elements")
@click.option("--data", "data_dir", type=click.Path(exists=True), default=None,
              help="generate one unconstrained layout per dataset entry instead")
@click.option("--n", "num_samples", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--dump-states", is_flag=True, help="also write per-step model-space states")
def sample_cmd(ckpt, task, constraints_path, data_dir, num_samples, seed, out_dir, dump_states):
    """Generate layouts from a checkpoint."""

    def body():
        model, sched, _ = load_model(ckpt)
        codec = CategoryCodec()
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        written = []
        if constraints_path is None and data_dir is None:
            raise ValueError("provide either --constraints or --data")
        if constraints_path:
            spec, canvas, saliency = _load_constraints(constraints_path, model.cfg.max_elements, codec)
            if task:
                spec = ConstraintSpec(task, spec.x_user, spec.anchor_flags)
            check_canvas_pair(canvas, saliency, model.cfg.resolution)
            from .canvas import compose_four_channel, extract_salbox

            cond = Conditioning.from_raster(
                compose_four_channel(canvas, saliency), extract_salbox(saliency), model.cfg
            )
            for i in range(num_samples):
                result = diffusion_sample(
                    model, sched, cond, spec, seed=seed + i, codec=codec, record_trajectory=dump_states
                )
                path = out / f"layout_{i:05d}.json"
                path.write_text(result.layout.to_json())
                written.append(str(path))
                if dump_states:
                    with open(out / f"states_{i:05d}.jsonl", "w", encoding="utf-8") as f:
                        for step_idx, state in enumerate(result.trajectory):
                            f.write(json.dumps({"t": sched.timesteps - step_idx, "state": state.tolist()}) + "\n")
        else:
            from .canvas import compose_four_channel, extract_salbox

            samples = load_manifest(Path(data_dir) / "manifest.jsonl")
            spec = ConstraintSpec.unconstrained(model.cfg.max_elements)
            if task:
                spec = ConstraintSpec(task, spec.x_user, spec.anchor_flags)
            for i, s in enumerate(samples):
                cond = Conditioning.from_raster(
                    compose_four_channel(s.canvas, s.saliency), extract_salbox(s.saliency), model.cfg
                )
                result = diffusion_sample(
                    model, sched, cond, spec, seed=seed + i, codec=codec, record_trajectory=False
                )
                path = out / f"layout_{i:05d}.json"
                path.write_text(result.layout.to_json())
                written.append(str(path))
        emit(
            {
                "command": "sample",
                "config": {
                    "ckpt": str(ckpt), "task": task, "constraints": constraints_path,
                    "data": data_dir, "n": num_samples, "seed": seed, "out": str(out_dir),
                },
                "layouts": written,
                "elapsed_s": time.perf_counter() - t0,
            }
        )

    run_guarded(body)


@main.command("eval")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--layouts", "layouts_dir", type=click.Path(exists=True), default=None,
              help="evaluate these layout_*.json files (paired with dataset entries by index); "
              "defaults to the dataset's own ground-truth layouts")
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_cmd(data_dir, layouts_dir, out_path):
    """Compute layout quality metrics; one row per sample plus aggregate means."""

    def body():
        samples = load_manifest(Path(data_dir) / "manifest.jsonl")
        if layouts_dir is not None:
            files = sorted(Path(layouts_dir).glob("layout_*.json"))
            if len(files) > len(samples):
                raise ValueError(f"{len(files)} layouts but only {len(samples)} dataset entries")
            pairs = [(load_layout(f), samples[i]) for i, f in enumerate(files)]
        else:
            pairs = [(s.layout, s) for s in samples]
        rows = []
        reports = []
        for i, (layout, s) in enumerate(pairs):
            rep = evaluate_layout(layout, s.canvas, s.saliency)
            reports.append(rep)
            rows.append({"index": i, **rep.to_dict()})
        report = {
            "command": "eval",
            "config": {"data": str(data_dir), "layouts": layouts_dir},
            "aggregate": aggregate_reports(reports),
            "rows": rows,
        }
        if out_path:
            Path(out_path).write_text(json.dumps(report, indent=1))
        emit(report)

    run_guarded(body)


@main.command("gradcheck")
@click.option("--seed", default=0, show_default=True)
@click.option("--corrupt", is_flag=True, help="inject a gradient error as a negative control")
@click.option("--tol", default=1e-3, show_default=True)
def gradcheck_cmd(seed, corrupt, tol):
    """Finite-difference check of every differentiable block."""

    def body():
        report = run_gradcheck(seed=seed, corrupt=corrupt, tol=tol)
        for block in report["blocks"]:
            status = "ok" if block["passed"] else "FAIL"
            log(f"{block['name']}: max rel err {block['max_rel_err']:.3e} [{status}]")
        emit({"command": "gradcheck", "config": {"seed": seed, "corrupt": corrupt, "tol": tol}, **report})
        if not report["passed"]:
            sys.exit(2)

    run_guarded(body)


@main.command("serve")
@click.option("--ckpt", "--checkpoint", "ckpt", required=True, type=click.Path(exists=True))
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--max-inflight", default=4, show_default=True)
def serve_cmd(ckpt, port, host, max_inflight):
    """Serve the HTTP API for a trained checkpoint."""

    def body():
        import uvicorn

        from .service import create_app

        app = create_app(checkpoint=ckpt, max_inflight=max_inflight)
        emit(
            {
                "command": "serve",
                "config": {"ckpt": str(ckpt), "port": port, "host": host, "max_inflight": max_inflight},
                "checkpoint_hash": checkpoint_hash(ckpt),
            }
        )
        try:
            uvicorn.run(app, host=host, port=port, log_level="warning")
        except SystemExit as exc:  # uvicorn exits 1 on bind failure
            if exc.code:
                log(f"server failed to start on {host}:{port}")
                sys.exit(2)

    run_guarded(body)


if __name__ == "__main__":
    main()
