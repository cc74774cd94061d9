"""Command-line interface: dataset simulation, training, sampling,
evaluation, and the draft-length benchmark harness.

Every command resolves its inputs into a plain-arguments dictionary,
executes, and writes a ``manifest.json`` holding that dictionary plus the
produced artifact paths. ``spectpp replay`` re-executes a manifest into a
fresh directory; artifacts flagged reproducible come out byte-identical
(tables with wall-clock columns cannot).

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numerical failure.
"""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import evaluation as ev
from .classical import (
    NonFiniteIntensityError,
    ground_truth_loglik,
    make_synthetic_dataset,
    process_from_record,
)
from .core import EventSequence, RngStream, read_sequences, validate_sequence, write_sequences
from .model import (
    CheckpointFormatError,
    ModelConfig,
    load_checkpoint,
    save_checkpoint,
    sequence_loglik,
)
from .sampler import ZeroResidualError, ar_sample, tpp_sd_sample
from .training import TrainConfig, split_dataset, train as run_training

click.UsageError.exit_code = 1


class DataError(click.ClickException):
    exit_code = 2


class NumericalError(click.ClickException):
    exit_code = 3


def _read_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"file not found: {path}")
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON in {path}: {exc}")


def _load_process(path: str):
    try:
        return process_from_record(_read_json(path))
    except (KeyError, ValueError) as exc:
        raise DataError(f"bad process parameter file {path}: {exc}")


def _load_checkpoint(path: str):
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {path}")
    except (CheckpointFormatError, KeyError, ValueError) as exc:
        raise DataError(f"bad checkpoint {path}: {exc}")


def _load_sequences(path: str) -> list[EventSequence]:
    try:
        return read_sequences(path)
    except FileNotFoundError:
        raise DataError(f"sequence file not found: {path}")
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise DataError(f"bad sequence file {path}: {exc}")


def _write_table(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# command implementations (shared by the CLI wrappers and `replay`)
# ---------------------------------------------------------------------------

def run_simulate(args: dict, out_dir: Path) -> dict:
    if args["n"] < 1:
        raise DataError("n must be >= 1")
    process = _load_process(args["process"])
    sequences = make_synthetic_dataset(process, args["n"], args["t_end"],
                                       RngStream(args["seed"]))
    write_sequences(out_dir / "sequences.jsonl", sequences)
    return {"sequences": {"path": "sequences.jsonl", "reproducible": True}}


def run_train(args: dict, out_dir: Path) -> dict:
    sequences = _load_sequences(args["data"])
    if not sequences:
        raise DataError(f"no sequences in {args['data']}")
    model_config = ModelConfig(**_read_json(args["model_config"]))
    train_config = TrainConfig(**_read_json(args["train_config"]))
    for i, seq in enumerate(sequences):
        report = validate_sequence(seq, model_config.n_marks)
        if not report.ok:
            raise DataError(f"sequence {i} invalid: {report.message}")
    train_seqs, val_seqs, _ = split_dataset(sequences)
    if not train_seqs or not val_seqs:
        raise DataError("dataset too small for an 80/10/10 split")
    report = run_training(train_seqs, val_seqs, model_config, train_config)
    save_checkpoint(out_dir / "checkpoint.json", report.checkpoint)
    _write_table(out_dir / "report.csv",
                 ["epoch", "train_loglik", "val_loglik", "is_best"],
                 [[e, _format_cell(tr), _format_cell(va), int(e == report.best_epoch)]
                  for e, (tr, va) in enumerate(zip(report.train_loglik, report.val_loglik))])
    return {"checkpoint": {"path": "checkpoint.json", "reproducible": True},
            "report": {"path": "report.csv", "reproducible": True}}


_STATS_HEADER = ["run", "mode", "gamma", "n_events", "events_drafted", "events_accepted",
                 "alpha", "target_forward_passes", "draft_forward_passes",
                 "replacement_events", "residual_fallbacks", "t_ar", "t_sd"]


def run_sample(args: dict, out_dir: Path) -> dict:
    target = _load_checkpoint(args["target"])
    draft = _load_checkpoint(args["draft"]) if args.get("draft") else None
    mode = args["mode"]
    root = RngStream(args["seed"])
    sequences, rows = [], []
    for run in range(args["runs"]):
        rng = root.child(f"run{run}")
        try:
            if mode == "ar":
                seq, stats = ar_sample(target, args["t_end"], rng)
            else:
                seq, stats = tpp_sd_sample(target, draft, args["t_end"], args["gamma"],
                                           rng, policy=args["policy"])
        except (FloatingPointError, ZeroResidualError, NonFiniteIntensityError) as exc:
            raise NumericalError(str(exc))
        sequences.append(seq)
        if mode == "sd":
            rows.append([run, mode, args["gamma"], len(seq), stats.events_drafted,
                         stats.events_accepted, _format_cell(stats.acceptance_rate),
                         stats.target_forward_passes, stats.draft_forward_passes,
                         stats.replacement_events, stats.residual_fallbacks,
                         "", _format_cell(stats.wall_seconds)])
        else:
            rows.append([run, mode, "", len(seq), "", "", "",
                         stats.target_forward_passes, "", "", "",
                         _format_cell(stats.wall_seconds), ""])
    write_sequences(out_dir / "sequences.jsonl", sequences)
    _write_table(out_dir / "stats.csv", _STATS_HEADER, rows)
    return {"sequences": {"path": "sequences.jsonl", "reproducible": True},
            "stats": {"path": "stats.csv", "reproducible": False}}


def run_eval_ks(args: dict, out_dir: Path) -> dict:
    process = _load_process(args["process"])
    sequences = _load_sequences(args["sequences"])
    pooled: list[float] = []
    for seq in sequences:
        pooled.extend(ev.time_rescale(seq, process).tolist())
    if not pooled:
        raise DataError("no events to rescale")
    report = ev.ks_statistic(pooled)
    _write_table(out_dir / "ks.csv", ["n", "d_ks", "band", "passed"],
                 [[report.n, _format_cell(report.d_ks), _format_cell(report.band),
                   int(report.passed)]])
    _write_table(out_dir / "ks_plot.csv", ["theoretical_cdf", "empirical_cdf"],
                 [[_format_cell(a), _format_cell(b)] for a, b in report.plot_data])
    return {"ks": {"path": "ks.csv", "reproducible": True},
            "ks_plot": {"path": "ks_plot.csv", "reproducible": True}}


def run_eval_wasserstein(args: dict, out_dir: Path) -> dict:
    target = _load_checkpoint(args["target"])
    draft = _load_checkpoint(args["draft"]) if args.get("draft") else None
    history = None
    for seq in _load_sequences(args["sequences"]):
        if len(seq) >= args["m_hist"]:
            history = seq
            break
    if history is None:
        raise DataError(f"no sequence with at least {args['m_hist']} events")
    d_t, d_k = ev.next_event_divergence(target, draft, history, args["m_hist"],
                                        args["n_reps"], args["gamma"],
                                        RngStream(args["seed"]), policy=args["policy"])
    _write_table(out_dir / "wasserstein.csv",
                 ["m_hist", "n_reps", "gamma", "d_ws_t", "d_ws_k"],
                 [[args["m_hist"], args["n_reps"], args["gamma"],
                   _format_cell(d_t), _format_cell(d_k)]])
    return {"wasserstein": {"path": "wasserstein.csv", "reproducible": True}}


def _make_scorer(spec: str):
    kind, _, path = spec.partition(":")
    if kind == "process" and path:
        process = _load_process(path)
        return lambda seq: ground_truth_loglik(seq, process)
    if kind == "model" and path:
        checkpoint = _load_checkpoint(path)
        return lambda seq: sequence_loglik(seq, checkpoint)
    raise DataError(f"scorer must look like process:<file> or model:<file>, got {spec!r}")


def run_eval_loglik(args: dict, out_dir: Path) -> dict:
    scorer_a = _make_scorer(args["scorer_a"])
    scorer_b = _make_scorer(args["scorer_b"])
    seqs_a = _load_sequences(args["sequences"])
    seqs_b = _load_sequences(args["sequences_b"]) if args.get("sequences_b") else seqs_a
    try:
        mean_a = ev.mean_loglik_per_event(seqs_a, scorer_a)
        mean_b = ev.mean_loglik_per_event(seqs_b, scorer_b)
    except ValueError as exc:
        raise DataError(str(exc))
    _write_table(out_dir / "loglik.csv",
                 ["loglik_a", "loglik_b", "delta_l"],
                 [[_format_cell(mean_a), _format_cell(mean_b),
                   _format_cell(abs(mean_a - mean_b))]])
    return {"loglik": {"path": "loglik.csv", "reproducible": True}}


def run_bench(args: dict, out_dir: Path) -> dict:
    target = _load_checkpoint(args["target"])
    draft = _load_checkpoint(args["draft"])
    gamma_grid = args["gamma_grid"]
    reps, runs, t_end = args["repetitions"], args["runs"], args["t_end"]
    root = RngStream(args["seed"])

    def intervals(seqs):
        chunks = [s.inter_event_times() for s in seqs if len(s)]
        return np.concatenate(chunks) if chunks else np.zeros(0)

    ar_pool: list[EventSequence] = []
    ar_times = []
    for rep in range(reps):
        elapsed = 0.0
        for run in range(runs):
            seq, stats = ar_sample(target, t_end, root.child(f"ar-{rep}-{run}"))
            elapsed += stats.wall_seconds
            ar_pool.append(seq)
        ar_times.append(elapsed)
    t_ar = float(np.mean(ar_times))
    ar_mean_ll = ev.mean_loglik_per_event(ar_pool, lambda s: sequence_loglik(s, target))

    rows = []
    for gamma in gamma_grid:
        sd_pool: list[EventSequence] = []
        sd_times = []
        drafted = accepted = 0
        for rep in range(reps):
            elapsed = 0.0
            for run in range(runs):
                seq, stats = tpp_sd_sample(target, draft, t_end, gamma,
                                           root.child(f"sd-{gamma}-{rep}-{run}"),
                                           policy=args["policy"])
                elapsed += stats.wall_seconds
                drafted += stats.events_drafted
                accepted += stats.events_accepted
                sd_pool.append(seq)
            sd_times.append(elapsed)
        t_sd = float(np.mean(sd_times))
        sd_mean_ll = ev.mean_loglik_per_event(sd_pool, lambda s: sequence_loglik(s, target))
        distance = ev.wasserstein_1d(intervals(ar_pool), intervals(sd_pool))
        rows.append([gamma, _format_cell(accepted / max(1, drafted)),
                     _format_cell(t_ar), _format_cell(t_sd), _format_cell(t_ar / t_sd),
                     _format_cell(abs(ar_mean_ll - sd_mean_ll)), _format_cell(distance)])
    _write_table(out_dir / "bench.csv",
                 ["gamma", "alpha", "t_ar", "t_sd", "speedup", "delta_l", "distance"],
                 rows)
    return {"bench": {"path": "bench.csv", "reproducible": False}}


_RUNNERS = {
    "simulate": run_simulate,
    "train": run_train,
    "sample": run_sample,
    "eval-ks": run_eval_ks,
    "eval-wasserstein": run_eval_wasserstein,
    "eval-loglik": run_eval_loglik,
    "bench": run_bench,
}


def _execute(command: str, args: dict, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    artifacts = _RUNNERS[command](args, out)
    manifest = {
        "tool": "spectpp",
        "version": __version__,
        "command": command,
        "arguments": args,
        "seed": args.get("seed"),
        "artifacts": artifacts,
        "wall_seconds": time.perf_counter() - started,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    for name, entry in artifacts.items():
        click.echo(f"{name}: {out / entry['path']}")
    return out


# ---------------------------------------------------------------------------
# click wrappers
# ---------------------------------------------------------------------------

@click.group()
@click.version_option(__version__)
def main() -> None:
    """Sample Transformer temporal point processes, speculatively or not."""


@main.command()
@click.option("--process", required=True, type=click.Path(), help="process parameter JSON")
@click.option("--n", required=True, type=int, help="number of sequences")
@click.option("--t-end", required=True, type=float, help="observation horizon")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", required=True, type=click.Path(), help="output directory")
def simulate(process, n, t_end, seed, out):
    """Simulate sequences from a classical process by thinning."""
    _execute("simulate", {"process": str(Path(process).resolve()), "n": n,
                          "t_end": t_end, "seed": seed}, out)


@main.command()
@click.option("--data", required=True, type=click.Path(), help="sequence JSONL file")
@click.option("--model-config", required=True, type=click.Path())
@click.option("--train-config", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
def train(data, model_config, train_config, out):
    """Train a checkpoint on an 80/10/10 split of the data."""
    _execute("train", {"data": str(Path(data).resolve()),
                       "model_config": str(Path(model_config).resolve()),
                       "train_config": str(Path(train_config).resolve()),
                       "seed": _read_json(train_config).get("seed", 0)}, out)


@main.command()
@click.option("--mode", required=True, type=click.Choice(["ar", "sd"]))
@click.option("--target", required=True, type=click.Path())
@click.option("--draft", type=click.Path(), default=None)
@click.option("--gamma", default=10, type=int, show_default=True)
@click.option("--t-end", required=True, type=float)
@click.option("--runs", default=1, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--policy", default="adjusted", show_default=True,
              type=click.Choice(["adjusted", "alg1-literal"]))
@click.option("--out", required=True, type=click.Path())
def sample(mode, target, draft, gamma, t_end, runs, seed, policy, out):
    """Sample sequences autoregressively (ar) or speculatively (sd)."""
    if mode == "sd" and draft is None:
        raise click.UsageError("--mode sd requires --draft")
    if runs < 1:
        raise DataError("runs must be >= 1")
    if gamma < 1:
        raise DataError("gamma must be >= 1")
    _execute("sample", {"mode": mode, "target": str(Path(target).resolve()),
                        "draft": str(Path(draft).resolve()) if draft else None,
                        "gamma": gamma, "t_end": t_end, "runs": runs, "seed": seed,
                        "policy": policy}, out)


@main.group(name="eval")
def eval_group() -> None:
    """Statistical evaluation of sample quality."""


@eval_group.command(name="ks")
@click.option("--sequences", required=True, type=click.Path())
@click.option("--process", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
def eval_ks(sequences, process, out):
    """Time-rescaling KS test of sequences against a classical process."""
    _execute("eval-ks", {"sequences": str(Path(sequences).resolve()),
                         "process": str(Path(process).resolve())}, out)


@eval_group.command(name="wasserstein")
@click.option("--target", required=True, type=click.Path())
@click.option("--draft", type=click.Path(), default=None,
              help="omit to compare two independent AR runs")
@click.option("--sequences", required=True, type=click.Path(),
              help="file providing the history prefix")
@click.option("--m-hist", default=100, type=int, show_default=True)
@click.option("--n-reps", default=100, type=int, show_default=True)
@click.option("--gamma", default=10, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--policy", default="adjusted", show_default=True,
              type=click.Choice(["adjusted", "alg1-literal"]))
@click.option("--out", required=True, type=click.Path())
def eval_wasserstein(target, draft, sequences, m_hist, n_reps, gamma, seed, policy, out):
    """Next-event Wasserstein/EMD divergence between AR and SD sampling."""
    _execute("eval-wasserstein",
             {"target": str(Path(target).resolve()),
              "draft": str(Path(draft).resolve()) if draft else None,
              "sequences": str(Path(sequences).resolve()), "m_hist": m_hist,
              "n_reps": n_reps, "gamma": gamma, "seed": seed, "policy": policy}, out)


@eval_group.command(name="loglik")
@click.option("--sequences", required=True, type=click.Path())
@click.option("--sequences-b", type=click.Path(), default=None)
@click.option("--scorer-a", required=True, help="process:<file> or model:<file>")
@click.option("--scorer-b", required=True, help="process:<file> or model:<file>")
@click.option("--out", required=True, type=click.Path())
def eval_loglik(sequences, sequences_b, scorer_a, scorer_b, out):
    """Mean per-event log-likelihood discrepancy between two scorers."""
    _execute("eval-loglik",
             {"sequences": str(Path(sequences).resolve()),
              "sequences_b": str(Path(sequences_b).resolve()) if sequences_b else None,
              "scorer_a": scorer_a, "scorer_b": scorer_b}, out)


@main.command()
@click.option("--target", required=True, type=click.Path())
@click.option("--draft", required=True, type=click.Path())
@click.option("--gamma-grid", default="1,5,10,20,40,60", show_default=True,
              help="comma-separated draft lengths")
@click.option("--repetitions", default=3, type=int, show_default=True)
@click.option("--runs", default=3, type=int, show_default=True,
              help="sequences per repetition")
@click.option("--t-end", default=100.0, type=float, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--policy", default="adjusted", show_default=True,
              type=click.Choice(["adjusted", "alg1-literal"]))
@click.option("--out", required=True, type=click.Path())
def bench(target, draft, gamma_grid, repetitions, runs, t_end, seed, policy, out):
    """Draft-length ablation: acceptance rate and speedup per gamma."""
    try:
        grid = [int(g) for g in gamma_grid.split(",") if g.strip()]
    except ValueError:
        raise click.UsageError("--gamma-grid must be comma-separated integers")
    if not grid or min(grid) < 1:
        raise click.UsageError("--gamma-grid needs positive integers")
    if repetitions < 1 or runs < 1:
        raise DataError("repetitions and runs must be >= 1")
    _execute("bench", {"target": str(Path(target).resolve()),
                       "draft": str(Path(draft).resolve()), "gamma_grid": grid,
                       "repetitions": repetitions, "runs": runs, "t_end": t_end,
                       "seed": seed, "policy": policy}, out)


@main.command()
@click.argument("manifest", type=click.Path())
@click.option("--out", required=True, type=click.Path())
def replay(manifest, out):
    """Re-execute a recorded manifest into a fresh output directory."""
    doc = _read_json(manifest)
    command = doc.get("command")
    if command not in _RUNNERS:
        raise DataError(f"manifest has unknown command {command!r}")
    _execute(command, doc["arguments"], out)


if __name__ == "__main__":
    main()
