"""Command-line entry points.

Three subcommands: ``melspec`` turns a WAV into a spectrogram CSV,
``explain`` runs the engine on one labeled input, and ``evaluate`` scores a
manifest with and without the explanation filter. Every run echoes its
effective configuration to stderr; results go to files under --out.

Exit codes: 0 success, 1 usage errors (bad flags, unreadable inputs, bad
manifests), 2 runtime failures (model process, protocol, engine).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import shlex
import sys
from pathlib import Path

import numpy as np

from .engine import EvidenceConfig, EvidenceError, Selection, run_evidence
from .harness import EvidenceHarnessError, load_manifest, run_experiment
from .predictor import (
    PredictorError,
    connect_subprocess,
    linear_softmax_predictor,
    planted_rows_predictor,
    uniform_predictor,
)
from .report import save_importance_figure, save_metrics_figure, save_overview_figure
from .spectra import (
    MelParams,
    Spectrogram,
    load_wav,
    mel_spectrogram,
    pad_or_trim,
    read_spectrogram_csv,
    write_spectrogram_csv,
    write_spectrogram_png,
)

__all__ = ["main"]


class UsageError(Exception):
    """Bad invocation: wrong flags or unreadable inputs."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage by default; the contract here is 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_mel_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--sample-rate", type=int, default=22050, help="resample target in Hz")
    sub.add_argument("--n-fft", type=int, default=2048, help="FFT window length")
    sub.add_argument("--hop", type=int, default=344, help="hop length in samples")
    sub.add_argument("--n-mels", type=int, default=150, help="number of mel bands")
    sub.add_argument(
        "--pad-seconds",
        type=float,
        default=None,
        help="zero-pad or truncate the clip to this many seconds before the transform",
    )


def _add_model_flags(sub: argparse.ArgumentParser) -> None:
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--model", help="model process command line, e.g. 'python -m my_model'")
    group.add_argument(
        "--builtin",
        help=(
            "synthetic predictor: planted:rows=A-B[,k=F][,bias=F] | "
            "linear:file=weights.csv | uniform[:classes=N]"
        ),
    )
    sub.add_argument(
        "--model-timeout", type=float, default=120.0, help="seconds to wait for a model reply"
    )


def _add_evidence_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--num-chunks", type=int, default=22, help="row chunks in the mask grid")
    sub.add_argument("--features", type=int, default=2, help="chunks kept per masked variant")
    sub.add_argument("--iterations", type=int, default=500, help="masked variants to score")
    sub.add_argument(
        "--select",
        default="top:0.25",
        help="survivor rule, top:FRACTION or abs:THRESHOLD",
    )
    sub.add_argument(
        "--estimator", choices=("unweighted", "weighted"), default="unweighted",
        help="average survivors plainly or weighted by 1/(entropy+1)",
    )
    sub.add_argument(
        "--weight-source", choices=("raw_entropy", "normalized_entropy"), default="raw_entropy",
        help="entropy fed into the survivor weight",
    )
    sub.add_argument(
        "--seed", type=int, default=None,
        help="PRNG seed for mask sampling (falls back to $EVIDENCE_SEED, then 0)",
    )
    sub.add_argument(
        "--exhaustive", action="store_true",
        help="enumerate every chunk subset instead of sampling (ignores --features and --iterations)",
    )
    sub.add_argument(
        "--threads", type=int, default=None,
        help="worker threads for batch scoring (default: available cores)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evidence", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)

    melspec = subs.add_parser("melspec", help="WAV to spectrogram CSV (optionally PNG)")
    melspec.add_argument("--in", dest="infile", required=True, help="input WAV file")
    melspec.add_argument("--out", required=True, help="output CSV path")
    melspec.add_argument("--png", default=None, help="also render a grayscale PNG here")
    _add_mel_flags(melspec)
    melspec.set_defaults(func=cmd_melspec)

    explain = subs.add_parser("explain", help="explain one labeled input")
    explain.add_argument("--in", dest="infile", required=True, help="input .csv spectrogram or .wav")
    explain.add_argument("--label", type=int, required=True, help="true class index")
    explain.add_argument("--out", required=True, help="output directory")
    _add_model_flags(explain)
    _add_evidence_flags(explain)
    _add_mel_flags(explain)
    explain.set_defaults(func=cmd_explain)

    evaluate = subs.add_parser("evaluate", help="score a manifest with and without the filter")
    evaluate.add_argument("--manifest", required=True, help="manifest JSON path")
    evaluate.add_argument("--out", required=True, help="output directory")
    _add_model_flags(evaluate)
    _add_evidence_flags(evaluate)
    _add_mel_flags(evaluate)
    evaluate.set_defaults(func=cmd_evaluate)

    return parser


def _parse_rows(text: str) -> list[int]:
    rows = []
    for part in text.split("+"):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            rows.extend(range(int(a), int(b) + 1))
        else:
            rows.append(int(part))
    return rows


def make_builtin(text: str):
    """Parse the --builtin mini-language into a predictor."""
    name, _, rest = text.partition(":")
    params: dict[str, str] = {}
    if rest:
        for kv in rest.split(","):
            if "=" not in kv:
                raise UsageError(f"--builtin: expected key=value, got {kv!r}")
            key, value = kv.split("=", 1)
            params[key.strip()] = value.strip()
    try:
        if name == "planted":
            if "rows" not in params:
                raise UsageError("--builtin planted: needs rows=A-B (ranges join with +)")
            rows = _parse_rows(params.pop("rows"))
            steepness = float(params.pop("k", "10"))
            bias = float(params.pop("bias", "0.5"))
            _reject_unused(name, params)
            return planted_rows_predictor(rows, steepness=steepness, bias=bias)
        if name == "linear":
            if "file" not in params:
                raise UsageError("--builtin linear: needs file=weights.csv")
            path = Path(params.pop("file"))
            _reject_unused(name, params)
            try:
                arr = np.loadtxt(path, delimiter=",", ndmin=2)
            except OSError as exc:
                raise UsageError(f"--builtin linear: cannot read {path}: {exc}") from exc
            if arr.shape[1] < 2:
                raise UsageError(f"--builtin linear: {path} needs weight columns plus a bias column")
            return linear_softmax_predictor(arr[:, :-1], arr[:, -1])
        if name == "uniform":
            classes = int(params.pop("classes", "2"))
            _reject_unused(name, params)
            return uniform_predictor(classes)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"--builtin {name}: {exc}") from exc
    raise UsageError(f"--builtin: unknown builtin {name!r}")


def _reject_unused(name: str, params: dict) -> None:
    if params:
        raise UsageError(f"--builtin {name}: unknown parameter(s) {', '.join(sorted(params))}")


def make_predictor(args):
    if args.builtin is not None:
        return make_builtin(args.builtin)
    command = shlex.split(args.model)
    if not command:
        raise UsageError("--model: empty command")
    return connect_subprocess(command, timeout=args.model_timeout)


def _mel_params(args) -> MelParams:
    try:
        return MelParams(
            n_fft=args.n_fft, hop=args.hop, n_mels=args.n_mels, sample_rate=args.sample_rate
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("EVIDENCE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"EVIDENCE_SEED must be an integer, got {env!r}") from exc
    return 0


def _resolve_threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, os.cpu_count() or 1)


def _evidence_config(args) -> EvidenceConfig:
    try:
        selection = Selection.parse(args.select)
        return EvidenceConfig(
            num_chunks=args.num_chunks,
            features=args.features,
            iterations=args.iterations,
            selection=selection,
            estimator=args.estimator,
            weight_source=args.weight_source,
            seed=_resolve_seed(args),
            exhaustive=args.exhaustive,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _echo_config(config: EvidenceConfig) -> None:
    print("config: " + json.dumps(config.to_dict(), sort_keys=True), file=sys.stderr)


def _load_input(args, params: MelParams) -> Spectrogram:
    # Missing/unreadable paths are usage errors (exit 1); decode and codec
    # failures on an existing file are runtime errors (exit 2).
    path = Path(args.infile)
    suffix = path.suffix.lower()
    try:
        if suffix == ".csv":
            return read_spectrogram_csv(path)
        if suffix == ".wav":
            clip = load_wav(path, target_rate=params.sample_rate)
            if args.pad_seconds is not None:
                clip = pad_or_trim(clip, args.pad_seconds)
            return mel_spectrogram(clip, params)
    except (FileNotFoundError, IsADirectoryError, PermissionError):
        raise UsageError(f"--in {path}: file not found or unreadable") from None
    raise UsageError(f"--in {path}: unsupported input type {suffix!r} (need .csv or .wav)")


def cmd_melspec(args) -> int:
    params = _mel_params(args)
    path = Path(args.infile)
    try:
        clip = load_wav(path, target_rate=params.sample_rate)
        if args.pad_seconds is not None:
            clip = pad_or_trim(clip, args.pad_seconds)
        spec = mel_spectrogram(clip, params)
    except (FileNotFoundError, IsADirectoryError, PermissionError):
        raise UsageError(f"--in {path}: file not found or unreadable") from None
    write_spectrogram_csv(spec, args.out)
    if args.png is not None:
        write_spectrogram_png(spec, args.png)
    print(f"wrote {spec.l}x{spec.d} spectrogram to {args.out}")
    return 0


def _write_histogram_csv(hist, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["chunk", "count", "hz_lo", "hz_hi", "important"])
        for z, (count, imp) in enumerate(zip(hist.counts, hist.important)):
            if hist.chunk_frequencies is not None:
                lo, hi = hist.chunk_frequencies[z]
                writer.writerow([z, int(count), repr(float(lo)), repr(float(hi)), int(imp)])
            else:
                writer.writerow([z, int(count), "", "", int(imp)])


def cmd_explain(args) -> int:
    params = _mel_params(args)
    config = _evidence_config(args)
    _echo_config(config)
    spec = _load_input(args, params)
    predictor = make_predictor(args)
    try:
        result = run_evidence(spec, args.label, predictor, config, workers=_resolve_threads(args))
    finally:
        closer = getattr(predictor, "close", None)
        if closer is not None:
            closer()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_spectrogram_csv(
        Spectrogram(values=result.chi.values, row_frequencies=spec.row_frequencies),
        out_dir / "chi.csv",
    )
    write_spectrogram_csv(result.filtered, out_dir / "filtered.csv")
    (out_dir / "result.json").write_text(result.to_json(), encoding="utf-8")
    _write_histogram_csv(result.histogram, out_dir / "histogram.csv")
    save_importance_figure(result.histogram, out_dir / "histogram.png")
    save_overview_figure(spec, result.chi.values, result.filtered, out_dir / "overview.png")
    print(f"survivors: {result.n_survivors}")
    print(f"wall_time_s: {result.wall_time_s:.3f}")
    return 0


def cmd_evaluate(args) -> int:
    params = _mel_params(args)
    config = _evidence_config(args)
    _echo_config(config)
    try:
        manifest = load_manifest(args.manifest)
    except FileNotFoundError:
        raise UsageError(f"--manifest {args.manifest}: file not found") from None
    except (OSError, ValueError) as exc:
        raise UsageError(f"--manifest {args.manifest}: {exc}") from None
    predictor = make_predictor(args)
    out_dir = Path(args.out)
    try:
        baseline, evidence = run_experiment(
            manifest,
            predictor,
            config,
            out_dir,
            mel_params=params,
            pad_seconds=args.pad_seconds,
            workers=_resolve_threads(args),
        )
    finally:
        closer = getattr(predictor, "close", None)
        if closer is not None:
            closer()
    save_metrics_figure(baseline, evidence, out_dir / "metrics.png")
    for report in (baseline, evidence):
        print(
            f"{report.condition}: macro_f1={report.macro_f1:.6f} "
            f"macro_sensitivity={report.macro_sensitivity:.6f} auc={report.auc:.6f}"
        )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return int(code) if code is not None else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (PredictorError, EvidenceError, EvidenceHarnessError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
