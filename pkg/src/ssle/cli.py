"""Command-line entry point: ``ssle <command> [options]``.

Progress and the resolved configuration go to stderr; result tables go to
stdout; files land under ``--out``. Set ``SSLE_THREADS`` to cap BLAS threads
and generation workers.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from . import __version__
from .checkpoint import CheckpointError
from .config import ConfigError, RunConfig, load_config
from .datagen import build_manifest, manifest_digest, read_manifest, MANIFEST_NAME
from .evaluate import MetricsReport, evaluate_set
from .features import analysis_stft
from .gradcheck import CASES, TOLERANCE, run_suite
from .inference import enhance, oracle_enhance
from .models import DAE, PAE, load_checkpoint, save_checkpoint
from .training import TrainingError, train_dae, train_meta, train_pae
from .wavio import WavFormatError, read_wav, write_wav

log = logging.getLogger("ssle")


class UsageError(Exception):
    pass


def _threads():
    raw = os.environ.get("SSLE_THREADS", "").strip()
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"SSLE_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"SSLE_THREADS must be a positive integer, got {raw!r}")
    return n


def _thread_limit(n):
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    log.info("config hash=%s", cfg.digest())
    section = []
    for line in cfg.to_text().splitlines()[1:] + ["[end]"]:
        if line.startswith("[") and section:
            log.info("config %s", " ".join(section))
            section = []
        section.append(line.replace(" = ", "="))
    return cfg


def _out_dir(args, cfg, default: str) -> Path:
    out = Path(args.out or cfg.paths.get("out") or default)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    (out / "config.resolved.txt").write_text(cfg.to_text(), encoding="utf-8")
    return out


def _need(path, what: str, flag: str) -> Path:
    if not path:
        raise UsageError(f"{what} not given; pass {flag} or set it under [paths]")
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{what} {path} does not exist")
    return path


def _manifest_path(args, cfg) -> Path:
    path = _need(args.manifest or cfg.paths.get("manifest"), "manifest", "--manifest")
    return path / MANIFEST_NAME if path.is_dir() else path


def _load_model(path, kind):
    model, meta, _ = load_checkpoint(path, expected_kind=kind)
    return model, meta


def _progress(stage: str, every: int = 10):
    def report(row):
        if row["step"] % every == 0:
            log.info("%s step=%d epoch=%d kl_weight=%.3g total=%.6g recon=%.6g kl=%.6g",
                     stage, row["step"], row["epoch"], row["kl_weight"], row["total"],
                     row["recon"], row["kl"])
    return report


def _figures(cfg) -> bool:
    return cfg.eval.figures


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args, cfg):
    out = _out_dir(args, cfg, "data")
    workers = _threads() or 1
    log.info("synth: rendering %d utterances into %s", cfg.data.n_pae + cfg.data.n_dae + cfg.data.n_eval, out)
    manifest = build_manifest(cfg.data, out, workers=workers)
    digest = manifest_digest(out / MANIFEST_NAME)
    for split in ("pae", "dae", "eval"):
        print(f"{split:<5} {len(manifest.split(split)):>4} utterances")
    print(f"digest {digest}")


def cmd_train_pae(args, cfg):
    mpath = _manifest_path(args, cfg)
    out = _out_dir(args, cfg, "pae")
    manifest = read_manifest(mpath)
    model, opt, report = train_pae(manifest, cfg.pae, progress=_progress("train-pae"))
    meta = train_meta(cfg.pae, "pae", opt.state.t, cfg.digest())
    meta["data_digest"] = manifest_digest(mpath)
    save_checkpoint(model, out / "pae.ckpt", opt, meta)
    report.write(out / "pae_loss.txt")
    if _figures(cfg):
        from .plotting import plot_losses
        plot_losses(report, out / "pae_loss.png")
    first, last = report.epochs()[0], report.epochs()[-1]
    print(f"pae steps={opt.state.t} loss first_epoch={first['total']:.6g} last_epoch={last['total']:.6g}")
    print(f"checkpoint {out / 'pae.ckpt'}")


def cmd_train_dae(args, cfg):
    mpath = _manifest_path(args, cfg)
    pae_path = _need(args.pae or cfg.paths.get("pae"), "PAE checkpoint", "--pae")
    out = _out_dir(args, cfg, "dae")
    manifest = read_manifest(mpath)
    pae, _ = _load_model(pae_path, "pae")
    dae, opt, report = train_dae(manifest, pae, cfg.dae, progress=_progress("train-dae"))
    meta = train_meta(cfg.dae, "dae", opt.state.t, cfg.digest())
    meta["data_digest"] = manifest_digest(mpath)
    save_checkpoint(dae, out / "dae.ckpt", opt, meta)
    report.write(out / "dae_loss.txt")
    if _figures(cfg):
        from .plotting import plot_losses
        plot_losses(report, out / "dae_loss.png")
    first, last = report.epochs()[0], report.epochs()[-1]
    print(f"dae steps={opt.state.t} recon first_epoch={first['recon']:.6g} last_epoch={last['recon']:.6g}")
    print(f"checkpoint {out / 'dae.ckpt'}")


def _models(args, cfg):
    pae, _ = _load_model(_need(args.pae or cfg.paths.get("pae"), "PAE checkpoint", "--pae"), "pae")
    dae, _ = _load_model(_need(args.dae or cfg.paths.get("dae"), "DAE checkpoint", "--dae"), "dae")
    if not isinstance(pae, PAE) or not isinstance(dae, DAE):
        raise UsageError("--pae must be a PAE checkpoint and --dae a DAE checkpoint")
    return pae, dae


def cmd_enhance(args, cfg):
    pae, dae = _models(args, cfg)
    wave = read_wav(_need(args.input, "input file", "INPUT"))
    est = enhance(wave, pae, dae)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    write_wav(args.output, est)
    print(f"wrote {args.output} ({len(est)} samples at {est.sample_rate} Hz)")


def _report(out, cfg, metrics: MetricsReport, stem: str, example=None):
    metrics.write(out, stem)
    if _figures(cfg):
        from .plotting import plot_metrics, plot_spectrograms
        plot_metrics(metrics, out / f"{stem}.png")
        if example:
            plot_spectrograms({k: analysis_stft(w).magnitude().frames for k, w in example.items()},
                              out / f"{stem}_example.png")
    print(metrics.table())


def cmd_eval(args, cfg):
    mpath = _manifest_path(args, cfg)
    pae, dae = _models(args, cfg)
    out = _out_dir(args, cfg, "eval")
    manifest = read_manifest(mpath)
    first = {}

    def enhancer(record, waves):
        est = enhance(waves["mixture"], pae, dae)
        if not first:
            first.update(mixture=waves["mixture"], enhanced=est, clean=waves["clean"])
        log.info("eval %s %s", record.id, record.condition)
        return est

    _report(out, cfg, evaluate_set(manifest, enhancer, seg_frame=cfg.eval.seg_frame), "metrics", first)


def cmd_oracle(args, cfg):
    mpath = _manifest_path(args, cfg)
    out = _out_dir(args, cfg, "oracle")
    manifest = read_manifest(mpath)
    first = {}

    def enhancer(record, waves):
        est = oracle_enhance(waves["mixture"], waves["clean"], waves["interference"])
        if not first:
            first.update(mixture=waves["mixture"], oracle=est, clean=waves["clean"])
        return est

    metrics = evaluate_set(manifest, enhancer, components=("clean", "mixture", "interference"),
                           seg_frame=cfg.eval.seg_frame)
    _report(out, cfg, metrics, "oracle_metrics", first)


def cmd_gradcheck(args, cfg):
    names = args.layers or list(CASES)
    unknown = [n for n in names if n not in CASES]
    if unknown:
        raise UsageError(f"unknown layer(s) {unknown}; choose from {list(CASES)}")
    result = run_suite(args.instances, seed=cfg.seed, names=names)
    print(f"{'layer':<16}{'instances':>10}  {'max rel error':>14}  status")
    failed = []
    for name, r in result.items():
        ok = r["max_rel_error"] < TOLERANCE
        failed += [] if ok else [name]
        print(f"{name:<16}{r['instances']:>10}  {r['max_rel_error']:>14.3e}  {'ok' if ok else 'FAIL'}")
    if failed:
        raise TrainingError(f"gradient check above {TOLERANCE:g} for: {', '.join(failed)}")


def cmd_pipeline(args, cfg):
    """synth, train-pae, train-dae and eval into one directory."""
    root = _out_dir(args, cfg, "run")
    steps = [(cmd_synth, {"out": root / "data"}),
             (cmd_train_pae, {"out": root / "pae", "manifest": root / "data"}),
             (cmd_train_dae, {"out": root / "dae", "manifest": root / "data", "pae": root / "pae" / "pae.ckpt"}),
             (cmd_eval, {"out": root / "eval", "manifest": root / "data", "pae": root / "pae" / "pae.ckpt",
                         "dae": root / "dae" / "dae.ckpt"})]
    for fn, overrides in steps:
        ns = argparse.Namespace(**{**vars(args), **{k: str(v) for k, v in overrides.items()}})
        fn(ns, cfg)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--seed", type=int, help="override the configured seed everywhere")
    common.add_argument("--out", help="output directory")
    common.add_argument("-q", "--quiet", action="store_true", help="no progress on stderr")

    parser = argparse.ArgumentParser(prog="ssle", description="Self-supervised speech enhancement toolkit.")
    parser.add_argument("--version", action="version", version=f"ssle {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_)
        p.set_defaults(func=fn)
        return p

    add("synth", cmd_synth, "generate the synthetic corpus and its manifest")
    p = add("train-pae", cmd_train_pae, "train the clean-speech autoencoder and masking module")
    p.add_argument("--manifest")
    p = add("train-dae", cmd_train_dae, "train the mixture autoencoder against a frozen PAE")
    p.add_argument("--manifest")
    p.add_argument("--pae")
    p = add("enhance", cmd_enhance, "enhance one WAV file")
    p.add_argument("--pae")
    p.add_argument("--dae")
    p.add_argument("input")
    p.add_argument("output")
    p = add("eval", cmd_eval, "score learned enhancement on the evaluation split")
    p.add_argument("--manifest")
    p.add_argument("--pae")
    p.add_argument("--dae")
    p = add("oracle", cmd_oracle, "score ground-truth masks on the evaluation split")
    p.add_argument("--manifest")
    p = add("gradcheck", cmd_gradcheck, "finite-difference check of every layer type")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--layers", nargs="*")
    add("pipeline", cmd_pipeline, "synth, train-pae, train-dae and eval in one go")
    return parser


ERRORS = (ConfigError, CheckpointError, WavFormatError, TrainingError, UsageError,
          FileNotFoundError, ValueError, OSError, KeyError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        cfg = _config(args)
        with _thread_limit(_threads()):
            args.func(args, cfg)
    except ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"ssle {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
