"""Command-line driver: ``mmdsculpt {train,eval,lps,sample-prior,copy-latent,gen-data}``.

Exit codes: 0 success, 2 config/input error, 3 training diverged.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
from scipy.stats import ks_2samp

from .config import ConfigError, build_dataset, load_experiment, parse_dataset, resolve_output_dir
from .data import FormatError, generate_xy_family, read_latent_dump, write_idx, write_latent_dump
from .metrics import distribution_report, lps_mlp, write_metrics_csv
from .mmd import mmd2_biased
from .models import encode_array, load_checkpoint
from .priors import PriorConfigError, PriorSpec, load_prior_config, sample_prior
from .trainer import DivergenceError, evaluate, seed_streams, train

log = logging.getLogger("mmdsculpt")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3
COPY_BATCH = 512


def _progress(rec) -> None:
    log.info("epoch %d  recon %.6f  penalty %.6f  (%.2fs)", rec.epoch, rec.recon, rec.penalty, rec.seconds)


def _load(args):
    return load_experiment(args.config, seed=args.seed, output_dir=args.out)


def cmd_train(args) -> int:
    cfg = _load(args)
    rngs = seed_streams(cfg.train.seed)
    images, factors = build_dataset(cfg.dataset, rngs["data"])
    out = cfg.output_dir
    params, history = train(cfg.train, images, cfg.prior, out, rngs=rngs, progress=_progress)
    metrics = evaluate(params, images, cfg.prior, cfg.train.kernel, factors, out, cfg.metrics)
    for k, v in metrics.items():
        print(f"{k}\t{v:.6g}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load(args)
    params = _load_checkpoint(args.checkpoint)
    rngs = seed_streams(cfg.train.seed)
    images, factors = build_dataset(cfg.dataset, rngs["data"])
    if params.input_dim != images[0].size:
        raise ConfigError("dataset", f"checkpoint expects {params.input_dim} inputs, "
                                     f"dataset images have {images[0].size}")
    metrics = evaluate(params, images, cfg.prior, cfg.train.kernel, factors, cfg.output_dir, cfg.metrics)
    for k, v in metrics.items():
        print(f"{k}\t{v:.6g}")
    return EXIT_OK


def _load_checkpoint(path):
    try:
        return load_checkpoint(path)
    except OSError as exc:
        raise ConfigError("checkpoint", f"cannot read {path}: {exc}") from exc


def cmd_lps(args) -> int:
    z = read_latent_dump(args.dump).astype(np.float64)
    if z.shape[1] < 2:
        raise ConfigError("dump", f"LPS needs d >= 2, dump has d={z.shape[1]}")
    report = lps_mlp(z, split=args.split, seed=args.seed, epochs=args.epochs)
    out = resolve_output_dir(args.out) if args.out else Path(args.dump).parent
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "lps.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "value"])
        for i, r2 in enumerate(report.r2):
            w.writerow([f"r2_dim{i}", repr(r2)])
        w.writerow(["lps", repr(report.lps)])
    for i, r2 in enumerate(report.r2):
        print(f"r2_dim{i}\t{r2:.6f}")
    print(f"lps\t{report.lps:.6f}")
    return EXIT_OK


def cmd_sample_prior(args) -> int:
    path = Path(args.prior)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("prior", f"cannot read {path}: {exc}") from exc
    spec = load_prior_config(text, path.parent)
    if args.n < 0:
        raise ConfigError("n", f"must be >= 0, got {args.n}")
    z = sample_prior(spec, args.n, np.random.default_rng(args.seed))
    dump = Path(args.out_dump)
    dump.parent.mkdir(parents=True, exist_ok=True)
    write_latent_dump(dump, z)
    report_dir = Path(args.report_dir) if args.report_dir else dump.with_suffix(".report")
    distribution_report(z, report_dir, title=f"{args.n} samples from {path.name}")
    print(f"wrote {dump} ({args.n}×{spec.d}) and report in {report_dir}")
    return EXIT_OK


def cmd_copy_latent(args) -> int:
    cfg = _load(args)
    if args.dataset:
        try:
            doc = json.loads(Path(args.dataset).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("dataset", f"cannot read {args.dataset}: {exc}") from exc
        cfg.dataset = parse_dataset(doc.get("dataset", doc), Path(args.dataset).parent)
    teacher = _load_checkpoint(args.teacher)
    if teacher.latent_dim != cfg.train.latent_dim:
        raise ConfigError("model.latent_dim",
                          f"teacher has d={teacher.latent_dim} but student config asks for "
                          f"d={cfg.train.latent_dim}")
    rngs = seed_streams(cfg.train.seed)
    images, factors = build_dataset(cfg.dataset, rngs["data"])
    if teacher.input_dim != images[0].size:
        raise ConfigError("dataset", f"teacher expects {teacher.input_dim} inputs, "
                                     f"dataset images have {images[0].size}")
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    dump = out / "teacher_latents.ltnt"
    write_latent_dump(dump, encode_array(teacher, images))
    prior = PriorSpec.from_dump(dump)

    student, _ = train(cfg.train, images, prior, out, rngs=rngs, progress=_progress)
    metrics = evaluate(student, images, prior, cfg.train.kernel, factors, out / "student", cfg.metrics)
    teacher_summary = distribution_report(prior.empirical.table, out / "teacher", title="teacher latents")
    z_student = encode_array(student, images)
    for i in range(prior.d):
        metrics[f"ks_dim{i}"] = float(ks_2samp(z_student[:, i], prior.empirical.table[:, i]).statistic)
    rng = rngs["eval"]
    k = min(COPY_BATCH, z_student.shape[0])
    batch = z_student[rng.choice(z_student.shape[0], size=k, replace=False)]
    metrics["mmd2_student_vs_teacher"] = mmd2_biased(batch, sample_prior(prior, k, rng),
                                                     cfg.train.kernel).value
    metrics["teacher_near_zero_variance_dims"] = float(len(teacher_summary["near_zero_variance_dims"]))
    write_metrics_csv(out / "metrics.csv", metrics)
    if teacher_summary["near_zero_variance_dims"]:
        print(f"warning: teacher latents have near-zero variance in dims "
              f"{teacher_summary['near_zero_variance_dims']}", file=sys.stderr)
    for k_, v in metrics.items():
        print(f"{k_}\t{v:.6g}")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    out = resolve_output_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        images, factors = generate_xy_family(args.variant, args.n, args.resolution,
                                             np.random.default_rng(args.seed))
    except ValueError as exc:
        raise ConfigError("gen-data", str(exc)) from exc
    write_idx(out / "images.idx", images)
    factors.to_csv(out / "factors.csv")
    print(f"wrote {args.n} {args.variant} images to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmdsculpt", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_overrides(sp):
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="override the config output_dir")

    sp = sub.add_parser("train", help="train an autoencoder and write metrics")
    sp.add_argument("config")
    with_overrides(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on the config's dataset")
    sp.add_argument("checkpoint")
    sp.add_argument("config")
    with_overrides(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("lps", help="Latent Predictability Score of a latent dump")
    sp.add_argument("dump")
    sp.add_argument("--out", default=None, help="directory for lps.csv (default: next to the dump)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--split", type=float, default=0.8)
    sp.add_argument("--epochs", type=int, default=200)
    sp.set_defaults(func=cmd_lps)

    sp = sub.add_parser("sample-prior", help="draw prior samples into a latent dump")
    sp.add_argument("prior")
    sp.add_argument("n", type=int)
    sp.add_argument("out_dump")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--report-dir", default=None)
    sp.set_defaults(func=cmd_sample_prior)

    sp = sub.add_parser("copy-latent", help="train a student to copy a teacher's latent distribution")
    sp.add_argument("teacher")
    sp.add_argument("config", help="student experiment config")
    sp.add_argument("--dataset", default=None, help="JSON file overriding the dataset section")
    with_overrides(sp)
    sp.set_defaults(func=cmd_copy_latent)

    sp = sub.add_parser("gen-data", help="write an XY-family dataset as IDX + factors.csv")
    sp.add_argument("--variant", default="XY")
    sp.add_argument("--n", type=int, default=5000)
    sp.add_argument("--resolution", type=int, default=32)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, PriorConfigError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
