"""
``ctddiff`` command line.

Subcommands: ``sweep-snr``, ``sweep-users``, ``ablate-coop``, ``train``,
``eval-checkpoint`` and ``selftest``. Settings come from the defaults, then
``--config FILE``, then ``--set key=value`` pairs, then the dedicated flags.
Output files land in ``--out``, defaulting to ``$CTDDIFF_OUTPUT_DIR`` (or the
current directory).

Exit codes: 0 success, 1 configuration error, 2 runtime failure (including a
diverged training run or a failing selftest).
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigError, TrainingDivergedError
from .config import ExperimentConfig, load_config
from .results import emit_results, format_float

OUTPUT_ENV = "CTDDIFF_OUTPUT_DIR"


def _parse_sets(pairs):
    out = {}
    for p in pairs or []:
        if "=" not in p:
            raise ConfigError(f"--set expects key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _out_path(args, default_name):
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUTPUT_ENV, ".")) / default_name


def _config(args) -> ExperimentConfig:
    overrides = _parse_sets(args.set)
    for flag in ("seed", "trials", "channel", "num_users", "denoiser", "checkpoint", "lambda0"):
        val = getattr(args, flag, None)
        if val is not None:
            overrides[flag] = val
    if getattr(args, "snr", None):
        overrides["snr_db_list"] = args.snr
    if getattr(args, "users", None):
        overrides["user_list"] = args.users
    if getattr(args, "no_cooperation", False):
        overrides["cooperation"] = False
    return load_config(args.config, overrides)


def _links_generator(cfg: ExperimentConfig):
    from ..channel import snr_to_noise_variance
    from ..protocol import TdmaSchedule, draw_link_set

    slot = TdmaSchedule.slot(cfg.num_users, 0, cfg.num_relays)
    var = snr_to_noise_variance(cfg.snr_db_list[0])

    def gen(rng):
        return draw_link_set(rng, slot, var, cfg.channel, cfg.channel_scale, cfg.h_floor)

    return gen


def cmd_sweep(args, kind):
    from .experiment import run_snr_sweep, run_user_sweep

    cfg = _config(args).validate()
    fn = run_snr_sweep if kind == "snr" else run_user_sweep
    result = fn(cfg, workers=args.workers)
    path = _out_path(args, f"sweep_{kind}.{args.format}")
    emit_results(result, args.format, path)
    for r in result.records:
        print(f"K={r.num_users:3d} snr={r.snr_db:6.2f} dB  psnr={r.psnr_mean:8.4f}  "
              f"ms-ssim={r.ms_ssim_mean:.4f}  mse={r.mse_mean:.5f}  var={r.effective_variance_mean:.5f}")  # fmt: skip
    print(f"wrote {path}")


def cmd_ablate(args):
    from .experiment import run_cooperation_ablation

    cfg = _config(args).validate()
    paired = run_cooperation_ablation(cfg, workers=args.workers)
    base = _out_path(args, "ablation.csv")
    stem = base.with_suffix("")
    emit_results(paired.with_cooperation, "csv", f"{stem}_coop.csv")
    emit_results(paired.without_cooperation, "csv", f"{stem}_nocoop.csv")
    rows = paired.delta_summary()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["snr_db", "num_users", "trials", "psnr_delta_mean", "psnr_delta_std", "fraction_positive"]
    w.writerow(cols)
    for row in rows:
        w.writerow([format_float(row[c]) if isinstance(row[c], float) else row[c] for c in cols])
        print(f"snr={row['snr_db']:6.2f} dB  delta={row['psnr_delta_mean']:.4f} dB  "
              f"positive={row['fraction_positive']:.3f}")  # fmt: skip
    Path(f"{stem}_delta.csv").write_text(buf.getvalue())
    print(f"wrote {stem}_coop.csv, {stem}_nocoop.csv, {stem}_delta.csv")


def cmd_train(args):
    from ..denoiser import TrainingConfig, save_checkpoint, train_hybrid
    from ..diffusion import build_linear_schedule
    from ..hybrid_noise import LambdaSchedule
    from .experiment import build_frames

    cfg = _config(args).validate(check_files=False)
    mixture = build_frames(cfg).mixture
    schedule = build_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end)
    tcfg = TrainingConfig(
        steps=cfg.train_steps,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        optimizer=cfg.optimizer,
        seed=cfg.seed,
        hidden=cfg.hidden,
        lr_schedule=cfg.lr_schedule,
    )
    result = train_hybrid(mixture, _links_generator(cfg), schedule, LambdaSchedule(cfg.lambda0, cfg.T), tcfg)
    path = _out_path(args, "checkpoint.json")
    save_checkpoint(path, result, schedule)
    tr = result.loss_trace
    k = min(100, tr.size)
    print(f"loss first-{k} mean {tr[:k].mean():.5f}, last-{k} mean {tr[-k:].mean():.5f}")
    print(f"wrote {path}")


def cmd_eval(args):
    from ..denoiser import AnalyticDenoiser, MlpDenoiser, load_checkpoint, noise_prediction_mse
    from ..diffusion import build_linear_schedule
    from .experiment import build_frames

    cfg = _config(args)
    if cfg.checkpoint is None:
        raise ConfigError("eval-checkpoint needs --checkpoint")
    if not Path(cfg.checkpoint).is_file():
        raise ConfigError(f"checkpoint {cfg.checkpoint} does not exist")
    cfg.validate(check_files=False)
    params, meta = load_checkpoint(cfg.checkpoint)
    mixture = build_frames(cfg).mixture
    if params.x_dim != mixture.dim or params.cond_dim != mixture.num_components:
        raise ConfigError("checkpoint does not match the configured source")
    schedule = build_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end)
    preds = {"trained": MlpDenoiser(params), "analytic": AnalyticDenoiser(mixture, schedule)}
    rng = np.random.default_rng(cfg.seed)
    steps = [None] + list(np.linspace(1, cfg.T, 5).round().astype(int))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "trained_mse", "analytic_mse", "excess_ratio"])
    for t in steps:
        res = noise_prediction_mse(preds, mixture, schedule, rng, cfg.trials * 100, t=t)
        ratio = res["trained"] / res["analytic"] - 1.0
        label = "all" if t is None else str(t)
        w.writerow([label, format_float(res["trained"]), format_float(res["analytic"]), format_float(ratio)])
        print(f"t={label:>5}  trained={res['trained']:.5f}  analytic={res['analytic']:.5f}  excess={ratio:+.3%}")
    path = _out_path(args, "eval_checkpoint.csv")
    path.write_text(buf.getvalue())
    print(f"wrote {path}")


def cmd_selftest(args):
    from .selftest import emit_selftest, run_selftest

    seed = args.seed if args.seed is not None else 0
    records = run_selftest(seed=seed, workers=args.workers)
    path = _out_path(args, "selftest.csv")
    emit_selftest(records, path)
    for r in records:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:28s} measured={r.measured:.6g} expected={r.expected:.6g}")
    print(f"wrote {path}")
    return 0 if all(r.passed for r in records) else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctddiff", description=__doc__.split("\n\n")[0].strip())
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sweep=True):
        p.add_argument("--config", help="flat YAML config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
        p.add_argument("--out", help="output file")
        if sweep:
            p.add_argument("--trials", type=int)
            p.add_argument("--snr", type=float, nargs="+", help="SNR points in dB")
            p.add_argument("--channel", choices=["rayleigh", "awgn"])
            p.add_argument("--num-users", dest="num_users", type=int)
            p.add_argument("--denoiser", choices=["analytic", "trained"])
            p.add_argument("--checkpoint")
        return p

    p = common(sub.add_parser("sweep-snr", help="PSNR / MS-SSIM versus SNR"))
    p.add_argument("--no-cooperation", action="store_true")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p = common(sub.add_parser("sweep-users", help="(K, SNR) heatmap grid"))
    p.add_argument("--users", type=int, nargs="+")
    p.add_argument("--no-cooperation", action="store_true")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    common(sub.add_parser("ablate-coop", help="paired with/without cooperation runs"))
    p = common(sub.add_parser("train", help="hybrid-noise training of the MLP denoiser"), sweep=False)
    p.add_argument("--lambda0", type=float)
    p = common(sub.add_parser("eval-checkpoint", help="trained vs analytic noise prediction"), sweep=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--trials", type=int)
    common(sub.add_parser("selftest", help="Monte-Carlo versus closed-form checks"), sweep=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sweep-snr":
            cmd_sweep(args, "snr")
        elif args.command == "sweep-users":
            cmd_sweep(args, "users")
        elif args.command == "ablate-coop":
            cmd_ablate(args)
        elif args.command == "train":
            cmd_train(args)
        elif args.command == "eval-checkpoint":
            cmd_eval(args)
        elif args.command == "selftest":
            return cmd_selftest(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc} (after {len(exc.trace)} steps)", file=sys.stderr)
        return 2
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
