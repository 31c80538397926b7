"""Command-line interface.

Subcommands: train, eval, sweep, signal-demo, gradcheck.
Exit codes: 0 success, 2 configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import harness, nn
from . import signal as sig


class ConfigError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="radarspectrum",
        description="Decentralized radar spectrum-allocation simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, policy=True):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="override run seed")
        sp.add_argument("--out", help="override output directory")
        if policy:
            sp.add_argument("--policy", choices=("rl", "random", "myopic"))
        sp.add_argument("--fidelity", choices=("analytic", "signal"))

    sp = sub.add_parser("train", help="train per-radar agents, then test")
    common(sp)
    sp.add_argument("--episodes", type=int, help="override n_train_episodes")
    sp.add_argument("--eval-episodes", type=int, help="override n_eval_episodes")
    sp.add_argument("--quiet", action="store_true", help="no progress lines")

    sp = sub.add_parser("eval", help="evaluate one policy")
    common(sp)
    sp.add_argument("--checkpoints", help="directory with agent{i}.qnet files")
    sp.add_argument("--eval-episodes", type=int)

    sp = sub.add_parser("sweep", help="sweep an axis over all three policies")
    common(sp, policy=False)
    sp.add_argument("--axis", required=True, choices=("subbands", "rho", "cars"))
    sp.add_argument("--values", required=True,
                    help="comma-separated axis values, e.g. 0.01,0.02,0.05")
    sp.add_argument("--checkpoints", help="trained networks for rho/cars reuse")
    sp.add_argument("--eval-episodes", type=int)
    sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("signal-demo",
                        help="emit demo spectra and eta-vs-INR CSVs")
    common(sp, policy=False)

    sp = sub.add_parser("gradcheck",
                        help="verify analytic gradients against finite differences")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.add_argument("--tolerance", type=float, default=1e-4)
    return p


def _load(args, **extra) -> harness.RunConfig:
    overrides = {"seed": getattr(args, "seed", None),
                 "output_dir": getattr(args, "out", None),
                 "policy": getattr(args, "policy", None), **extra}
    path = getattr(args, "config", None)
    if path is not None and not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = harness.load_config(path, overrides)
    except (json.JSONDecodeError, ValueError, TypeError) as e:
        raise ConfigError(f"invalid config: {e}") from e
    fid = getattr(args, "fidelity", None)
    if fid is not None:
        cfg.env.fidelity = fid
    return cfg


def _cmd_train(args) -> int:
    extra = {}
    if args.episodes is not None:
        extra["n_train_episodes"] = args.episodes
    if args.eval_episodes is not None:
        extra["n_eval_episodes"] = args.eval_episodes
    cfg = _load(args, **extra)
    progress = None
    if not args.quiet:
        def progress(row):
            print(f"episode {row.episode:5d}  xi={row.success_rate:.3f}  "
                  f"wall={row.wall_s:.0f}s", flush=True)
    _result, eval_rows = harness.run_training(cfg, progress=progress)
    xi = float(np.mean([r[0] for r in eval_rows]))
    print(f"test success rate: {xi:.4f} over {len(eval_rows)} episodes")
    print(f"artifacts in {cfg.output_dir}")
    return 0


def _cmd_eval(args) -> int:
    extra = {}
    if args.eval_episodes is not None:
        extra["n_eval_episodes"] = args.eval_episodes
    cfg = _load(args, **extra)
    if args.checkpoints is not None and not os.path.isdir(args.checkpoints):
        raise ConfigError(f"checkpoint directory not found: {args.checkpoints}")
    rows = harness.run_eval(cfg, args.checkpoints)
    xi = float(np.mean([r[0] for r in rows]))
    print(f"{cfg.policy} success rate: {xi:.4f} over {len(rows)} episodes")
    return 0


def _cmd_sweep(args) -> int:
    extra = {}
    if args.eval_episodes is not None:
        extra["n_eval_episodes"] = args.eval_episodes
    cfg = _load(args, **extra)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"bad --values list: {e}") from e
    if not values:
        raise ConfigError("--values must list at least one value")
    if args.axis in ("rho", "cars") and args.checkpoints is None:
        raise ConfigError(f"{args.axis} sweep needs --checkpoints")
    rows = harness.run_sweep(cfg, args.axis, values, args.checkpoints,
                             workers=args.workers)
    for r in rows:
        print(f"{r[-2]}={r[-1]}  policy={r[1]:7s}  xi={r[5]}")
    return 0


def _cmd_signal_demo(args) -> int:
    cfg = _load(args)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    # short frame (one up/down chirp pair) keeps the demo fast; the spectra
    # only use the first up/down windows anyway
    params = cfg.env.radar
    params = params.with_(frame_duration=2.0 * params.chirp_interval)
    rng = np.random.default_rng(cfg.seed)
    tx = sig.synth_chirp_frame(params, 0)
    echo = sig.EchoSpec(50.0, 10.0, 2e-7)
    coherent = sig.InterfererSpec(30.0, -20.0, 2e-7,
                                  params.chirp_interval)
    noncoherent = sig.InterfererSpec(30.0, -20.0, 2e-7,
                                     1.4 * params.chirp_interval)
    cases = {
        "no_interference": ([echo], []),
        "ghost": ([echo], [coherent]),
        "raised_noise": ([echo], [noncoherent]),
    }
    for name, (echoes, intf) in cases.items():
        rx = sig.synth_received(params, tx, echoes, intf,
                                np.random.default_rng(cfg.seed))
        up, down = sig.mix_and_spectrum(params, rx, tx)
        sig.export_spectrum_csv(up, os.path.join(out, f"{name}_up.csv"))
        sig.export_spectrum_csv(down, os.path.join(out, f"{name}_down.csv"))
        print(f"wrote {name}_up.csv / {name}_down.csv")
    # eta vs INR: non-coherent interferer with received power INR * sigma^2
    n_if = params.noise_power * sig._n_if_unit(
        params.half_samples, params.fft_size, params.discard_count,
        params.sample_rate)
    with open(os.path.join(out, "eta_vs_inr.csv"), "w") as fh:
        fh.write("inr,eta\n")
        for inr in (1, 2, 5, 10, 20, 30, 50, 70, 100):
            i = sig.InterfererSpec(30.0, -20.0, inr * params.noise_power,
                                   1.4 * params.chirp_interval)
            rx = sig.synth_received(params, tx, [], [i],
                                    np.random.default_rng(cfg.seed + inr))
            up, _ = sig.mix_and_spectrum(params, rx, tx)
            eta = sig.estimate_noise_level(up, params.discard_count) / n_if
            fh.write(f"{inr},{eta!r}\n")
    print("wrote eta_vs_inr.csv")
    return 0


def _cmd_gradcheck(args) -> int:
    from .nn import NetConfig, bptt_gradients, init_params, HiddenState
    rng = np.random.default_rng(args.seed)
    cfg = NetConfig(input_width=7, fcl_width=4, lstm_widths=(4, 4, 3, 2),
                    n_actions=3, dtype="float64")
    params = init_params(rng, cfg)
    p_len, k = 5, 2
    obs = rng.normal(size=(p_len, k, 7))
    acts = rng.integers(0, 3, size=(p_len, k))
    targets = rng.normal(size=(p_len, k))
    hidden = HiddenState.zeros(cfg, k)
    _loss, grads = bptt_gradients(params, obs, acts, targets, hidden)

    flat_p = params.flat()
    flat_g = grads            # already in flat() order
    eps = 1e-5
    worst = 0.0
    for arr, g in zip(flat_p, flat_g):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            lp, _ = bptt_gradients(params, obs, acts, targets, hidden)
            arr[idx] = orig - eps
            lm, _ = bptt_gradients(params, obs, acts, targets, hidden)
            arr[idx] = orig
            fd = (lp - lm) / (2 * eps)
            rel = abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-6)
            worst = max(worst, rel)
    print(f"max relative gradient error: {worst:.3e} "
          f"(tolerance {args.tolerance:g})")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "gradcheck.json"), "w") as fh:
            json.dump({"max_rel_error": worst, "tolerance": args.tolerance,
                       "seed": args.seed}, fh)
    if worst >= args.tolerance:
        print("gradcheck FAILED", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"train": _cmd_train, "eval": _cmd_eval, "sweep": _cmd_sweep,
                "signal-demo": _cmd_signal_demo, "gradcheck": _cmd_gradcheck}
    try:
        return handlers[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:   # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
