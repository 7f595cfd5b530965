"""Command-line entry point.

Subcommands: gen-data, train, eval, attack, verify, depth-bench, gradcheck.
All output is deterministic key=value text; every command takes an optional
key=value config file (--config) whose keys are the RunConfig fields. Exit
status 0 means success, 1 means error; verify exits 2 when the session is
rejected.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_run_config
from .dataset import generate_dataset, load_manifest, load_session, load_split, to_example
from .depth_oracle import depth_metrics, integrate_normals
from .evaluation import (
    eer,
    far_frr_hter,
    fused_score_set,
    replay_attack_experiment,
    score_sessions,
    verdict,
)
from .net.gradcheck import check_all_layers, check_model
from .net.model import load_weights, save_weights
from .net.train import train
from .normal_cue import extract_session

GRAD_TOL = 1e-4


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; keep 2 reserved for verify rejections
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(f"error: {message}")


def _emit(lines: list[str], out_path: Path | None) -> None:
    text = "".join(line + "\n" for line in lines)
    sys.stdout.write(text)
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(text)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def cmd_gen_data(cfg: RunConfig, out: str | None) -> list[str]:
    target = Path(out) if out else Path(cfg.data_dir)
    records = generate_dataset(
        target, cfg.gen_config(), cfg.scene_config(), cfg.lighting_config()
    )
    lines = [f"command=gen-data", f"dataset_dir={target}", f"sessions={len(records)}"]
    for part in (0, 1, 2, 3):
        live = sum(1 for r in records if r.part == part and r.label)
        spoof = sum(1 for r in records if r.part == part and not r.label)
        if live or spoof:
            lines.append(f"part{part}_live={live}")
            lines.append(f"part{part}_spoof={spoof}")
    return lines


def _dev_threshold(params, cfg: RunConfig, dev) -> tuple[float, float]:
    """Fused dev-split EER and the threshold realizing it."""
    scores = score_sessions(params, dev, cfg.tau_reg, cfg.lighting_config())
    return eer(fused_score_set(scores))


def cmd_train(cfg: RunConfig, out: str | None) -> list[str]:
    out_dir = Path(out) if out else Path(cfg.out_dir)
    weights_path = out_dir / "weights.bin"
    light_cfg = cfg.lighting_config()
    if weights_path.exists():
        params = load_weights(weights_path)
        epoch_lines = ["resumed=1"]
    else:
        stored = load_split(cfg.data_dir, part=cfg.part, split="train")
        if not stored:
            raise ValueError(f"no training sessions for part {cfg.part} in {cfg.data_dir}")
        examples = [to_example(s, light_cfg) for s in stored]
        result = train(examples, cfg.model_config(), cfg.train_config())
        params = result.params
        out_dir.mkdir(parents=True, exist_ok=True)
        save_weights(weights_path, params)
        epoch_lines = [
            f"epoch_{i + 1:03d}_loss={_fmt(loss)}"
            for i, loss in enumerate(result.epoch_losses)
        ]
    dev = load_split(cfg.data_dir, part=cfg.part, split="dev")
    dev_eer, tau_cls = _dev_threshold(params, cfg, dev)
    return [
        "command=train",
        f"part={cfg.part}",
        f"weights={weights_path}",
        f"dev_eer={_fmt(dev_eer)}",
        f"tau_cls={_fmt(tau_cls)}",
        *epoch_lines,
    ]


def cmd_eval(cfg: RunConfig, weights: str | None) -> list[str]:
    weights_path = Path(weights) if weights else Path(cfg.out_dir) / "weights.bin"
    params = load_weights(weights_path)
    light_cfg = cfg.lighting_config()
    dev = load_split(cfg.data_dir, part=cfg.part, split="dev")
    dev_eer, tau_cls = _dev_threshold(params, cfg, dev)
    test = load_split(cfg.data_dir, part=cfg.part, split="test")
    scores = score_sessions(params, test, cfg.tau_reg, light_cfg)
    fused = fused_score_set(scores)
    test_eer, _ = eer(fused)
    far, frr, hter = far_frr_hter(fused, tau_cls)
    live_nsr = [s.match.nsr for s in scores if s.label]
    nsr_ok = float(np.mean([n <= cfg.tau_reg for n in live_nsr])) if live_nsr else 0.0
    return [
        "command=eval",
        f"part={cfg.part}",
        f"weights={weights_path}",
        f"dev_eer={_fmt(dev_eer)}",
        f"tau_cls={_fmt(tau_cls)}",
        f"test_eer={_fmt(test_eer)}",
        f"test_far={_fmt(far)}",
        f"test_frr={_fmt(frr)}",
        f"test_hter={_fmt(hter)}",
        f"live_nsr_pass_rate={_fmt(nsr_ok)}",
    ]


def cmd_attack(cfg: RunConfig, weights: str | None, trials: int | None) -> list[str]:
    weights_path = Path(weights) if weights else Path(cfg.out_dir) / "weights.bin"
    params = load_weights(weights_path)
    light_cfg = cfg.lighting_config()
    dev = load_split(cfg.data_dir, part=cfg.part, split="dev")
    _, tau_cls = _dev_threshold(params, cfg, dev)
    loops = load_split(cfg.data_dir, part=0, split="attack")
    if not loops:
        raise ValueError(f"no attack loops in {cfg.data_dir}")
    n_trials = cfg.trials if trials is None else trials
    lines = [
        "command=attack",
        f"tau_cls={_fmt(tau_cls)}",
        f"tau_reg={_fmt(cfg.tau_reg)}",
        f"challenge_n={cfg.attack_challenge_n}",
        f"trials_per_loop={n_trials}",
    ]
    total_bypass = 0
    for i, stored in enumerate(loops):
        rng = np.random.default_rng([cfg.seed, i])
        report = replay_attack_experiment(
            params,
            stored.session,
            cfg.attack_challenge_n,
            n_trials,
            rng,
            tau_cls,
            cfg.tau_reg,
            light_cfg,
        )
        total_bypass += report.bypasses
        key = report.loop_id.replace("-", "_")
        lines.append(f"{key}_bypasses={report.bypasses}")
        lines.append(f"{key}_rate={_fmt(report.rate)}")
        lines.append(f"{key}_analytic_p={_fmt(report.analytic_p)}")
        lines.append(f"{key}_rejected_degenerate={report.rejected_degenerate}")
        lines.append(f"{key}_validation_mismatches={report.validation_mismatches}")
    lines.append(f"total_bypasses={total_bypass}")
    return lines


def cmd_verify(cfg: RunConfig, weights: str | None, session_id: str) -> tuple[list[str], int]:
    weights_path = Path(weights) if weights else Path(cfg.out_dir) / "weights.bin"
    params = load_weights(weights_path)
    records = [r for r in load_manifest(cfg.data_dir) if r.session_id == session_id]
    if not records:
        raise ValueError(f"session {session_id!r} not found in {cfg.data_dir}")
    stored = load_session(cfg.data_dir, records[0])
    dev = load_split(cfg.data_dir, part=cfg.part, split="dev")
    _, tau_cls = _dev_threshold(params, cfg, dev)
    v = verdict(params, stored.session, tau_cls, cfg.tau_reg, cfg.lighting_config())
    if v.final_live:
        outcome = "ACCEPT"
    elif not v.captcha.matched:
        outcome = "REJECT (captcha mismatch)"
    else:
        outcome = "REJECT (classifier)"
    lines = [
        "command=verify",
        f"session={session_id}",
        f"liveness_score={_fmt(v.liveness_score)}",
        f"tau_cls={_fmt(tau_cls)}",
        f"captcha_nsr={_fmt(v.captcha.nsr)}",
        f"captcha_matched={int(v.captcha.matched)}",
        f"classifier_pass={int(v.classifier_pass)}",
        f"verdict={outcome}",
    ]
    return lines, 0 if v.final_live else 2


def cmd_depth_bench(cfg: RunConfig, weights: str | None) -> list[str]:
    """Predicted-depth quality against the stored ground truth, next to the
    photometric integration oracle on the same cues, over live test sessions."""
    weights_path = Path(weights) if weights else Path(cfg.out_dir) / "weights.bin"
    params = load_weights(weights_path)
    light_cfg = cfg.lighting_config()
    from .net.model import forward_batch
    from .net import layers as L

    stored = [
        s for s in load_split(cfg.data_dir, part=cfg.part, split="test") if s.record.label
    ]
    if not stored:
        raise ValueError(f"no live test sessions for part {cfg.part}")
    k = cfg.k_bins
    net_rl, net_d, orc_rl, orc_d = [], [], [], []
    for s in stored:
        cues = extract_session(s.session, light_cfg)
        x = np.stack([c.net_input() for c in cues]).astype(np.float32)
        _, _, depth_logits, _ = forward_batch(params, x)
        ebin, _ = L.expected_bin_forward(depth_logits.mean(axis=0, keepdims=True))
        gt = s.depth_bins.astype(np.float64)
        m = depth_metrics(ebin[0, 0].astype(np.float64), gt)
        net_rl.append(m.rmse_log)
        net_d.append(m.delta_125)
        surface = integrate_normals(cues[0])
        # integration recovers depth up to an additive constant; align medians
        z = surface.z - np.median(surface.z)
        raw = 1.0 + z * (k - 1)
        raw += np.median(gt) - np.median(raw)
        oracle_bins = np.clip(raw, 1.0, float(k))
        m = depth_metrics(oracle_bins, gt)
        orc_rl.append(m.rmse_log)
        orc_d.append(m.delta_125)
    return [
        "command=depth-bench",
        f"part={cfg.part}",
        f"sessions={len(stored)}",
        f"net_rmse_log={_fmt(float(np.mean(net_rl)))}",
        f"net_delta_125={_fmt(float(np.mean(net_d)))}",
        f"oracle_rmse_log={_fmt(float(np.mean(orc_rl)))}",
        f"oracle_delta_125={_fmt(float(np.mean(orc_d)))}",
    ]


def cmd_gradcheck(seed: int | None) -> tuple[list[str], int]:
    s = 0 if seed is None else seed
    lines = ["command=gradcheck"]
    worst = 0.0
    for res in check_all_layers(seed=s):
        lines.append(f"layer_{res.name}_max_rel_err={_fmt(res.max_rel_err)}")
        worst = max(worst, res.max_rel_err)
    res = check_model(seed=s)
    lines.append(f"model_max_rel_err={_fmt(res.max_rel_err)}")
    lines.append(f"model_checked={res.checked}")
    lines.append(f"model_skipped={res.skipped}")
    worst = max(worst, res.max_rel_err)
    lines.append(f"max_rel_err={_fmt(worst)}")
    lines.append(f"passed={int(worst < GRAD_TOL)}")
    return lines, 0 if worst < GRAD_TOL else 1


def build_parser() -> _Parser:
    p = _Parser(prog="lightliveness", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, **kwargs):
        sp = sub.add_parser(name, **kwargs)
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--seed", type=int, help="override config seed")
        return sp

    sp = add("gen-data", help="generate a synthetic session dataset")
    sp.add_argument("--out", help="dataset directory (default: config data_dir)")
    sp = add("train", help="train the multi-task model on one part")
    sp.add_argument("--out", help="artifact directory (default: config out_dir)")
    sp = add("eval", help="evaluate a trained model on the test split")
    sp.add_argument("--weights", help="weight file (default: out_dir/weights.bin)")
    sp.add_argument("--out", help="also write the report into this directory")
    sp = add("attack", help="run the blocked-replay attack experiment")
    sp.add_argument("--weights", help="weight file (default: out_dir/weights.bin)")
    sp.add_argument("--trials", type=int, help="trials per loop (default: config)")
    sp.add_argument("--out", help="also write the report into this directory")
    sp = add("verify", help="verdict for one stored session")
    sp.add_argument("--weights", help="weight file (default: out_dir/weights.bin)")
    sp.add_argument("session", help="session id from the dataset manifest")
    sp = add("depth-bench", help="depth quality of the net vs the integration oracle")
    sp.add_argument("--weights", help="weight file (default: out_dir/weights.bin)")
    sp.add_argument("--out", help="also write the report into this directory")
    sp = add("gradcheck", help="finite-difference check of layers and model")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config, args.seed)
        status = 0
        if args.command == "gen-data":
            lines = cmd_gen_data(cfg, args.out)
            report_name = "gen_report.txt"
        elif args.command == "train":
            lines = cmd_train(cfg, args.out)
            report_name = "train_report.txt"
        elif args.command == "eval":
            lines = cmd_eval(cfg, args.weights)
            report_name = "eval_report.txt"
        elif args.command == "attack":
            lines = cmd_attack(cfg, args.weights, args.trials)
            report_name = "attack_report.txt"
        elif args.command == "verify":
            lines, status = cmd_verify(cfg, args.weights, args.session)
            report_name = "verify_report.txt"
        elif args.command == "depth-bench":
            lines = cmd_depth_bench(cfg, args.weights)
            report_name = "depth_report.txt"
        else:
            lines, status = cmd_gradcheck(args.seed)
            report_name = "gradcheck_report.txt"
        out = getattr(args, "out", None)
        if args.command == "gen-data":
            out_path = (Path(out) if out else Path(cfg.data_dir)) / report_name
        elif args.command == "train":
            out_path = (Path(out) if out else Path(cfg.out_dir)) / report_name
        else:
            out_path = Path(out) / report_name if out else None
        _emit(lines, out_path)
        return status
    except SystemExit:
        raise
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
