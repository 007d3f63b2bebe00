"""Command-line surface tying the toolkit together.

Exit codes: 0 success, 1 validation error (bad config, malformed inputs),
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, FieldError
from .experiment import run_experiment, write_json
from .fields import read_field, read_mask, write_field
from .flow_refine import RefineConfig, TrainConfig, load_model, refine, save_model, train
from .metrics import evaluate_corpus
from .planner import ScriptedOracle, default_registry, evaluate_routing, plan
from .routing_cases import bundled_cases
from .rng import mix
from .softmask import SoftMaskParams, intersect_annotation, soft_mask
from .synth import SyntheticPairConfig, gen_pair


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc


def _cmd_gen_data(args) -> int:
    cfg = SyntheticPairConfig(**_load_json(args.config).get("pair", {})) if args.config else SyntheticPairConfig()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    points = {}
    for i in range(args.n):
        x0, x1, centers = gen_pair(replace(cfg, seed=mix(args.seed, i)))
        write_field(x0, out / f"pair_{i:04d}_x0.afg")
        write_field(x1, out / f"pair_{i:04d}_x1.afg")
        points[f"pair_{i:04d}"] = [[x, y] for x, y in centers]
    write_json(out / "points.json", points)
    print(f"wrote {args.n} pairs to {out}")
    return 0


def _cmd_softmask(args) -> int:
    mask = read_mask(args.infile)
    result = soft_mask(mask, SoftMaskParams(temperature=args.temperature))
    write_field(result, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_intersect(args) -> int:
    gt = read_field(args.gt)
    mask = read_mask(args.mask)
    write_field(intersect_annotation(gt, mask), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_scbr_optimize(args) -> int:
    raw = _load_json(args.config)
    if raw.get("mode") != "scbr":
        raise ConfigError("scbr-optimize expects a config with mode 'scbr'")
    report = run_experiment(raw, out_dir=args.out_dir, seed_override=args.seed)
    print(f"final loss {report['l_total_final']:.6f} (out: {args.out_dir})")
    return 0


def _cmd_icrf_train(args) -> int:
    raw = _load_json(args.config) if args.config else {}
    train_cfg_raw = dict(raw.get("train", raw) if raw else {})
    if "hidden" in train_cfg_raw:
        train_cfg_raw["hidden"] = tuple(train_cfg_raw["hidden"])
    try:
        cfg = TrainConfig(**train_cfg_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train config: {exc}") from exc
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    data_dir = Path(args.data)
    x0_files = sorted(data_dir.glob("*_x0.afg"))
    if not x0_files:
        raise ConfigError(f"no *_x0.afg files under {data_dir}")
    pairs = []
    for x0_path in x0_files:
        x1_path = data_dir / x0_path.name.replace("_x0.afg", "_x1.afg")
        if not x1_path.exists():
            raise ConfigError(f"missing counterpart {x1_path}")
        pairs.append((read_field(x0_path), read_field(x1_path)))
    model, losses = train(pairs, cfg)
    save_model(model, args.out)
    print(f"trained on {len(pairs)} pairs, final loss {losses[-1]:.6f}, wrote {args.out}")
    return 0


def _cmd_icrf_refine(args) -> int:
    model = load_model(args.model)
    x0 = read_field(args.infile)
    cfg = RefineConfig(n_t=args.nt, n_tau=args.ntau)
    result = refine(model, x0, cfg, seed=args.seed or 0)
    write_field(result, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_plan(args) -> int:
    registry = default_registry()
    if args.cases:
        report = evaluate_routing(registry, bundled_cases())
        payload = report.to_dict()
        print(f"routing accuracy {report.accuracy:.3f} over {report.n_cases} cases")
    else:
        if not args.oracle:
            raise ConfigError("plan requires --oracle unless --cases is given")
        oracle = ScriptedOracle.from_file(args.oracle)
        produced, trace = plan(oracle, registry)
        payload = {"plan": produced.to_dict(), "trace": trace.to_dict()}
        for action in produced.actions:
            print(f"{action.layer:>12}  {action.verb} -> {action.target_part}")
    if args.out:
        write_json(Path(args.out), payload)
    return 0


def _cmd_eval(args) -> int:
    report = evaluate_corpus(args.pred, args.gt, args.fix_frac)
    payload = report.to_dict()
    if args.out:
        write_json(Path(args.out), payload)
    kld_s = "n/a" if report.kld is None else f"{report.kld:.4f}"
    sim_s = "n/a" if report.sim is None else f"{report.sim:.4f}"
    nss_s = "n/a" if report.nss is None else f"{report.nss:.4f}"
    print(f"kld {kld_s}  sim {sim_s}  nss {nss_s}  ({len(report.per_sample)} samples)")
    return 0


def _cmd_run(args) -> int:
    raw = _load_json(args.config)
    report = run_experiment(raw, out_dir=args.out_dir, seed_override=args.seed)
    print(f"{report['mode']} experiment complete (out: {args.out_dir})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="affkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic heatmap pairs")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="JSON with a 'pair' block")
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("softmask", help="soft mask from a binary mask")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--temperature", type=float, default=3.0)
    p.set_defaults(fn=_cmd_softmask)

    p = sub.add_parser("intersect", help="intersect an annotation with an object mask")
    p.add_argument("--gt", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_intersect)

    p = sub.add_parser("scbr-optimize", help="optimize heatmaps under the boundary loss")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=_cmd_scbr_optimize)

    p = sub.add_parser("icrf-train", help="train the acceleration field on pair files")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=_cmd_icrf_train)

    p = sub.add_parser("icrf-refine", help="refine a heatmap with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--nt", type=int, default=10)
    p.add_argument("--ntau", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_icrf_refine)

    p = sub.add_parser("plan", help="plan sub-actions from an oracle script")
    p.add_argument("--oracle", default=None)
    p.add_argument("--cases", action="store_true", help="run the bundled routing cases")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_plan)

    p = sub.add_parser("eval", help="score prediction/ground-truth directories")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--fix-frac", type=float, default=0.5)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("run", help="run a full experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=_cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ConfigError, FieldError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
