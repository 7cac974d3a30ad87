"""Command-line entry point.

Verbs: gen-data, train, eval, refine, ablate, sweep, serve. Any config
key can be overridden on the command line as --section.key=value.

Exit codes: 0 ok, 2 config/checkpoint error, 3 data error, 4 numeric failure.
"""

import argparse
import sys

from .autograd import AutogradError
from .checkpoint import CheckpointError
from .config import ConfigError, load_config
from .cotrain import TrainingError
from .data import DatasetError
from .metrics import MetricsError
from .netpbm import NetpbmError
from .prompt import PromptError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _parse_overrides(extras):
    overrides = {}
    for item in extras:
        if not item.startswith("--") or "=" not in item:
            raise ConfigError(f"unrecognized argument {item!r} (expected --key=value)")
        key, value = item[2:].split("=", 1)
        overrides[key] = value
    return overrides


def _config(args, extras):
    return load_config(args.config, _parse_overrides(extras))


def cmd_gen_data(args, extras):
    from .data import SyntheticSpec, generate_dataset, save_dataset
    cfg = _config(args, extras)
    spec = SyntheticSpec(h=cfg["data.h"], w=cfg["data.w"],
                         n_train=cfg["data.train_count"], n_val=cfg["data.val_count"],
                         n_test=cfg["data.test_count"], noise=cfg["data.noise"],
                         coverage=cfg["data.coverage"], seed=cfg["data.seed"])
    save_dataset(generate_dataset(spec), cfg["data.dir"])
    print(f"wrote dataset to {cfg['data.dir']}")


def cmd_train(args, extras):
    from .experiment import run_train
    cfg = _config(args, extras)
    run_train(cfg, args.out)
    print(f"checkpoint and report written to {args.out}")


def cmd_eval(args, extras):
    from .experiment import run_eval
    cfg = _config(args, extras)
    run_eval(cfg, args.out, args.checkpoint)
    print(f"report written to {args.out}")


def cmd_refine(args, extras):
    from . import netpbm
    from .checkpoint import load_checkpoint
    from .cotrain import predict
    from .prompt import read_prompt, write_saliency
    cfg = _config(args, extras)
    state = load_checkpoint(args.checkpoint)
    img, maxval = netpbm.read_pnm(args.image)
    image = netpbm.image_to_unit(img, maxval)
    out = predict(state, image, read_prompt(args.prompt),
                  seed=args.seed, n_masks=cfg["refine.n_masks"], return_saliency=True)
    write_saliency(args.out, out["saliency"],
                   csv_path=args.csv if args.csv else None)
    probs = ", ".join(f"{p:.4f}" for p in out["probabilities"])
    print(f"class {out['class_index']} (probabilities {probs}); saliency -> {args.out}")


def cmd_ablate(args, extras):
    from .experiment import run_ablate
    run_ablate(_config(args, extras), args.out)
    print(f"ablation table written to {args.out}")


def cmd_sweep(args, extras):
    from .experiment import run_sweep
    run_sweep(_config(args, extras), args.out, sweep_param=args.param)
    print(f"sweep written to {args.out}")


def cmd_serve(args, extras):
    import uvicorn
    from .server import build_app
    cfg = _config(args, extras)
    app = build_app(cfg, checkpoint_path=args.checkpoint)
    uvicorn.run(app, host=cfg["serve.addr"], port=cfg["serve.port"], log_level="warning")


def build_parser():
    parser = argparse.ArgumentParser(prog="vapl",
                                     description="attention-prompted prediction and learning")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="key=value config file")

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    common(p)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="co-train f_m, f_o and g")
    common(p)
    p.add_argument("--out", default="runs/train")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default="runs/eval")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("refine", help="refine a prompt into a saliency map")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--out", default="saliency.pgm")
    p.add_argument("--csv", default=None, help="also write the float map as CSV")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_refine)

    p = sub.add_parser("ablate", help="run VAPL, VAPL-1..4 and the baseline")
    common(p)
    p.add_argument("--out", default="runs/ablate")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("sweep", help="sweep one lambda over a decade grid")
    common(p)
    p.add_argument("--param", default="lambda1", choices=("lambda1", "lambda2", "lambda3"))
    p.add_argument("--out", default="runs/sweep")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("serve", help="HTTP inference service")
    common(p)
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None):
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    try:
        args.fn(args, extras)
    except (ConfigError, CheckpointError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, NetpbmError, PromptError, MetricsError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (AutogradError, ArithmeticError, TrainingError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
