"""Command-line entry point: ``qhmc {sweep,force-table,inverse,chain} --config FILE``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, QHMCError
from .experiments import SWEEP_COLUMNS, run_force_table, run_inverse, run_single, run_sweep

log = logging.getLogger("qhmc")


def _sweep(cfg, out):
    rows = run_sweep(cfg, out)
    print(",".join(SWEEP_COLUMNS))
    for r in rows:
        print(",".join(f"{v:.4f}" if isinstance(v, float) else str(v) for v in r.csv_row()))


def _force_table(cfg, out):
    rows = run_force_table(cfg.force_x, cfg.force_q_values, out)
    for q, ref, d, f in rows:
        print(f"q={q:.4f} reference_point={ref:.6g} jackson_derivative={d:.6g} force={f:.6g}")


def _inverse(cfg, out):
    res = run_inverse(cfg, out)
    for r in res["runs"]:
        extra = (f" rmse={r['rmse']:.4f} corr={r['correlation']:.4f}" if res["problem"] == "diffusion"
                 else f" mean={r['posterior_mean']:.5f} std={r['posterior_std']:.5f}")
        print(f"{res['problem']} q={r['q']} accept={r['accept_rate']:.3f}{extra}")


def _chain(cfg, out):
    chain, rep = run_single(cfg, out)
    print(f"accept={rep.accept_rate:.3f} ess={rep.ess:.1f} iat={rep.iat:.3f} "
          f"divergent={rep.n_divergent} time={chain.wall_time:.2f}s")


COMMANDS = {"sweep": _sweep, "force-table": _force_table, "inverse": _inverse, "chain": _chain}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qhmc", description="q-deformed Hamiltonian Monte Carlo experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI config, or a run's metadata JSON to replay it")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(seed=args.seed, output_dir=args.out)
        out = Path(cfg.output_dir)
        log.info("running %s on %s, output in %s", args.command, cfg.target, out)
        COMMANDS[args.command](cfg, out)
    except (ConfigError, QHMCError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
