"""Command-line entry points.

Exit status is 0 on success, 2 for configuration problems (including bad
arguments and unreadable inputs) and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import core, experiments, pruning, signal
from .errors import ConfigurationError, DomainError, IllConditionedError

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _parse_list(text, kind=float):
    return [kind(v) for v in str(text).replace(",", " ").split()]


def _load_input(path: Path):
    """Measurement and probe from a synthetic-scene config or a measurement CSV."""
    if path.suffix.lower() == ".csv":
        y, meta = signal.read_measurement_csv(path)
        try:
            R, M, Ts = int(meta["R"]), int(meta.get("M", 1)), float(meta.get("Ts", 1.0))
            K = int(meta.get("K", R))
            probe_seed = int(meta["probe_seed"])
            lam = float(meta["noise_precision"])
        except KeyError as exc:
            raise ConfigurationError(f"{path}: missing metadata line '# {exc.args[0]}=...'") from None
        probe = signal.make_ofdm_probe(K, R, Ts, probe_seed)
        return signal.Measurement(y, lam, Ts, R, M), probe, meta.get("doppler_model", "product")
    cfg = signal.load_config(path)
    probe, scene, M, model = signal.scene_from_config(cfg)
    return signal.synthesize(scene, probe, M, model), probe, model


def cmd_simulate(args):
    cfg = signal.load_config(args.config)
    probe, scene, M, model = signal.scene_from_config(cfg)
    meas = signal.synthesize(scene, probe, M, model)
    signal.write_measurement_csv(meas, args.out, K=probe.num_subcarriers, probe_seed=probe.rng_seed, doppler_model=model)
    return 0


def cmd_estimate(args):
    meas, probe, model = _load_input(Path(args.input))
    kwargs = dict(assumption=args.assumption, doppler_model=model, max_components=args.max_components)
    if args.kappa is not None:
        kwargs.update(threshold="fixed", kappa=args.kappa)
    else:
        kwargs.update(threshold="adjusted", epsilon=args.epsilon)
    config = core.IardConfig.on_grid(**kwargs) if args.on_grid else core.IardConfig(**kwargs)
    state = core.estimate(meas, probe, config)
    text = json.dumps(core.result_to_dict(state, config), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_experiment(args):
    spec = experiments.ExperimentSpec.from_dict(signal.load_config(args.spec))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = experiments.run_experiment(spec)
    csv_path, manifest = experiments.emit_results(table, out / "results.csv", spec, timing=not args.no_timing)
    print(f"wrote {csv_path} and {manifest}")
    return 0


def cmd_validate_dist(args):
    rows, ks = experiments.validate_distribution(args.scenario, args.snr, args.runs, args.seed, args.K, args.R)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rho", "model_pdf", "empirical_pdf"])
        w.writerows(rows.tolist())
    print(f"ks_distance={ks:.4f}")
    return 0


def cmd_threshold_table(args):
    Ns = _parse_list(args.N, int)
    kappas = np.arange(1.0, args.kappa_max + 1e-9, args.kappa_step)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kappa", "epsilon", "N"])
        w.writerows(pruning.threshold_table(Ns, kappas))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="iard", description="Sparse Bayesian multipath estimation")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="synthesize a measurement CSV from a scene config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate", help="run IARD on a measurement")
    s.add_argument("--input", required=True, help="measurement CSV or scene config (JSON/YAML)")
    s.add_argument("--assumption", choices=core.ASSUMPTIONS, default="a2")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--epsilon", type=float, default=1e-3, help="test size of the adjusted threshold")
    g.add_argument("--kappa", type=float, help="fixed threshold (1 gives the standard rule)")
    s.add_argument("--max-components", type=int, default=32)
    s.add_argument("--on-grid", action="store_true", help="search sampling instants only")
    s.add_argument("--out")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("experiment", help="run a Monte Carlo study")
    s.add_argument("--spec", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--no-timing", action="store_true", help="leave wall-clock column empty")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("validate-dist", help="empirical vs model distribution of the pruning statistic")
    s.add_argument("--scenario", choices=("h0", "h1"), required=True)
    s.add_argument("--snr", type=float, default=17.0)
    s.add_argument("--runs", type=int, default=5000)
    s.add_argument("--K", type=int)
    s.add_argument("--R", type=int, default=128)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_validate_dist)

    s = sub.add_parser("threshold-table", help="test size versus threshold")
    s.add_argument("--N", required=True, help="comma- or space-separated candidate counts")
    s.add_argument("--kappa-max", type=float, default=20.0)
    s.add_argument("--kappa-step", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_threshold_table)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (IllConditionedError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigurationError, DomainError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
