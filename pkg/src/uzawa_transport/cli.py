"""Command-line entry point.

Subcommands: ``run <config>``, ``preset <name>``, ``list-presets``, and
``verify`` (shorthand for the oracle-verify preset).  Exit codes: 0
success, 1 failed verification, 2 configuration error, 3 numerical abort,
4 I/O error.  ``--threads 1`` pins the BLAS pools before numpy loads,
which makes runs bit-for-bit reproducible; the heavy imports are therefore
deferred until after argument parsing.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

ENV_OUT_DIR = "UZAWA_TRANSPORT_OUT"
_THREAD_VARS = (
    "OPENBLAS_NUM_THREADS",
    "OMP_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def _peek_threads(argv):
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            try:
                return int(argv[i + 1])
            except ValueError:
                return None
        if arg.startswith("--threads="):
            try:
                return int(arg.split("=", 1)[1])
            except ValueError:
                return None
    return None


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="uzawa-transport",
        description="Mesh-free transport solver with multiplier-enforced inflow data",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="BLAS thread count (1 guarantees bitwise reproducibility)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file or manifest")
    p_run.add_argument("config_path")
    p_run.add_argument("--out", default=None, help="output directory")

    p_preset = sub.add_parser("preset", help="run a named preset")
    p_preset.add_argument("name")
    p_preset.add_argument("--out", default=None, help="output directory")
    p_preset.add_argument("--seed", type=int, default=None, help="override the run seed")
    p_preset.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )

    sub.add_parser("list-presets", help="list available presets")
    p_verify = sub.add_parser("verify", help="run the oracle identity checks")
    p_verify.add_argument("--out", default=None, help="output directory")
    return parser


def _resolve_out_dir(explicit, config):
    if explicit:
        return explicit
    configured = config["outputs.directory"]
    if configured:
        return configured
    name = config["preset"] or "run"
    base = os.environ.get(ENV_OUT_DIR, os.path.join(os.getcwd(), "runs"))
    return os.path.join(base, name)


def _final_metrics(state, quad, problem, reference, config):
    import numpy as np

    from . import diagnostics_io

    last = state.outer_history[-1]
    metrics = {
        "loss_total": last.loss_parts.value,
        "loss_pde": last.loss_parts.pde,
        "loss_boundary": last.loss_parts.boundary_penalty,
        "loss_multiplier": last.loss_parts.multiplier_term,
        "boundary_residual": last.boundary_residual,
        "initial_boundary_residual": state.initial_boundary_residual,
        "lambda_norm": last.lambda_norm,
    }
    if reference is not None:
        norms = diagnostics_io.discrete_norms(state.params, quad, problem, reference)
        w = quad.interior.weight
        ref = reference.value(quad.interior.x, quad.interior.theta)
        ref_norm = float(np.sqrt(w @ np.asarray(ref) ** 2))
        metrics["l2_error"] = norms["l2_interior"]
        metrics["l2_error_rel"] = norms["l2_interior"] / ref_norm
    return metrics


def _emit_train_outputs(out_dir, config, state, quad, problem, reference, wall_clock):
    from . import __version__, diagnostics_io, network, phase_space

    os.makedirs(out_dir, exist_ok=True)
    diagnostics_io.emit_metrics(
        os.path.join(out_dir, "metrics.csv"), diagnostics_io.metrics_rows(state)
    )
    final = _final_metrics(state, quad, problem, reference, config)
    manifest = diagnostics_io.RunManifest(
        config=config.to_flat(), version=__version__, wall_clock=wall_clock, final_metrics=final
    )
    diagnostics_io.emit_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    if config["outputs.checkpoint"]:
        network.save_params(state.params, os.path.join(out_dir, "params.uzmlp"))
    if config["outputs.emit_quadrature"]:
        phase_space.dump_quadrature_csv(quad, os.path.join(out_dir, "quadrature.csv"))
    n = config["outputs.grid_n"]
    for entry in config["outputs.grids"]:
        if entry == "scalar-flux":
            grid = diagnostics_io.scalar_flux(state.params, quad.angular, n, n, quad.domain)
            diagnostics_io.emit_grid(os.path.join(out_dir, "flux.csv"), grid)
        else:
            theta = float(entry.split(":", 1)[1])
            grid = diagnostics_io.angular_slice(state.params, theta, n, n, quad.domain)
            diagnostics_io.emit_grid(os.path.join(out_dir, f"slice_{theta:.4f}.csv"), grid)
    return final


def run_experiment(config, out_dir=None):
    """Execute one experiment; returns (exit_code, output_dir)."""
    from . import config as configmod
    from . import diagnostics_io, linear_oracle, uzawa
    from . import __version__
    from .errors import NumericalAbort

    out_dir = _resolve_out_dir(out_dir, config)
    start = time.perf_counter()

    if config.mode == configmod.ORACLE_VERIFY:
        checks = linear_oracle.verification_suite(n_iter=config["oracle.n_iter"])
        all_ok = True
        details = {}
        for name, ok, detail in checks:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
            details[name] = {"ok": ok, "detail": detail}
            all_ok &= ok
        os.makedirs(out_dir, exist_ok=True)
        manifest = diagnostics_io.RunManifest(
            config=config.to_flat(),
            version=__version__,
            wall_clock=time.perf_counter() - start,
            final_metrics={"checks_passed": all_ok},
        )
        diagnostics_io.emit_manifest(os.path.join(out_dir, "manifest.json"), manifest)
        return (0 if all_ok else 1), out_dir

    problem, reference = configmod.build_problem(config)
    quad = configmod.build_quadrature_set(config)
    params0 = configmod.build_network(config)
    uz_cfg = configmod.build_uzawa_config(config)
    lg_cfg = configmod.build_lagrangian_config(config)
    try:
        state = uzawa.run(problem, quad, params0, uz_cfg, lg_cfg, seed=config["seed"])
    except NumericalAbort:
        # flush a manifest naming the abort so the run is diagnosable
        os.makedirs(out_dir, exist_ok=True)
        manifest = diagnostics_io.RunManifest(
            config=config.to_flat(),
            version=__version__,
            wall_clock=time.perf_counter() - start,
            final_metrics={"aborted": str(sys.exc_info()[1])},
        )
        diagnostics_io.emit_manifest(os.path.join(out_dir, "manifest.json"), manifest)
        raise

    final = _emit_train_outputs(
        out_dir, config, state, quad, problem, reference, time.perf_counter() - start
    )
    summary = ", ".join(
        f"{k}={final[k]:.6g}" for k in ("loss_total", "boundary_residual") if k in final
    )
    if "l2_error_rel" in final:
        summary += f", l2_error_rel={final['l2_error_rel']:.6g}"
    print(f"run complete: {summary}")
    print(f"outputs in {out_dir}")
    return 0, out_dir


def _load_config(path):
    from . import config as configmod
    from . import diagnostics_io

    if path.endswith(".json"):
        manifest = diagnostics_io.parse_manifest(path)
        return configmod.from_flat(manifest.config)
    return configmod.parse_config(path)


def main(argv=None):
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    threads = _peek_threads(argv)
    if threads is not None and threads > 0:
        for var in _THREAD_VARS:
            os.environ[var] = str(threads)

    parser = _build_parser()
    args = parser.parse_args(argv)

    from .errors import ConfigError, NumericalAbort

    try:
        if args.command == "list-presets":
            from .presets import list_presets_text

            print(list_presets_text())
            return 0
        if args.command == "verify":
            from .presets import expand_preset

            code, _ = run_experiment(expand_preset("oracle-verify"), args.out)
            return code
        if args.command == "preset":
            from .presets import expand_preset

            overrides = {}
            for item in args.override:
                if "=" not in item:
                    raise ConfigError([f"--override needs KEY=VALUE, got {item!r}"])
                key, _, value = item.partition("=")
                overrides[key.strip()] = value.strip()
            config = expand_preset(args.name, overrides, seed=args.seed)
            code, _ = run_experiment(config, args.out)
            return code
        # run
        config = _load_config(args.config_path)
        code, _ = run_experiment(config, args.out)
        return code
    except ConfigError as err:
        print("configuration error:", file=sys.stderr)
        for violation in err.violations:
            print(f"  - {violation}", file=sys.stderr)
        return 2
    except NumericalAbort as err:
        print(f"numerical abort: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
