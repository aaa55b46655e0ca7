"""Command-line entry point: ``qformation <command> [options]``.

Exit codes: 0 success, 1 a run or check failed, 2 the configuration (or
other input) is invalid.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import contract
from .analysis import (
    Scenario,
    delta_variants,
    estimate_convergence_time,
    in_S0,
    in_Y0,
    is_safe,
    time_bound_from_delta,
)
from .config import (
    ConfigError,
    RunConfig,
    example_config,
    load_config,
    parse_config,
    polar_list,
)
from .formation import OffGridTargetError
from .gossip import derive_rng
from .pinhole import PinholeScenario, synth_samples
from .verify import verify_suite

OK, FAILED, BAD_INPUT = 0, 1, 2


class _Ctx:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out = Path(getattr(args, "out", "."))
        self.quiet = bool(getattr(args, "quiet", False))

    def config(self) -> RunConfig:
        path = getattr(self.args, "config", None)
        rc = load_config(path) if path else parse_config(example_config())
        if getattr(self.args, "seed", None) is not None:
            if not 0 <= self.args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            rc.seed = self.args.seed
        if getattr(self.args, "runs", None) is not None:
            if self.args.runs < 1:
                raise ConfigError("--runs must be positive")
            rc.n_runs = self.args.runs
        return rc

    def emit(self, obj) -> None:
        if not self.quiet:
            print(json.dumps(obj, indent=2, sort_keys=True))

    def write(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.write_text(text, encoding="utf-8", newline="")
        return path


def _scenario(rc: RunConfig) -> Scenario:
    return Scenario(rc.cfg, rc.targets, rc.spec, rc.graph, rc.perception, rc.max_steps,
                    rc.initial_state())


def _bound_report(rc: RunConfig) -> dict:
    deltas = delta_variants(rc.cfg, rc.spec, rc.targets)
    n = rc.n_agents
    chain = rc.graph.is_chain
    return {
        "n_agents": n,
        "chain": chain,
        "delta_range": deltas["range"],
        "delta_s0": deltas["s0"],
        "bound": time_bound_from_delta(n, deltas["range"]) if chain else None,
        "bound_s0": time_bound_from_delta(n, deltas["s0"]) if chain else None,
    }


def cmd_simulate(ctx: _Ctx) -> int:
    rc = ctx.config()
    scn = _scenario(rc)
    stats = estimate_convergence_time(scn, rc.n_runs, rc.seed, rc.workers)
    summary = stats.summary()
    summary.update({k: v for k, v in _bound_report(rc).items() if k != "bound"})
    summary["seed"] = rc.seed
    if rc.trace_path:
        run0 = scn.run(rc.seed, 0, record=True)
        ctx.write(rc.trace_path, run0.to_csv(rc.spec))
    ctx.write(rc.summary_path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    ctx.emit(summary)
    return OK if stats.converged == stats.runs and stats.violations == 0 else FAILED


def cmd_bound(ctx: _Ctx) -> int:
    rc = ctx.config()
    report = _bound_report(rc)
    ctx.emit(report)
    if not rc.graph.is_chain:
        print("convergence-time bound: graph is not a chain", file=sys.stderr)
        return FAILED
    return OK


def _y0_arg(ctx: _Ctx, rc: RunConfig):
    raw = getattr(ctx.args, "y0", None)
    if raw is None:
        init = rc.initial_state()
        if isinstance(init, str):
            return _scenario(rc).initial_state(rc.seed, 0)
        return init
    p = Path(raw)
    text = p.read_text(encoding="utf-8") if p.exists() else raw
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--y0 is neither a file nor a JSON list: {exc}") from None
    y0 = polar_list(data, "--y0")
    if len(y0) != rc.n_agents:
        raise ConfigError(f"--y0 has {len(y0)} entries, expected {rc.n_agents}")
    return y0


def cmd_check_init(ctx: _Ctx) -> int:
    rc = ctx.config()
    y0 = _y0_arg(ctx, rc)
    report = {
        "in_Y0": in_Y0(y0, rc.targets, rc.cfg),
        "in_Y0_strict": in_Y0(y0, rc.targets, rc.cfg, strict=True),
        "in_S0": in_S0(y0, rc.targets, rc.cfg, rc.spec),
        "is_safe": is_safe(y0, rc.spec),
        "y0": [[v.r, v.theta] for v in y0],
    }
    ctx.emit(report)
    ok = report["in_Y0"] and report["in_S0"] and report["is_safe"]
    return OK if ok else FAILED


def _pinhole_scenarios(rc: RunConfig) -> tuple[int, list[PinholeScenario]]:
    s = dict(rc.sampling)
    n = int(s.pop("n", 10_000))
    levels = s.pop("levels", [s.pop("fog", 0.0)])
    if n < 1:
        raise ConfigError("sampling.n must be positive")
    try:
        return n, [PinholeScenario.from_dict({**s, "fog": float(f)}) for f in levels]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sampling: {exc}") from None


def cmd_sample_perception(ctx: _Ctx) -> int:
    rc = ctx.config()
    n, scenarios = _pinhole_scenarios(rc)
    rows = []
    for scn in scenarios:
        # same stream at every level, so levels differ only through the fog proxy
        rows += synth_samples(scn, n, derive_rng(rc.seed, 0, "sampling"))
    path = ctx.write("samples.csv", contract.samples_to_csv(rows))
    ctx.emit({"samples": len(rows), "levels": [s.label for s in scenarios], "path": str(path)})
    return OK


def _p_list(ctx: _Ctx, rc: RunConfig | None) -> list[float]:
    raw = getattr(ctx.args, "p", None)
    if raw:
        try:
            vals = [float(v) for v in raw.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--p must be comma-separated fractions, got {raw!r}") from None
    else:
        vals = [float(v) for v in (rc.fit.get("p", [0.99, 0.9]) if rc else [0.99, 0.9])]
    if not vals or not all(0 < v <= 1 for v in vals):
        raise ConfigError("percentiles must lie in (0, 1]")
    return vals


def cmd_fit(ctx: _Ctx) -> int:
    rc = ctx.config() if getattr(ctx.args, "config", None) else None
    path = Path(getattr(ctx.args, "samples", None) or ctx.out / "samples.csv")
    try:
        loaded = contract.load_samples(path)
    except OSError as exc:
        raise ConfigError(f"cannot read samples: {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not loaded.samples:
        raise ConfigError("no valid samples")
    m_max = int(rc.fit.get("m_max", contract.M_MAX)) if rc else contract.M_MAX
    table = contract.sweep_environments(contract.group_by_env(loaded.samples),
                                        _p_list(ctx, rc), m_max)
    out = ctx.write("fits.csv", contract.fits_to_csv(table))
    report = {"samples": len(loaded.samples), "skipped": loaded.skipped, "path": str(out),
              "fits": [{"env": env, "p": p,
                        **({"error": str(res)} if isinstance(res, contract.FitError) else
                           {"a": res.a, "M": res.M, "coverage_r": res.coverage_r,
                            "coverage_theta": res.coverage_theta, "degenerate": res.degenerate,
                            "infeasible": list(res.infeasible)})}
                       for (env, p), res in table.items()]}
    ctx.emit(report)
    return OK


def cmd_verify(ctx: _Ctx) -> int:
    rc = ctx.config()
    n_seeds = getattr(ctx.args, "runs", None) or 100
    rep = verify_suite(rc.cfg, rc.targets, rc.spec, rc.graph, rc.seed, n_seeds,
                       ctx.args.steps, rc.max_steps)
    ctx.emit(rep.to_dict())
    return OK if rep.ok else FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="JSON run configuration (default: built-in example)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override run seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default .)")
    common.add_argument("--runs", type=int, default=argparse.SUPPRESS, help="override run count")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="print nothing on success")

    parser = argparse.ArgumentParser(prog="qformation", parents=[common],
                                     description="Quantized gossip formation control toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run Monte Carlo simulations")
    sub.add_parser("bound", parents=[common], help="print the convergence-time bound")
    ci = sub.add_parser("check-init", parents=[common], help="check an initial state")
    ci.add_argument("--y0", help="JSON list of [r, theta] pairs, or a file holding one")
    sub.add_parser("sample-perception", parents=[common], help="synthesize perception samples")
    fp = sub.add_parser("fit", parents=[common], help="fit quantizer parameters to samples")
    fp.add_argument("--samples", help="sample CSV (default OUT/samples.csv)")
    fp.add_argument("--p", help="comma-separated coverage levels, e.g. 0.99,0.9")
    vp = sub.add_parser("verify", parents=[common], help="lockstep and PC-invariance suites")
    vp.add_argument("--steps", type=int, default=10_000, help="steps per lockstep run")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "bound": cmd_bound,
    "check-init": cmd_check_init,
    "sample-perception": cmd_sample_perception,
    "fit": cmd_fit,
    "verify": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](_Ctx(args))
    except (ConfigError, OffGridTargetError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return BAD_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILED


if __name__ == "__main__":
    sys.exit(main())
