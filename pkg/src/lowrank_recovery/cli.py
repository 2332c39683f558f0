"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure
(solver divergence), 3 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from typing import Sequence

from . import __version__
from .errors import (ConfigParseError, ConfigurationError, DivergenceError, DomainError,
                     FormatError, InvalidInputError)
from .experiments import (make_instance, matched_config, run_noise_sweep, run_phase_transition,
                          run_recovery_frequency, summary_rows)
from .imaging import ImageTask, image_complete
from .io import (RunConfig, apply_overrides, format_config, load_pixmap,
                 parse_config, save_bytes, save_pixmap, solver_config, svt_kwargs,
                 synthetic_spec, write_csv)
from .solvers import solve
from .theory import (complexity_estimate, convergence_constants, theorem1_interval,
                     theorem2_interval)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _kv(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got '{text}'")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lowrank", description="Low-rank matrix recovery experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, report=True):
        sp.add_argument("--config", metavar="FILE", help="key = value configuration file")
        sp.add_argument("--set", metavar="KEY=VALUE", type=_kv, action="append", default=[],
                        help="override one configuration key (repeatable)")
        sp.add_argument("--seed", type=int, help="master seed (required)")
        sp.add_argument("--output", "-o", metavar="PATH", help="report path (default: stdout)")
        if report:
            sp.add_argument("--jobs", type=int, default=1, help="worker processes")

    sp = sub.add_parser("solve", help="solve one synthetic instance")
    common(sp, report=False)
    sp.add_argument("--solver")

    sp = sub.add_parser("freq", help="recovery frequency versus rank")
    common(sp)
    sp.add_argument("--ranks")
    sp.add_argument("--trials")
    sp.add_argument("--solvers")
    sp.add_argument("--summary", metavar="PATH", help="also write per-cell aggregates")

    sp = sub.add_parser("phase", help="phase-transition grid over rank and sample ratio")
    common(sp)
    sp.add_argument("--ranks")
    sp.add_argument("--ratios")
    sp.add_argument("--trials")
    sp.add_argument("--solver")
    sp.add_argument("--summary", metavar="PATH")

    sp = sub.add_parser("noise", help="relative error versus noise level")
    common(sp)
    sp.add_argument("--sigmas")
    sp.add_argument("--trials")
    sp.add_argument("--solvers")
    sp.add_argument("--summary", metavar="PATH")

    sp = sub.add_parser("image", help="complete a PGM/PPM image from a random pixel subset")
    common(sp, report=False)
    sp.add_argument("--input", required=True, metavar="FILE")
    sp.add_argument("--observed")
    sp.add_argument("--solver")
    sp.add_argument("--rank")
    sp.add_argument("--mode")
    sp.add_argument("--restored", metavar="FILE", help="write the restored image here")

    sp = sub.add_parser("theory", help="step intervals and convergence constants")
    sp.add_argument("--delta", type=float, default=0.0)
    sp.add_argument("--eta", type=float)
    sp.add_argument("--inner", type=int, default=1)
    sp.add_argument("--m", type=int, help="measurement count for the complexity estimate")
    sp.add_argument("--batch", type=int, default=1)
    sp.add_argument("--rank", type=int, default=1)
    sp.add_argument("--epsilon", type=float, default=1e-6)
    return p


_FLAG_KEYS = {"solver": "solver", "solvers": "solvers", "ranks": "ranks", "ratios": "ratios",
              "sigmas": "sigmas", "trials": "trials", "observed": "observed",
              "rank": "image_rank", "mode": "mode"}


def format_real(x: float) -> str:
    """Console formatting: shortest text that round-trips."""
    return repr(float(x)) if math.isfinite(x) else str(float(x))


def _resolve(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except UnicodeDecodeError as exc:
            raise ConfigParseError(f"config is not UTF-8: {exc}") from None
        cfg = parse_config(text, cfg)
    pairs = list(args.set)
    for flag, key in _FLAG_KEYS.items():
        v = getattr(args, flag, None)
        if v is not None:
            pairs.append((key, str(v)))
    return apply_overrides(cfg, pairs)


def _require_seed(args) -> int:
    if args.seed is None:
        raise ConfigurationError("--seed is required: every report is tied to an explicit seed")
    return args.seed


def _header(command: str, seed: int, cfg: RunConfig) -> list[str]:
    return [f"command = {command}", f"seed = {seed}"] + format_config(cfg)


def _emit(data: bytes, path: str | None) -> None:
    if path:
        save_bytes(path, data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _configs(cfg: RunConfig, names: Sequence[str], m: int) -> dict:
    base = solver_config(cfg)
    if not cfg.match_budget:
        return {s: base for s in names}
    ref = names[0]
    return {s: matched_config(s, base, ref, base, m) for s in names}


def _kwargs(cfg: RunConfig) -> dict:
    return {"svt": svt_kwargs(cfg)}


def cmd_solve(args) -> int:
    cfg = _resolve(args)
    seed = _require_seed(args)
    inst = make_instance(synthetic_spec(cfg, seed))
    res = solve(cfg.solver, inst, solver_config(cfg, seed),
                **(svt_kwargs(cfg) if cfg.solver == "svt" else {}))
    last = res.final
    print(f"solver: {res.solver}")
    print(f"terminated: {res.terminated.value}")
    print(f"iterations: {last.iteration}")
    print(f"residual: {format_real(last.residual)}")
    print(f"relative_error: {format_real(last.rel_error)}")
    print(f"gradient_evaluations: {last.grad_evals}")
    if args.output:
        save_bytes(args.output, write_csv(res.trace.records(), comments=_header("solve", seed, cfg)))
    return EXIT_OK


def _write_summary(path, rows, command, seed, cfg):
    if path:
        save_bytes(path, write_csv(rows, comments=_header(command, seed, cfg)))


def cmd_freq(args) -> int:
    cfg = _resolve(args)
    seed = _require_seed(args)
    base = synthetic_spec(replace(cfg, rank=min(cfg.ranks)), 0)
    recs = run_recovery_frequency(cfg.ranks, base, cfg.solvers, cfg.trials,
                                  _configs(cfg, cfg.solvers, base.sample_count), seed, args.jobs,
                                  _kwargs(cfg))
    _emit(write_csv([r.row() for r in recs], comments=_header("freq", seed, cfg)), args.output)
    _write_summary(args.summary, summary_rows(recs, "rank"), "freq", seed, cfg)
    return EXIT_OK


def cmd_phase(args) -> int:
    cfg = _resolve(args)
    seed = _require_seed(args)
    base = synthetic_spec(replace(cfg, rank=min(cfg.ranks), ratio=max(cfg.ratios)), 0)
    grid = run_phase_transition(cfg.ranks, cfg.ratios, base, cfg.solver, cfg.trials,
                                solver_config(cfg), seed, args.jobs, _kwargs(cfg))
    _emit(write_csv([r.row() for r in grid.records], comments=_header("phase", seed, cfg)),
          args.output)
    _write_summary(args.summary, grid.rows(), "phase", seed, cfg)
    return EXIT_OK


def cmd_noise(args) -> int:
    cfg = _resolve(args)
    seed = _require_seed(args)
    base = synthetic_spec(cfg, 0)
    recs = run_noise_sweep(cfg.sigmas, base, cfg.solvers, cfg.trials,
                           _configs(cfg, cfg.solvers, base.sample_count), seed, args.jobs,
                           _kwargs(cfg))
    _emit(write_csv([r.row() for r in recs], comments=_header("noise", seed, cfg)), args.output)
    _write_summary(args.summary, summary_rows(recs, "noise_sigma"), "noise", seed, cfg)
    return EXIT_OK


def cmd_image(args) -> int:
    cfg = _resolve(args)
    seed = _require_seed(args)
    img = load_pixmap(args.input)
    task = ImageTask(img.samples, cfg.observed, seed, cfg.image_rank, cfg.mode)
    out = image_complete(task, cfg.solver, solver_config(cfg, seed),
                         **(svt_kwargs(cfg) if cfg.solver == "svt" else {}))
    if args.restored:
        save_pixmap(args.restored, out.restored)
    rows = [{"solver": cfg.solver, "observed": cfg.observed, "rank": cfg.image_rank,
             "mode": cfg.mode, "seed": seed, "psnr": out.psnr, "ssim": out.ssim,
             "gradient_evaluations": sum(r.final.grad_evals for r in out.runs)}]
    _emit(write_csv(rows, comments=_header("image", seed, cfg)), args.output)
    return EXIT_OK


def _interval_text(iv) -> str:
    if not iv.nonempty:
        return "empty"
    lo, hi = ("[", "]") if iv.closed else ("(", ")")
    return f"{lo}{format_real(iv.lower)}, {format_real(iv.upper)}{hi}"


def cmd_theory(args) -> int:
    d = args.delta
    i1, i2 = theorem1_interval(d), theorem2_interval(d)
    print(f"delta: {format_real(d)}")
    print(f"theorem1_interval: {_interval_text(i1)}")
    print(f"theorem2_interval: {_interval_text(i2)}")
    if args.eta is None:
        return EXIT_OK
    c = convergence_constants(d, args.eta, args.inner)
    fmt = lambda v: "undefined" if v is None else format_real(v)  # noqa: E731
    print(f"eta: {format_real(c.eta)}  inner: {c.inner_n}")
    print(f"rho: {fmt(c.rho)}")
    print(f"kappa: {fmt(c.kappa)}  (below one: {str(c.kappa_below_one).lower()})")
    print(f"mu: {fmt(c.mu)}")
    print(f"nu: {fmt(c.nu)}")
    print(f"beta: {fmt(c.beta)}  (below one: {str(c.beta_below_one).lower()})")
    if args.m is not None:
        est = complexity_estimate(args.m, args.inner, args.batch, args.rank, args.epsilon,
                                  c.beta if c.beta is not None else float("inf"))
        print(f"per_outer_cost: {est.per_outer_cost} (gradients {est.gradient_cost}, "
              f"svd {est.svd_cost})")
        print(f"outer_loops: {'no guarantee' if est.outer_loops is None else est.outer_loops}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "freq": cmd_freq, "phase": cmd_phase, "noise": cmd_noise,
            "image": cmd_image, "theory": cmd_theory}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "jobs", 1) < 1:
            raise ConfigurationError("--jobs must be >= 1")
        return COMMANDS[args.command](args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigurationError, InvalidInputError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
