"""``raceset`` command line: check, emit-iscc, oracle, dump-model."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace

from . import depcheck
from .isccemit import emit, emit_report_text
from .kmodel import GridConfig, KernelModel, ModelError
from .miniir import Function, IrError, IrSyntaxError, extract_model, parse
from .modeltext import ModelTextError, parse_model, render_model
from .oracle import ConcreteInstance, InvalidInstance, OutOfBounds, StepLimitExceeded, detect_races, load_instance, run
from .isetcore import DisjunctLimitExceeded

EXIT = {"RaceFree": 0, "RaceFound": 1, "Inconclusive": 2}
EXIT_INPUT = 3  # unreadable or malformed input
EXIT_ANALYSIS = 4  # well-formed input the analysis cannot handle

CLI_SAMPLES = (1, 2, 4, 8)


class CliError(Exception):
    def __init__(self, msg: str, code: int = EXIT_INPUT):
        super().__init__(msg)
        self.code = code


@dataclass
class RunConfig:
    mode: str = "race"
    params: dict[str, int] | None = None
    box: int = 16
    fmt: str = "text"
    samples: tuple[int, ...] = CLI_SAMPLES

    def __post_init__(self):
        if self.box < 1:
            raise CliError("--box must be >= 1")
        if self.mode not in ("race", "dep"):
            raise CliError(f"unknown mode {self.mode!r}")
        if self.fmt not in ("text", "structured"):
            raise CliError(f"unknown format {self.fmt!r}")


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise CliError(f"{path}: no such file") from None
    except OSError as e:
        raise CliError(f"{path}: {e.strerror}") from None


def parse_params(text: str | None) -> dict[str, int]:
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        key, sep, val = item.partition("=")
        if not sep or not key.strip():
            raise CliError(f"--params expects k=v pairs, got {item!r}")
        try:
            out[key.strip()] = int(val)
        except ValueError:
            raise CliError(f"--params value for {key.strip()} is not an integer") from None
    return out


def parse_grid(text: str | None) -> tuple[tuple[int, ...], tuple[int, ...]] | None:
    """``bx,by,bz/tx,ty,tz`` (trailing extents may be omitted)."""
    if not text:
        return None
    try:
        g, b = text.split("/")
        grid = tuple(int(x) for x in g.split(","))
        block = tuple(int(x) for x in b.split(","))
    except ValueError:
        raise CliError(f"--grid expects bx,by,bz/tx,ty,tz, got {text!r}") from None
    if not (1 <= len(grid) <= 3 and 1 <= len(block) <= 3) or min(grid + block) < 1:
        raise CliError("--grid extents must be 1-3 positive integers on each side")
    return grid, block


def is_mini_ir(path: str, text: str) -> bool:
    if path.endswith(".mir"):
        return True
    if path.endswith(".model"):
        return False
    head = next((ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith(";")), "")
    return head.startswith("kernel @")


def load_program(path: str, grid=None) -> Function | KernelModel:
    text = _read(path)
    try:
        if is_mini_ir(path, text):
            f = parse(text)
            return f.with_launch(*grid) if grid else f
        model = parse_model(text, path)
    except IrSyntaxError as e:
        raise CliError(f"{path}:{e.line}:{e.col}: {e.args[0]}") from None
    except ModelTextError as e:
        raise CliError(str(e) if e.path else f"{path}: {e}") from None
    except (IrError, ModelError, ValueError) as e:
        raise CliError(f"{path}: {e}") from None
    return _regrid(model, grid) if grid else model


def _regrid(model: KernelModel, grid) -> KernelModel:
    g, b = (v + (1,) * (3 - len(v)) for v in grid)
    ext = {}
    for i, a in enumerate("xyz"):
        if f"bid.{a}" in model.grid.bindings:
            ext[model.grid.bindings[f"bid.{a}"]] = g[i]
        if f"tid.{a}" in model.grid.bindings:
            ext[model.grid.bindings[f"tid.{a}"]] = b[i]
    new = GridConfig(tuple((n, ext.get(n, e)) for n, e in model.grid.block_dims),
                     tuple((n, ext.get(n, e)) for n, e in model.grid.thread_dims),
                     model.grid.bindings, model.grid.barrier_span)
    return replace(model, grid=new)


def to_model(program, path: str) -> KernelModel:
    if isinstance(program, KernelModel):
        return program
    try:
        return extract_model(program)
    except (IrError, ModelError) as e:
        raise CliError(f"{path}: {type(e).__name__}: {e}", EXIT_ANALYSIS) from None


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_check(path: str, config: RunConfig, grid=None, out: str | None = None) -> int:
    model = to_model(load_program(path, grid), path)
    unknown = set(config.params or {}) - set(model.params)
    if unknown:
        raise CliError(f"--params names unknown parameters {sorted(unknown)}")
    assume = depcheck.fixed_params(config.params or {})
    run_check = depcheck.races if config.mode == "race" else depcheck.dependence_report
    try:
        report = run_check(model, samples=config.samples, box=config.box, assume=assume)
    except DisjunctLimitExceeded as e:
        raise CliError(f"{path}: {e}", EXIT_ANALYSIS) from None
    if config.fmt == "structured":
        _emit(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", out)
    else:
        _emit(emit_report_text(report), out)
    return EXIT[report.verdict.value]


def cmd_emit_iscc(path: str, out: str | None = None, grid=None) -> int:
    model = to_model(load_program(path, grid), path)
    _emit(emit(model).text, out)
    return 0


def cmd_dump_model(path: str, out: str | None = None, grid=None) -> int:
    model = to_model(load_program(path, grid), path)
    _emit(render_model(model), out)
    return 0


def cmd_oracle(path: str, instance_path: str, config: RunConfig, grid=None, out: str | None = None) -> int:
    program = load_program(path, grid)
    _read(instance_path)
    try:
        inst: ConcreteInstance = load_instance(instance_path)
    except (InvalidInstance, ValueError, KeyError) as e:
        raise CliError(f"{instance_path}: {e}") from None
    if config.params:
        inst = replace(inst, params={**inst.params, **config.params})
    try:
        log = run(inst, program)
    except (OutOfBounds, StepLimitExceeded, InvalidInstance, IrError) as e:
        raise CliError(f"{path}: {type(e).__name__}: {e}", EXIT_ANALYSIS) from None
    verdict = detect_races(log)
    if config.fmt == "structured":
        doc = {
            "verdict": verdict.label,
            "accesses": len(log),
            "races": [
                {"array": a.array, "cell": list(a.cell),
                 "first": {"statement": a.statement, "block": list(a.block), "thread": list(a.thread),
                           "phase": a.phase, "kind": a.kind.value},
                 "second": {"statement": b.statement, "block": list(b.block), "thread": list(b.thread),
                            "phase": b.phase, "kind": b.kind.value}}
                for a, b in verdict.pairs
            ],
        }
        _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", out)
    else:
        lines = [f"accesses logged: {len(log)}"]
        for a, b in verdict.pairs[:20]:
            lines.append(f"  {a.kind.value} {a.statement} block {a.block} thread {a.thread} phase {a.phase} / "
                         f"{b.kind.value} {b.statement} block {b.block} thread {b.thread} phase {b.phase} "
                         f"on {a.array}{list(a.cell)}")
        if len(verdict.pairs) > 20:
            lines.append(f"  ... {len(verdict.pairs) - 20} more")
        lines.append(f"verdict: {verdict.label}")
        _emit("\n".join(lines) + "\n", out)
    return EXIT[verdict.label]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the result here instead of standard output")
    common.add_argument("--grid", help="launch shape bx,by,bz/tx,ty,tz")
    checking = argparse.ArgumentParser(add_help=False)
    checking.add_argument("--mode", default="race", choices=("race", "dep"))
    checking.add_argument("--params", help="fix parameters, e.g. M=4,N=4")
    checking.add_argument("--box", type=int, default=16, help="witness search half-width")
    checking.add_argument("--format", dest="fmt", default="text", choices=("text", "structured"))

    p = argparse.ArgumentParser(prog="raceset", description="Static data-race checks for GPU kernels.")
    sub = p.add_subparsers(dest="command", required=True)
    c = sub.add_parser("check", parents=[common, checking], help="race or dependence check")
    c.add_argument("input")
    e = sub.add_parser("emit-iscc", parents=[common], help="write an iscc script")
    e.add_argument("input")
    o = sub.add_parser("oracle", parents=[common, checking], help="run on a concrete instance")
    o.add_argument("input")
    o.add_argument("instance")
    d = sub.add_parser("dump-model", parents=[common], help="print the model in text form")
    d.add_argument("input")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        grid = parse_grid(args.grid)
        if args.command == "check":
            cfg = RunConfig(args.mode, parse_params(args.params), args.box, args.fmt)
            return cmd_check(args.input, cfg, grid, args.out)
        if args.command == "emit-iscc":
            return cmd_emit_iscc(args.input, args.out, grid)
        if args.command == "dump-model":
            return cmd_dump_model(args.input, args.out, grid)
        cfg = RunConfig(args.mode, parse_params(args.params), args.box, args.fmt)
        return cmd_oracle(args.input, args.instance, cfg, grid, args.out)
    except CliError as e:
        print(f"raceset: {e}", file=sys.stderr)
        return e.code
    except OSError as e:
        print(f"raceset: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
