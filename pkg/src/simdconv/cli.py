"""Command-line front end: compile, simulate, tune, oracle and dump-ir.

Every command reads JSON files and writes its artifacts into ``--out``. Exit codes:
0 success, 1 user error, 2 candidate rejected, 3 miscompile.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autotuner import roofline_csv, tune
from .codegen import VProgram, parse_text, render_c, render_text
from .config import MachineConfig
from .conv_model import ConvSpec, make_workload, reference_convolve
from .errors import CandidateRejected, InternalMiscompile, NoCandidates, SimdConvError
from .fusion import dump_fused
from .machine import dump_tensor, simulate, validate
from .pipeline import compile_schedule
from .schedule import Schedule, ScheduleSpace

EXIT_OK = 0
EXIT_USER = 1
EXIT_REJECTED = 2
EXIT_MISCOMPILE = 3

COMMANDS = ("compile", "simulate", "tune", "oracle", "dump-ir")


class UserError(Exception):
    pass


@dataclass
class CliConfig:
    command: str
    spec: Path | None
    schedule: Path | None
    space: Path | None
    machine: Path | None
    program: Path | None
    out: Path
    jobs: int
    seed: int | None
    dump: bool
    force: bool
    verbose: bool

    def require(self, *names: str) -> None:
        for name in names:
            path = getattr(self, name)
            if path is None:
                raise UserError(f"{self.command} needs --{name}")
            if not path.is_file():
                raise UserError(f"--{name}: no such file {path}")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simdconv", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--spec", type=Path, help="workload JSON (spec fields plus optional seed)")
    p.add_argument("--schedule", type=Path, help="schedule JSON")
    p.add_argument("--space", type=Path, help="schedule-space JSON; may embed a 'spec' object")
    p.add_argument("--machine", type=Path, help="machine-config JSON (defaults to the built-in machine)")
    p.add_argument("--program", type=Path, help="program text to simulate instead of compiling")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="tuner worker processes")
    p.add_argument("--seed", type=int, default=None, help="workload seed (overrides the spec file)")
    p.add_argument("--dump", action="store_true", help="also write the IR stage tables")
    p.add_argument("--force", action="store_true", help="skip feasibility checks and emit anyway")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UserError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _load_spec(cfg: CliConfig, data: dict | None = None, origin: Path | None = None) -> tuple[ConvSpec, int]:
    origin = origin or cfg.spec
    data = data if data is not None else _read_json(cfg.spec)
    try:
        spec = ConvSpec.from_dict(data)
    except (SimdConvError, TypeError, ValueError, KeyError) as exc:
        raise UserError(f"{origin}: {exc}") from exc
    seed = cfg.seed if cfg.seed is not None else int(data.get("seed", 0))
    return spec, seed


def _load_schedule(cfg: CliConfig) -> Schedule:
    try:
        return Schedule.from_dict(_read_json(cfg.schedule))
    except (SimdConvError, TypeError, ValueError, KeyError) as exc:
        raise UserError(f"{cfg.schedule}: {exc}") from exc


def _load_machine(cfg: CliConfig) -> MachineConfig:
    if cfg.machine is None:
        return MachineConfig()
    cfg.require("machine")
    try:
        return MachineConfig.load(cfg.machine)
    except (SimdConvError, TypeError, ValueError, KeyError) as exc:
        raise UserError(f"{cfg.machine}: {exc}") from exc


def _write(cfg: CliConfig, name: str, text: str) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / name
    path.write_text(text)
    return path


def _ir_tables(compiled) -> str:
    parts = [
        "# triplet rows",
        compiled.body.dump(),
        "# lazy-store groups",
        compiled.grouped.dump(),
        "# register plan",
        compiled.plan.dump(),
        "# fused ops",
        dump_fused(compiled.fused, compiled.grouped),
    ]
    return "\n".join(parts)


def _validation_report(program: VProgram, machine: MachineConfig) -> tuple[str, bool]:
    problems = validate(program, machine)
    if not problems:
        return "validation: ok\n", True
    lines = [f"validation: {len(problems)} violation(s)"]
    for v in problems:
        where = "-" if v.instr is None else str(v.instr)
        lines.append(f"{v.kind}\t{where}\t{v.detail}")
    return "\n".join(lines) + "\n", False


def _compile(cfg: CliConfig, machine: MachineConfig):
    cfg.require("spec", "schedule")
    spec, _ = _load_spec(cfg)
    return compile_schedule(spec, _load_schedule(cfg), machine, checks=not cfg.force)


def cmd_compile(cfg: CliConfig) -> int:
    machine = _load_machine(cfg)
    compiled = _compile(cfg, machine)
    _write(cfg, "program.txt", render_text(compiled.program))
    _write(cfg, "program.c", render_c(compiled.program))
    report, ok = _validation_report(compiled.program, machine)
    _write(cfg, "validation.txt", report)
    if cfg.dump:
        _write(cfg, "ir.txt", _ir_tables(compiled))
    print(report, end="")
    return EXIT_OK if ok else EXIT_REJECTED


def cmd_simulate(cfg: CliConfig) -> int:
    machine = _load_machine(cfg)
    if cfg.program is not None:
        cfg.require("program")
        try:
            program = parse_text(cfg.program.read_text())
        except ValueError as exc:
            raise UserError(f"{cfg.program}: {exc}") from exc
        seed = cfg.seed or 0
        if cfg.spec is not None:
            _, seed = _load_spec(cfg)
    else:
        compiled = _compile(cfg, machine)
        program = compiled.program
        _, seed = _load_spec(cfg)
        if cfg.dump:
            _write(cfg, "ir.txt", _ir_tables(compiled))
    spec = program.spec
    workload = make_workload(spec, seed)
    result = simulate(program, workload, config=machine)
    expected = reference_convolve(spec, workload.input, workload.weights)
    _write(cfg, "sim.json", result.to_json() + "\n")
    _write(cfg, "output.txt", dump_tensor(result.output))
    diff = np.argwhere(result.output.values != expected.values)
    if len(diff) == 0:
        line = "oracle: MATCH"
    else:
        first = tuple(int(v) for v in diff[0])
        line = (
            f"oracle: MISMATCH at {len(diff)} element(s); first {first}: "
            f"got {result.output.values[first]}, want {expected.values[first]}"
        )
    _write(cfg, "oracle.txt", line + "\n")
    print(line)
    print(f"macs/cycle: {result.stats['macs_per_cycle']}")
    if len(diff):
        raise InternalMiscompile(line)
    return EXIT_OK


def cmd_tune(cfg: CliConfig) -> int:
    machine = _load_machine(cfg)
    space_data: dict = {}
    if cfg.space is not None:
        cfg.require("space")
        space_data = _read_json(cfg.space)
    embedded = space_data.pop("spec", None)
    if cfg.spec is not None:
        cfg.require("spec")
        spec, seed = _load_spec(cfg)
    elif embedded is not None:
        spec, seed = _load_spec(cfg, embedded, cfg.space)
    else:
        raise UserError("tune needs --spec or a space file with an embedded spec")
    space_data.pop("seed", None)
    try:
        space = ScheduleSpace.from_dict(space_data)
    except (SimdConvError, TypeError, ValueError) as exc:
        raise UserError(f"{cfg.space}: {exc}") from exc
    report = tune(spec, space, machine, parallelism=max(1, cfg.jobs), seed=seed)
    _write(cfg, "report.json", report.to_json())
    _write(cfg, "roofline.csv", roofline_csv(report))
    best = report.best
    print(f"best: {best.schedule.describe()}  {best.macs_per_cycle} MACs/cycle")
    print(f"accepted {len(report.ok_candidates())} of {report.space_size} in {report.wall_time:.1f}s")
    return EXIT_OK


def cmd_oracle(cfg: CliConfig) -> int:
    cfg.require("spec")
    spec, seed = _load_spec(cfg)
    workload = make_workload(spec, seed)
    out = reference_convolve(spec, workload.input, workload.weights)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tensor", "shape", "checksum"])
    for name, t in (("I", workload.input), ("W", workload.weights), ("O", out)):
        w.writerow([name, "x".join(str(n) for n in t.shape), t.checksum()])
    _write(cfg, "golden.csv", buf.getvalue())
    print(buf.getvalue(), end="")
    return EXIT_OK


def cmd_dump_ir(cfg: CliConfig) -> int:
    compiled = _compile(cfg, _load_machine(cfg))
    text = _ir_tables(compiled)
    _write(cfg, "ir.txt", text)
    if cfg.verbose:
        print(text, end="")
    return EXIT_OK


_HANDLERS = {
    "compile": cmd_compile,
    "simulate": cmd_simulate,
    "tune": cmd_tune,
    "oracle": cmd_oracle,
    "dump-ir": cmd_dump_ir,
}


def run(argv: list[str] | None = None) -> int:
    ns = _parser().parse_args(argv)
    cfg = CliConfig(
        command=ns.command,
        spec=ns.spec,
        schedule=ns.schedule,
        space=ns.space,
        machine=ns.machine,
        program=ns.program,
        out=ns.out,
        jobs=ns.jobs,
        seed=ns.seed,
        dump=ns.dump,
        force=ns.force,
        verbose=ns.verbose,
    )
    try:
        return _HANDLERS[cfg.command](cfg)
    except CandidateRejected as exc:
        print(f"rejected: {exc.reason}: {exc.detail}", file=sys.stderr)
        return EXIT_REJECTED
    except InternalMiscompile as exc:
        print(f"miscompile: {exc}", file=sys.stderr)
        return EXIT_MISCOMPILE
    except (UserError, NoCandidates, SimdConvError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
