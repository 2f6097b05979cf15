"""Command-line entry point: ``drsp <command> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 numerical invariant
violation (a deterministic run delivered fidelity below 1 - 1e-8).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ChannelState, PureState, TargetState
from .protocols import (
    InvariantViolation,
    conventional_batch,
    drsp_batch,
    run_conventional_rsp,
    run_optimal_drsp,
)
from .rng import derive_seed, derive_seeds

COMMANDS = ("run-drsp", "run-conventional", "sweep-theta", "compare", "trace")
SWEEP_COLUMNS = ("theta", "p_conventional_theory", "p_conventional_empirical", "p_drsp_theory", "drsp_fidelity_mean")
FIDELITY_FLOOR = 1 - 1e-8
EXIT_CONFIG, EXIT_INVARIANT = 2, 3


class ConfigError(ValueError):
    pass


def fmt(x: float) -> str:
    """12 significant digits, no locale, no negative zero."""
    return format(float(x) + 0.0, ".12g")


def fmt_complex(z: complex, tol: float = 1e-12) -> str:
    re, im = z.real, z.imag
    if abs(im) <= tol:
        return fmt(re)
    if abs(re) <= tol:
        return fmt(im) + "j"
    sign = "-" if im < 0 else "+"
    return f"({fmt(re)}{sign}{fmt(abs(im))}j)"


def parse_complex_list(text: str) -> tuple[complex, ...]:
    try:
        return tuple(complex(tok.strip().replace(" ", "")) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse complex list {text!r}") from exc


def read_channel_matrix(path: str) -> np.ndarray:
    """Whitespace-separated complex entries, one matrix row per line; '#' starts a comment."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read channel matrix file: {exc}") from exc
    rows = []
    for line in lines:
        line = line.split("#", 1)[0].strip()
        if line:
            try:
                rows.append([complex(tok) for tok in line.split()])
            except ValueError as exc:
                raise ConfigError(f"bad entry in channel matrix file: {line!r}") from exc
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ConfigError("channel matrix file must hold a square matrix")
    return np.array(rows, dtype=complex)


@dataclass
class RunConfig:
    command: str
    d: int | None = None
    theta: float | None = None
    channel_diag: str | None = None
    channel_matrix_file: str | None = None
    target: str | None = None
    random_target: bool = False
    shots: int = 1
    seed: int = 0
    out: str | None = None
    format: str = "csv"
    steps: int = 101
    workers: int = 1
    trace_cap: int = 8

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        forms = [f for f in ("theta", "channel_diag", "channel_matrix_file") if getattr(self, f) is not None]
        if self.command == "sweep-theta":
            if forms:
                raise ConfigError("sweep-theta builds its own channels; drop " + ", ".join(forms))
            if self.steps < 2:
                raise ConfigError("sweep-theta needs at least 2 grid points")
        elif len(forms) != 1:
            raise ConfigError("give exactly one of --theta, --channel-diag, --channel-matrix-file")
        if self.theta is not None and not 0.0 <= self.theta <= math.pi / 4:
            raise ConfigError("theta must lie in [0, pi/4]")
        if self.target is not None and self.random_target:
            raise ConfigError("--target and --random-target are mutually exclusive")
        if self.shots < 1:
            raise ConfigError("shots must be >= 1")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def channel(self) -> ChannelState:
        try:
            if self.theta is not None:
                ch = ChannelState.from_theta(self.theta)
            elif self.channel_diag is not None:
                ch = ChannelState.diagonal(parse_complex_list(self.channel_diag))
            else:
                ch = ChannelState.from_matrix(read_channel_matrix(self.channel_matrix_file))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.d is not None and ch.d != self.d:
            raise ConfigError(f"channel dimension {ch.d} does not match --d {self.d}")
        return ch

    def target_state(self, d: int) -> TargetState:
        if self.target is not None:
            try:
                t = TargetState.from_amplitudes(parse_complex_list(self.target))
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            if t.d != d:
                raise ConfigError(f"target dimension {t.d} does not match channel dimension {d}")
            return t
        return TargetState.random(d, np.random.default_rng(self.seed))

    def dimension(self) -> int:
        if self.command == "sweep-theta":
            if self.d not in (None, 2):
                raise ConfigError("sweep-theta runs on qubits (d = 2)")
            return 2
        return self.channel().d


_INT_KEYS = {"d", "shots", "seed", "steps", "workers", "trace_cap"}


def _coerce(key: str, value: str):
    if key in _INT_KEYS:
        return int(value)
    if key == "theta":
        return float(value)
    if key == "random_target":
        return value.strip().lower() in ("1", "true", "yes", "on")
    return value


def load_config_file(path: str) -> dict:
    """Plain key=value lines; keys use flag spelling without the leading dashes."""
    known = {f.name for f in fields(RunConfig)} - {"command"}
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(key, value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}") from exc
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drsp", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="key=value file; flags override it")
    parser.add_argument("--d", type=int)
    parser.add_argument("--theta", type=float, help="channel sin(t)|00> + cos(t)|11>, t in [0, pi/4]")
    parser.add_argument("--channel-diag", help="comma-separated Schmidt-form diagonal, e.g. 0.6,0.8")
    parser.add_argument("--channel-matrix-file", help="file with the full d x d coefficient matrix")
    parser.add_argument("--target", help="comma-separated complex amplitudes, e.g. 0.6,0.4+0.69282032j")
    parser.add_argument("--random-target", action="store_const", const=True,
                        help="draw the target from the unit sphere using --seed (the default)")
    parser.add_argument("--shots", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output path (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"))
    parser.add_argument("--steps", type=int, help="sweep-theta grid points (default 101)")
    parser.add_argument("--workers", type=int, help="threads for independent sweep points")
    parser.add_argument("--trace-cap", type=int, help="largest d that trace will dump (default 8)")
    return parser


def config_from_args(argv: Sequence[str] | None = None) -> RunConfig:
    args = build_parser().parse_args(argv)
    values = load_config_file(args.config) if args.config else {}
    # a channel or target form given as a flag replaces whichever form the file used
    for group in (("theta", "channel_diag", "channel_matrix_file"), ("target", "random_target")):
        if any(getattr(args, k, None) is not None for k in group):
            for k in group:
                values.pop(k, None)
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    if args.command == "sweep-theta" and "shots" not in values:
        values["shots"] = 10_000
    if args.command == "compare" and "shots" not in values:
        values["shots"] = 10_000
    values["command"] = args.command
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# -- output helpers ---------------------------------------------------------


def _table(columns: Sequence[str], rows: list[dict], fmt_name: str) -> str:
    if fmt_name == "json":
        return json.dumps(rows, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([r[c] if not isinstance(r[c], float) else fmt(r[c]) for c in columns])
    return buf.getvalue()


def _json_num(x: float) -> float:
    return float(fmt(x))


# -- commands -----------------------------------------------------------------


def cmd_run(cfg: RunConfig) -> tuple[str, bool]:
    channel = cfg.channel()
    target = cfg.target_state(channel.d)
    runner = run_optimal_drsp if cfg.command == "run-drsp" else run_conventional_rsp
    rows, ok = [], True
    for i in range(cfg.shots):
        seed = derive_seed(cfg.seed, i)
        res = runner(channel, target, seed)
        row = {"run": i, "seed": seed}
        if cfg.command == "run-conventional":
            row["outcome_filter"] = res.outcomes["filter"]
        row["outcome_C"] = res.outcomes.get("C", "")
        row["outcome_A"] = res.outcomes.get("A", "")
        row["succeeded"] = int(res.succeeded)
        row["fidelity"] = res.fidelity_to_target if cfg.format == "csv" else _json_num(res.fidelity_to_target)
        if cfg.format == "json":
            row["transcript"] = res.ledger.to_transcript().splitlines()
        rows.append(row)
        if cfg.command == "run-drsp" and res.fidelity_to_target < FIDELITY_FLOOR:
            ok = False
    columns = [c for c in rows[0] if c != "transcript"]
    return _table(columns, rows, cfg.format), ok


def _sweep_point(cfg: RunConfig, target: TargetState, index: int) -> dict:
    theta = (math.pi / 4) * index / (cfg.steps - 1)
    channel = ChannelState.from_theta(theta)
    success, _ = conventional_batch(channel, target, derive_seeds(cfg.seed, cfg.shots, index, 0))
    fid = drsp_batch(channel, target, derive_seeds(cfg.seed, cfg.shots, index, 1))
    return {
        "theta": theta,
        "p_conventional_theory": 2 * math.sin(theta) ** 2,
        "p_conventional_empirical": float(np.mean(success)),
        "p_drsp_theory": 1.0,
        "drsp_fidelity_mean": float(np.mean(fid)),
        "_min_fidelity": float(np.min(fid)),
    }


def sweep_rows(cfg: RunConfig) -> list[dict]:
    target = cfg.target_state(2)
    points = range(cfg.steps)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(lambda i: _sweep_point(cfg, target, i), points))
    return [_sweep_point(cfg, target, i) for i in points]


def cmd_sweep_theta(cfg: RunConfig) -> tuple[str, bool]:
    rows = sweep_rows(cfg)
    ok = all(r["_min_fidelity"] >= FIDELITY_FLOOR for r in rows)
    public = [{c: (r[c] if cfg.format == "csv" else _json_num(r[c])) for c in SWEEP_COLUMNS} for r in rows]
    return _table(SWEEP_COLUMNS, public, cfg.format), ok


def compare_rows(cfg: RunConfig) -> list[dict]:
    channel = cfg.channel()
    if channel.d != 2:
        raise ConfigError("compare runs the conventional scheme, which needs d = 2")
    target = cfg.target_state(2)
    seeds = derive_seeds(cfg.seed, cfg.shots)
    success, conv_fid = conventional_batch(channel, target, seeds)
    drsp_fid = drsp_batch(channel, target, seeds)
    return [
        {"protocol": "conventional", "success_rate": float(np.mean(success)),
         "mean_fidelity": float(np.mean(conv_fid)), "shots": cfg.shots, "seed": cfg.seed},
        {"protocol": "drsp", "success_rate": 1.0, "mean_fidelity": float(np.mean(drsp_fid)),
         "shots": cfg.shots, "seed": cfg.seed, "_min_fidelity": float(np.min(drsp_fid))},
    ]


COMPARE_COLUMNS = ("protocol", "success_rate", "mean_fidelity", "shots", "seed")


def cmd_compare(cfg: RunConfig) -> tuple[str, bool]:
    rows = compare_rows(cfg)
    ok = rows[1]["_min_fidelity"] >= FIDELITY_FLOOR
    public = []
    for r in rows:
        row = {c: r[c] for c in COMPARE_COLUMNS}
        if cfg.format == "json":
            row["success_rate"] = _json_num(row["success_rate"])
            row["mean_fidelity"] = _json_num(row["mean_fidelity"])
        public.append(row)
    return _table(COMPARE_COLUMNS, public, cfg.format), ok


def basis_label(index: int, dims: Sequence[int]) -> str:
    digits = np.unravel_index(index, tuple(dims))
    sep = "," if max(dims) > 10 else ""
    return sep.join(str(int(k)) for k in digits)


def nonzero_terms(state: PureState, tol: float = 1e-12) -> list[tuple[str, complex]]:
    return [(basis_label(i, state.dims), complex(a)) for i, a in enumerate(state.amplitudes) if abs(a) > tol]


def render_state(label: str, state: PureState) -> str:
    out = []
    for b, a in nonzero_terms(state):
        text = fmt_complex(a)
        if out:
            text = f"- {text[1:]}" if text.startswith("-") else f"+ {text}"
        out.append(f"{text}|{b}>")
    return f"{label}: " + " ".join(out)


def cmd_trace(cfg: RunConfig) -> tuple[str, str | None, bool]:
    """Returns (human-readable text, machine-readable text or None, ok)."""
    channel = cfg.channel()
    if channel.d > cfg.trace_cap:
        raise ConfigError(f"d = {channel.d} exceeds the trace cap of {cfg.trace_cap}")
    target = cfg.target_state(channel.d)
    res = run_optimal_drsp(channel, target, derive_seed(cfg.seed, 0))
    lines = [render_state(lbl, st) for lbl, st in zip(res.trace_labels, res.trace)]
    lines.append("outcomes: " + " ".join(f"{k}={v}" for k, v in res.outcomes.items()))
    lines.append(f"fidelity: {fmt(res.fidelity_to_target)}")
    lines.append("transcript:")
    human = "\n".join(lines) + "\n" + res.ledger.to_transcript()

    machine = None
    if cfg.out is not None:
        if cfg.format == "json":
            doc = {
                "states": [
                    {"label": lbl, "dims": list(st.dims),
                     "amplitudes": [{"basis": b, "re": _json_num(a.real), "im": _json_num(a.imag)}
                                    for b, a in nonzero_terms(st)]}
                    for lbl, st in zip(res.trace_labels, res.trace)
                ],
                "outcomes": res.outcomes,
                "fidelity": _json_num(res.fidelity_to_target),
                "transcript": res.ledger.to_transcript().splitlines(),
            }
            machine = json.dumps(doc, indent=2) + "\n"
        else:
            rows = [{"label": lbl, "basis": b, "re": a.real, "im": a.imag}
                    for lbl, st in zip(res.trace_labels, res.trace) for b, a in nonzero_terms(st)]
            machine = _table(("label", "basis", "re", "im"), rows, "csv")
    return human, machine, res.fidelity_to_target >= FIDELITY_FLOOR


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = config_from_args(argv)
        cfg.dimension()
        if cfg.command == "trace":
            human, machine, ok = cmd_trace(cfg)
            sys.stdout.write(human)
            if machine is not None:
                _emit(machine, cfg.out)
        else:
            handler = {"run-drsp": cmd_run, "run-conventional": cmd_run,
                       "sweep-theta": cmd_sweep_theta, "compare": cmd_compare}[cfg.command]
            text, ok = handler(cfg)
            _emit(text, cfg.out)
    except ConfigError as exc:
        print(f"drsp: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"drsp: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    if not ok:
        print("drsp: invariant violation: deterministic run below fidelity floor", file=sys.stderr)
        return EXIT_INVARIANT
    return 0


if __name__ == "__main__":
    sys.exit(main())
