"""Command-line runner: ``srl --command verify --out DIR``.

Exit codes: 0 all checks pass, 1 a check failed, 2 every check passed but
some quadrature is untrusted, 3 configuration or output-path error.
SRL_THREADS caps BLAS/OpenMP threads when set before numpy is loaded.
"""

from __future__ import annotations

import os

if os.environ.get("SRL_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["SRL_THREADS"])

import argparse  # noqa: E402
import hashlib  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402
from dataclasses import asdict, dataclass, field, fields  # noqa: E402
from pathlib import Path  # noqa: E402

log = logging.getLogger("srl")

COMMANDS = ("constants", "strichartz", "expansion", "optimize", "refined", "concmaps", "verify")
DEFAULT_EPS = (0.3, math.sqrt(0.06), 0.2, math.sqrt(0.02))
MIN_SPHERE_RES = {2: 16, 3: 12}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    N: int = 3
    sphere_resolution: int | None = None  # None: per-command default
    eps_list: list = field(default_factory=lambda: list(DEFAULT_EPS))
    eps_cap: float = 0.3
    n_starts: int = 8
    max_iters: int = 60
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    out_dir: str = "srl_out"
    quick: bool = False

    def validate(self) -> "RunConfig":
        if self.N not in (2, 3):
            raise ConfigError(f"unsupported sphere dimension N={self.N}; use 2 or 3")
        if self.sphere_resolution is not None and self.sphere_resolution < MIN_SPHERE_RES[self.N]:
            raise ConfigError(f"sphere_resolution must be >= {MIN_SPHERE_RES[self.N]} for N={self.N}")
        eps = list(self.eps_list)
        if len(eps) < 4:
            raise ConfigError("eps_list needs at least 4 values")
        if any(not isinstance(e, (int, float)) or not 0 < e <= 0.35 for e in eps):
            raise ConfigError("eps_list values must lie in (0, 0.35]")
        if len(set(eps)) != len(eps):
            raise ConfigError("eps_list values must be distinct")
        if not 0 < self.eps_cap < 1:
            raise ConfigError("eps_cap must lie in (0, 1)")
        if self.n_starts < 1 or self.max_iters < 1:
            raise ConfigError("n_starts and max_iters must be positive")
        for k, v in self.tolerances.items():
            if not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"tolerance {k!r} must be positive")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data).validate()

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON, ignoring the output directory."""
        d = self.to_dict()
        d.pop("out_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    try:
        return RunConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class RunOutcome:
    status: int
    report: dict
    files: list


def _suites_for(command: str, cfg: RunConfig):
    from . import suites

    if command != "verify":
        return [(fn, cfg) for fn in suites.SUITES[command]]
    plan = []
    for name in ("constants", "strichartz", "concmaps", "refined"):
        plan += [(fn, cfg) for fn in suites.SUITES[name]]
    for N in (3, 2):
        sub = RunConfig(**{**cfg.to_dict(), "N": N, "sphere_resolution": None})
        plan += [(suites.expansion, sub), (suites.optimize, sub)]
    return plan


def emit_report(command: str, cfg: RunConfig, result, out_dir: Path) -> tuple:
    """Write <command>.json, sweep CSVs and figures; return (report, files)."""
    from . import report as figures

    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [r.to_dict() for r in result.rows]
    payload = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict() | {"out_dir": None},
        "results": rows,
        "trusted": all(r["trusted"] for r in rows),
        "pass": all(r["pass"] for r in rows),
        "data": result.data,
    }
    files = []
    path = out_dir / f"{command}.json"
    path.write_text(json.dumps(payload, indent=1, sort_keys=True, default=float) + "\n", encoding="utf-8")
    files.append(path)
    for name, fit in result.csv.items():
        p = out_dir / name
        fit.write_csv(p)
        files.append(p)
    files += figures.write_figures(result.data, out_dir)
    return payload, files


def run(command: str, cfg: RunConfig) -> RunOutcome:
    from .suites import SuiteResult

    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    cfg.validate()
    result = SuiteResult()
    for fn, sub in _suites_for(command, cfg):
        log.info("running %s (N=%s)", fn.__name__, sub.N)
        result.extend(fn(sub))
    report, files = emit_report(command, cfg, result, Path(cfg.out_dir))
    if not report["pass"]:
        status = 1
    elif not report["trusted"]:
        status = 2
    else:
        status = 0
    return RunOutcome(status, report, files)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="srl", description="Sharp extension and Strichartz constant checks.")
    p.add_argument("--command", required=True, choices=COMMANDS)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="sphere dimension N")
    p.add_argument("--quick", action="store_true", help="reduced work for CI")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.out:
            cfg.out_dir = args.out
        if args.seed is not None:
            cfg.seed = args.seed
        if args.n is not None:
            cfg.N = args.n
        if args.quick:
            cfg.quick = True
        cfg.validate()
        outcome = run(args.command, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return 3
    for r in outcome.report["results"]:
        flag = "PASS" if r["pass"] else "FAIL"
        print(f"{flag}  {r['name']}: {r['value']:.10g} (expected {r['expected']:.10g}, {r['mode']} tol {r['tolerance']:.3g})")
    print(f"exit {outcome.status}; wrote {len(outcome.files)} files to {cfg.out_dir}")
    return outcome.status


if __name__ == "__main__":
    sys.exit(main())
