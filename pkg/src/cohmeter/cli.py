"""Command-line entry point: ``cohmeter {measure,check-channel,evolve,witness}``.

Exit codes: 0 success, 2 bad input (unparsable files, bad flags), 3 a domain
invariant is violated, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .channels import KrausChannel, SubspaceKraus
from .dynamics import DynamicsSpec, evolve, observable_series, ring_matrix, uniform_matrix
from .errors import CohmeterError, NotTracePreserving, StepTooLarge
from .formats import (ParseError, density_to_json, kraus_from_json, load_json, params_to_json,
                      rho_from_json, state_from_json)
from .hilbert import pure_density
from .optimizer import OptimizerConfig, measure_profile
from .witness import appendix_construction, appendix_witness, evaluate_tau

log = logging.getLogger("cohmeter")

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT, EXIT_NUMERICAL = 0, 2, 3, 4
BUNDLED = ("fig1", "fig2")


def _parse_ks(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ParseError(f"--k expects a comma separated list of integers, got {text!r}") from None


def _optimizer_config(args, settings: dict | None = None) -> OptimizerConfig:
    settings = dict(settings or {})
    if args.restarts is not None:
        settings["restarts"] = args.restarts
    if args.seed is not None:
        settings["seed"] = args.seed
    if getattr(args, "tol", None) is not None:
        settings["convergence_tol"] = args.tol
    try:
        return OptimizerConfig.from_env(**settings)
    except TypeError as exc:
        raise ParseError(f"bad optimizer settings: {exc}") from None


def _coupling(value, n: int, name: str) -> np.ndarray:
    if isinstance(value, dict):
        if "uniform" in value:
            return uniform_matrix(n, float(value["uniform"]))
        if "ring" in value:
            return ring_matrix(n, float(value["ring"]))
        raise ParseError(f"{name}: expected a matrix, {{'uniform': x}} or {{'ring': x}}")
    mat = np.asarray(value, dtype=float)
    if mat.shape != (n, n):
        raise ParseError(f"{name}: expected a {n}x{n} matrix, got shape {mat.shape}")
    return mat


def _resolve_config(path: str) -> tuple[dict, str]:
    if path in BUNDLED:
        text = resources.files("cohmeter.configs").joinpath(f"{path}.json").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ParseError(f"cannot read config {path}: {exc}") from None
    try:
        return json.loads(text), text
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None


def run_config_to_spec(cfg: dict, dt: float | None = None, t_max: float | None = None) -> DynamicsSpec:
    """Build a :class:`DynamicsSpec` from a run-config dictionary."""
    for key in ("n", "lambda", "gamma", "t_max", "initial"):
        if key not in cfg:
            raise ParseError(f"run config is missing {key!r}")
    n = int(cfg["n"])
    lam = _coupling(cfg["lambda"], n, "lambda")
    gam = _coupling(cfg["gamma"], n, "gamma")
    initial = rho_from_json(cfg["initial"])
    step = dt if dt is not None else cfg.get("dt") or DynamicsSpec.default_dt(lam, gam)
    horizon = t_max if t_max is not None else cfg["t_max"]
    terms = tuple(cfg.get("dissipator_terms", (1, 2, 3, 4)))
    return DynamicsSpec(lam, gam, float(horizon), float(step), initial, terms)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_series_csv(path: Path, series, ks) -> list[str]:
    n = series.n
    header = ["t"] + [f"q_{i + 1}" for i in range(n)] + ["IPR"] + [f"T_{k}_normalized" for k in ks]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, t in enumerate(series.times):
            writer.writerow([_fmt(t)] + [_fmt(series.observables[h][i]) for h in header[1:]])
    return header


def write_dat(path: Path, header: list[str], series) -> None:
    cols = [series.times] + [series.observables[h] for h in header[1:]]
    with open(path, "w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in zip(*cols):
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def _versions() -> dict:
    import numba
    import scipy
    return {"cohmeter": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


def _emit(payload, out: Path | None, name: str) -> None:
    text = json.dumps(payload, indent=2)
    print(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text + "\n")


def cmd_measure(args) -> int:
    rho = rho_from_json(load_json(args.input))
    ks = _parse_ks(args.k) or list(range(2, rho.n + 1))
    cfg = _optimizer_config(args)
    results = measure_profile(rho, ks, cfg)
    _emit([r.to_dict() for r in results], args.out, "measure.json")
    return EXIT_OK


def cmd_witness(args) -> int:
    state = state_from_json(load_json(args.input))
    ks = _parse_ks(args.k) or list(range(2, state.coherence_rank + 1))
    rho = pure_density(state)
    report = []
    for k in ks:
        con = appendix_construction(state, k)
        params = appendix_witness(state, k)
        report.append({"k": k, "n": state.n, "support": [int(s) + 1 for s in con.support],
                       "tau": evaluate_tau(rho, params, k), "params": params_to_json(params)})
    _emit(report, args.out, "witness.json")
    return EXIT_OK


def cmd_check_channel(args) -> int:
    data = load_json(args.input)
    mats = kraus_from_json(data)
    ops = [SubspaceKraus(m) for m in mats]
    report = {"n": data["n"], "operators": [str(op.classification) for op in ops]}
    code = EXIT_OK
    try:
        channel = KrausChannel(tuple(ops))
        report["verdict"] = "incoherent" if channel.incoherent else "coherent"
    except NotTracePreserving as exc:
        report["verdict"] = "not-trace-preserving"
        log.error("%s", exc)
        code = EXIT_INVARIANT
    _emit(report, args.out, "channel.json")
    return code


def _peak_times(series, ks) -> dict:
    peaks = {}
    for k in ks:
        col = series.observables[f"T_{k}_normalized"]
        i = int(np.argmax(col))
        peaks[str(k)] = {"t": float(series.times[i]), "value": float(col[i])}
    return peaks


def cmd_evolve(args) -> int:
    if args.config is None:
        raise ParseError("evolve needs --config (a path or one of: " + ", ".join(BUNDLED) + ")")
    cfg_dict, cfg_text = _resolve_config(args.config)
    spec = run_config_to_spec(cfg_dict, args.dt, args.t_max)
    ks = _parse_ks(args.k) or cfg_dict.get("ks") or list(range(2, spec.n + 1))
    opt = _optimizer_config(args, cfg_dict.get("optimizer"))
    stride = int(cfg_dict.get("stride", 10))
    out = Path(args.out or "runs/" + Path(args.config).stem)
    out.mkdir(parents=True, exist_ok=True)

    log.info("integrating %d steps", int(round(spec.t_max / spec.dt)))
    series = evolve(spec)
    log.info("measuring T_k for k=%s on %d points", ks, len(series.subsample(stride)))
    series = observable_series(series, ks, opt, stride,
                               progress=lambda i, total: log.debug("point %d/%d", i + 1, total))

    header = write_series_csv(out / "series.csv", series, ks)
    write_dat(out / "series.dat", header, series)
    summary = {
        "n": spec.n, "ks": ks, "stride": stride, "dt": spec.dt, "t_max": spec.t_max,
        "w": {str(k): series.w[k] for k in ks},
        "peaks": _peak_times(series, ks),
        "final_ipr": float(series.observables["IPR"][-1]),
        "final_state": density_to_json(series.states[-1]),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    overrides = {"dt": args.dt, "t_max": args.t_max, "k": args.k, "restarts": args.restarts, "seed": args.seed}
    manifest = {
        "config": args.config,
        "config_sha256": hashlib.sha256(cfg_text.encode()).hexdigest(),
        "overrides": {key: v for key, v in overrides.items() if v is not None},
        "seed": opt.seed,
        "restarts": opt.restarts,
        "versions": _versions(),
        "artifacts": ["series.csv", "series.dat", "summary.json"],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(json.dumps({key: summary[key] for key in ("w", "peaks", "final_ipr")}, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cohmeter", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_input=True):
        if with_input:
            p.add_argument("input", help="JSON file")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--k", default=None, help="comma separated coherence orders")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--restarts", type=int, default=None)
        p.add_argument("--tol", type=float, default=None, help="local convergence tolerance")

    p = sub.add_parser("measure", help="estimate T_kn of a state or density matrix")
    common(p)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("witness", help="explicit witness parameters for a pure state")
    common(p)
    p.set_defaults(func=cmd_witness)

    p = sub.add_parser("check-channel", help="classify the Kraus operators of a channel")
    p.add_argument("input", help="Kraus-set JSON file")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_check_channel)

    p = sub.add_parser("evolve", help="integrate a run config and tabulate T_k, IPR and populations")
    common(p, with_input=False)
    p.add_argument("--config", default=None, help="run-config JSON path, or fig1 / fig2")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--t-max", dest="t_max", type=float, default=None)
    p.set_defaults(func=cmd_evolve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ParseError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except (StepTooLarge, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except CohmeterError as exc:
        log.error("%s", exc)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
