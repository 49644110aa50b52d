"""Command-line front end: ``qsde simulate | returns | analyze | ingest``.

Parameters come from three layers, later ones winning: built-in defaults
(the reference model preset), a flat ``key = value`` file passed with
``--config``, and command-line flags. Every run writes ``<output>.manifest``
in the same key=value format; passing it back through ``--config``
reproduces the outputs byte for byte.

Exit codes: 0 success, 1 validation, 2 runtime/numeric, 3 I/O.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .io import (
    InputError,
    read_kv,
    read_series,
    read_ticks,
    read_trajectory,
    trajectory_header,
    write_kv,
    write_series,
    write_trajectory_stream,
)
from .qgaussian import DomainError, QGaussianParams, qgaussian_pdf
from .returns import (
    ReturnModelParams,
    aggregate_ticks,
    decompose_empirical,
    fit_modulation,
    generate,
    normalize_returns,
)
from .sde import DivergenceError, SdeParams, SolverConfig, integrate_window, iter_chunks, simulate_windowed
from .series import ReturnSeries
from .spectral import (
    average_spectra,
    estimate_pdf,
    estimate_psd,
    fit_broken_power_law,
    fit_power_law,
    hill_tail_exponent,
    theoretical_spectrum,
)

OUTPUT_ENV = "QSDE_OUTPUT_DIR"
EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3


class ValidationError(ValueError):
    pass


# -- value parsing ----------------------------------------------------------------


def _none(s):
    return isinstance(s, str) and s.strip().lower() in ("none", "")


def _optional(conv):
    def parse(s):
        if s is None or _none(s):
            return None
        return conv(s)

    parse.__name__ = f"optional {conv.__name__}"
    return parse


def _bool(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int(s):
    if isinstance(s, int):
        return s
    f = float(s)
    if not f.is_integer():
        raise ValueError(f"not an integer: {s!r}")
    return int(f)


def _float(s):
    return float(s)


def _words(s):
    if isinstance(s, (list, tuple)):
        return [str(x) for x in s]
    return str(s).split()


def _choice(*options):
    def parse(s):
        if s not in options:
            raise ValueError(f"{s!r} not one of {options}")
        return s

    parse.__name__ = "choice"
    return parse


@dataclass(frozen=True)
class Opt:
    parse: Callable[[Any], Any]
    default: Any
    help: str = ""
    flag: bool = False


MODEL_OPTS = {
    "eta": Opt(_float, 2.5, "multiplicativity exponent eta"),
    "lambda": Opt(_float, 3.6, "stationary PDF exponent lambda"),
    "epsilon": Opt(_float, 0.01, "regime-split parameter epsilon"),
}
SOLVER_OPTS = {
    "kappa": Opt(_float, 0.01, "variable-step precision kappa"),
    "burn_in": Opt(_int, 1_000_000, "discarded initial steps"),
    "x_max": Opt(_optional(_float), None, "reflecting bound on |x| (none = unbounded)"),
}

COMMANDS: dict[str, dict[str, Opt]] = {
    "simulate": {
        **MODEL_OPTS,
        **SOLVER_OPTS,
        "x_init": Opt(_float, 0.0, "initial value"),
        "seed": Opt(_int, 0, "RNG seed"),
        "max_steps": Opt(_optional(_int), None, "stop after this many steps"),
        "t_end": Opt(_optional(_float), None, "stop at this scaled time"),
        "tau": Opt(_optional(_float), None, "write window means over tau instead of the raw path"),
        "format": Opt(_choice("bin", "csv"), "bin", "raw trajectory format"),
        "spectrum_check": Opt(_bool, True, "require 4-eta < lambda < 1+2eta", flag=True),
        "output": Opt(_optional(str), None, "output file"),
    },
    "returns": {
        **MODEL_OPTS,
        **SOLVER_OPTS,
        "paper_defaults": Opt(_bool, False, "start from the reference model preset", flag=True),
        "minutes": Opt(_optional(_int), None, "number of one-minute returns"),
        "seed": Opt(_int, 0, "RNG seed"),
        "lambda2": Opt(_float, 5.0, "exponent of the fast q-Gaussian layer"),
        "r0_bar": Opt(_float, 0.2, "background scale"),
        "tau": Opt(_float, 1e-4, "scaled-time length of one minute"),
        "intercept": Opt(_float, 1.0, "modulation intercept"),
        "slope": Opt(_float, 2.5, "modulation slope"),
        "with_modulator": Opt(_bool, False, "add the background X column", flag=True),
        "realizations": Opt(_int, 1, "independent seeded runs"),
        "output": Opt(_optional(str), None, "output file"),
    },
    "analyze": {
        "inputs": Opt(_words, [], "input files (positional)"),
        "column": Opt(_optional(str), None, "value column of series CSVs"),
        "tau": Opt(_optional(_float), None, "window for raw trajectories"),
        "signed": Opt(_bool, False, "analyze X instead of |X|", flag=True),
        "normalize": Opt(_bool, False, "scale each input to unit std before pooling", flag=True),
        "segments": Opt(_int, 8, "half-overlapping PSD segments"),
        "taper": Opt(_choice("hann", "rect"), "hann", "PSD taper"),
        "fit": Opt(_words, [], "power-law fit ranges lo:hi"),
        "broken": Opt(_optional(str), None, "two-regime fit range lo:hi"),
        "bins_per_decade": Opt(_int, 20, "log re-binning for fits"),
        "pdf_bins": Opt(_int, 50, "PDF histogram bins"),
        "pdf_log": Opt(_bool, True, "logarithmic PDF bins", flag=True),
        "hill_fraction": Opt(_float, 1e-3, "tail fraction for the Hill estimate"),
        "theory": Opt(_bool, False, "add closed-form PDF/PSD columns", flag=True),
        "eta": Opt(_float, 2.5, "eta for --theory"),
        "lambda": Opt(_float, 3.6, "lambda for --theory"),
        "output": Opt(_optional(str), None, "output prefix"),
    },
    "ingest": {
        "input": Opt(_optional(str), None, "tick CSV (timestamp,price)"),
        "bar": Opt(_float, 60.0, "bar length in seconds"),
        "decompose": Opt(_bool, False, "fit r0 against the moving average", flag=True),
        "ma_window": Opt(_int, 60, "moving-average window in bars (even)"),
        "lambda2": Opt(_float, 5.0, "fixed q-Gaussian exponent for the r0 fits"),
        "ma_bins": Opt(_int, 20, "quantile bins of |MA|"),
        "min_count": Opt(_int, 1000, "flag bins with fewer points"),
        "normalize": Opt(_bool, True, "normalize returns to unit std before decomposing", flag=True),
        "output": Opt(_optional(str), None, "output file"),
    },
}
META_KEYS = ("command", "version")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsde", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"qsde {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value file (e.g. a previous manifest)")
        for key, opt in opts.items():
            if key == "inputs":
                p.add_argument("inputs", nargs="*", default=argparse.SUPPRESS, help=opt.help)
                continue
            dest = key
            flag = "--" + key.replace("_", "-")
            if opt.flag:
                p.add_argument(flag, dest=dest, action=argparse.BooleanOptionalAction,
                               default=argparse.SUPPRESS, help=opt.help)
            elif key == "fit":
                p.add_argument(flag, dest=dest, action="append", default=argparse.SUPPRESS,
                               help=opt.help)
            else:
                p.add_argument(flag, dest=dest, default=argparse.SUPPRESS, help=opt.help)
    return parser


def resolve(command: str, flags: dict, config_path: str | None) -> dict:
    """Merge defaults, config file and flags into typed values."""
    opts = COMMANDS[command]
    raw: dict[str, Any] = {k: o.default for k, o in opts.items()}
    if config_path:
        cfg = read_kv(config_path)
        unknown = set(cfg) - set(opts) - set(META_KEYS)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if cfg.get("command", command) != command:
            raise ValidationError(f"config is for command {cfg['command']!r}, not {command!r}")
        raw.update({k: v for k, v in cfg.items() if k in opts})
    if command == "returns" and _bool(flags.get("paper_defaults", raw["paper_defaults"])):
        # the preset replaces config-file model values; explicit flags still win
        raw.update(_reference_preset())
    raw.update(flags)
    out = {}
    for key, value in raw.items():
        try:
            out[key] = opts[key].parse(value) if value is not None else None
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"--{key.replace('_', '-')}: {exc}") from exc
    return out


def _reference_preset() -> dict:
    m = ReturnModelParams.paper_defaults()
    return {
        "eta": m.sde.eta, "lambda": m.sde.lam, "epsilon": m.sde.epsilon, "lambda2": m.lambda2,
        "r0_bar": m.r0_bar, "tau": m.tau, "intercept": m.modulation[0], "slope": m.modulation[1],
    }


def _output_path(value: str | None, default_name: str) -> Path:
    if value:
        return Path(value)
    return Path(os.environ.get(OUTPUT_ENV, ".")) / default_name


def _write_manifest(path: Path, command: str, values: dict) -> Path:
    mpath = Path(str(path) + ".manifest")
    write_kv(mpath, {"command": command, "version": __version__, **values})
    return mpath


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ValidationError(f"bad range {text!r}; expected lo:hi") from exc
    if not 0 < lo < hi:
        raise ValidationError(f"bad range {text!r}; need 0 < lo < hi")
    return lo, hi


# -- simulate ---------------------------------------------------------------------


def _sde_params(v: dict, check: bool) -> SdeParams:
    p = SdeParams(eta=v["eta"], lam=v["lambda"], epsilon=v.get("epsilon", 0.0))
    if check:
        p.check_spectrum_regime()
    return p


def cmd_simulate(v: dict) -> list[Path]:
    p = _sde_params(v, v["spectrum_check"])
    if v["tau"] is not None:
        if v["t_end"] is None:
            raise ValidationError("--tau needs --t-end (number of windows = t_end / tau)")
        if not v["tau"] > 0:
            raise ValidationError("--tau must be > 0")
        n_windows = int(math.floor(v["t_end"] / v["tau"] + 1e-9))
        if n_windows < 1:
            raise ValidationError("t_end shorter than one window")
    elif v["max_steps"] is None and v["t_end"] is None:
        raise ValidationError("give --max-steps or --t-end")
    cfg = SolverConfig(
        kappa=v["kappa"], burn_in=v["burn_in"], x_init=v["x_init"], seed=v["seed"],
        max_steps=v["max_steps"], t_end=v["t_end"], x_max=v["x_max"],
    )
    if v["tau"] is not None:
        out = _output_path(v["output"], "windows.csv")
        xs = simulate_windowed(p, cfg, v["tau"], n_windows)
        write_series(out, {"t": xs.times, "X": xs.values})
    else:
        out = _output_path(v["output"], f"trajectory.{v['format']}")
        try:
            write_trajectory_stream(out, iter_chunks(p, cfg), trajectory_header(p, cfg), v["format"])
        except BaseException:
            out.unlink(missing_ok=True)
            raise
    v = {**v, "output": str(out)}
    return [out, _write_manifest(out, "simulate", v)]


# -- returns ------------------------------------------------------------------------


def _returns_params(v: dict) -> ReturnModelParams:
    sde = SdeParams(eta=v["eta"], lam=v["lambda"], epsilon=v["epsilon"])
    return ReturnModelParams(
        sde=sde, lambda2=v["lambda2"], r0_bar=v["r0_bar"], tau=v["tau"],
        modulation=(v["intercept"], v["slope"]),
    )


def _realization_seed(seed: int, i: int, n: int) -> int:
    if n == 1:
        return seed
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


def _one_realization(args):
    params, minutes, seed, solver = args
    r, x = generate(params, minutes, seed, solver)
    return r.values, x.values


def cmd_returns(v: dict) -> list[Path]:
    if v["minutes"] is None or v["minutes"] < 1:
        raise ValidationError("--minutes must be >= 1")
    if v["realizations"] < 1:
        raise ValidationError("--realizations must be >= 1")
    params = _returns_params(v)
    solver = SolverConfig(kappa=v["kappa"], burn_in=v["burn_in"], x_max=v["x_max"])
    n = v["realizations"]
    jobs = [(params, v["minutes"], _realization_seed(v["seed"], i, n), solver) for i in range(n)]
    if n == 1:
        results = [_one_realization(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=min(n, os.cpu_count() or 1)) as pool:
            results = list(pool.map(_one_realization, jobs))
    out = _output_path(v["output"], "returns.csv")
    paths = []
    for i, (r, x) in enumerate(results):
        path = out if n == 1 else out.with_name(f"{out.stem}_r{i:03d}{out.suffix}")
        cols = {"t": np.arange(r.size, dtype=float), "r": r}
        if v["with_modulator"]:
            cols["X"] = x
        write_series(path, cols)
        paths.append(path)
    paths.append(_write_manifest(out, "returns", {**v, "output": str(out)}))
    return paths


# -- analyze ----------------------------------------------------------------------


def _load_for_analysis(path: str, v: dict) -> ReturnSeries:
    with open(path, "rb") as fh:
        head = fh.read(8)
    is_traj = head.startswith(b"QSDETRJ1") or head.split(b"\n")[0].strip() == b"t,x"
    if is_traj:
        if v["tau"] is None:
            raise ValidationError(f"{path} is a raw trajectory; pass --tau to window it")
        return integrate_window(read_trajectory(path), v["tau"])
    series, _ = read_series(path, v["column"])
    return series


def cmd_analyze(v: dict) -> list[Path]:
    if not v["inputs"]:
        raise ValidationError("no input files")
    fits = [_range(f) for f in v["fit"]]
    broken = _range(v["broken"]) if v["broken"] else None
    if v["segments"] < 1 or v["pdf_bins"] < 1 or v["bins_per_decade"] < 1:
        raise ValidationError("segments, pdf-bins and bins-per-decade must be >= 1")
    theory_p = None
    if v["theory"]:
        theory_p = SdeParams(eta=v["eta"], lam=v["lambda"])
        theory_p.check_spectrum_regime()
    for path in v["inputs"]:
        if not Path(path).is_file():
            raise InputError(f"no such file: {path}")

    series = []
    for path in sorted(v["inputs"]):
        s = _load_for_analysis(path, v)
        if v["normalize"]:
            s = normalize_returns(s)
        series.append(s if v["signed"] else s.with_values(np.abs(s.values)))
    dts = {s.dt for s in series}
    if len(dts) > 1 and not np.allclose(list(dts), min(dts)):
        raise ValidationError("inputs have different sampling steps")
    spec = average_spectra([estimate_psd(s, v["segments"], v["taper"]) for s in series])
    pooled = np.concatenate([s.values for s in series])
    pdf = estimate_pdf(pooled, bins=v["pdf_bins"], log=v["pdf_log"], absolute=not v["signed"])

    prefix = _output_path(v["output"], "analysis")
    psd_cols = {"freq": spec.freqs, "power": spec.power}
    pdf_cols = {"bin": pdf.centers, "density": pdf.density}
    lines = [f"qsde {__version__} analyze", f"inputs: {' '.join(sorted(v['inputs']))}",
             f"samples: {pooled.size}  dt: {series[0].dt:g}",
             f"psd: {spec.n_segments} segments, taper {spec.window_label}"]
    if theory_p is not None:
        beta, amp = theoretical_spectrum(theory_p)
        psd_cols["theory"] = amp / spec.freqs**beta
        factor = 1.0 if v["signed"] else 2.0
        pdf_cols["theory"] = factor * qgaussian_pdf(pdf.centers, QGaussianParams(v["lambda"], 1.0))
        lines.append(f"theory: beta={beta:.6g} A={amp:.6g}")
    for lo, hi in fits:
        f = fit_power_law(spec, lo, hi, v["bins_per_decade"])
        lines.append(
            f"fit [{lo:g}, {hi:g}]: beta={f.exponent:.6g} A={f.amplitude:.6g} rms={f.residual:.3g}"
        )
    if broken:
        b = fit_broken_power_law(spec, *broken, v["bins_per_decade"])
        lines.append(
            f"broken [{broken[0]:g}, {broken[1]:g}]: beta_low={b.low.exponent:.6g} "
            f"beta_high={b.high.exponent:.6g} crossover={b.crossover:.6g}"
        )
    try:
        lines.append(f"hill tail exponent (top {v['hill_fraction']:g}): "
                     f"{hill_tail_exponent(pooled, v['hill_fraction']):.6g}")
    except ValueError as exc:
        lines.append(f"hill tail exponent: n/a ({exc})")

    psd_path = Path(f"{prefix}_psd.csv")
    pdf_path = Path(f"{prefix}_pdf.csv")
    report = Path(f"{prefix}_report.txt")
    write_series(psd_path, psd_cols)
    write_series(pdf_path, pdf_cols)
    report.write_text("\n".join(lines) + "\n")
    values = {**v, "output": str(prefix)}
    return [psd_path, pdf_path, report, _write_manifest(prefix, "analyze", values)]


# -- ingest -------------------------------------------------------------------------


def cmd_ingest(v: dict) -> list[Path]:
    if not v["input"]:
        raise ValidationError("--input is required")
    if not v["bar"] > 0:
        raise ValidationError("--bar must be > 0")
    if v["decompose"] and (v["ma_window"] < 2 or v["ma_window"] % 2):
        raise ValidationError("--ma-window must be an even count >= 2")
    if v["decompose"] and not v["lambda2"] > 1:
        raise ValidationError("--lambda2 must be > 1")
    t, p = read_ticks(v["input"])
    try:
        returns, activity = aggregate_ticks(t, p, v["bar"])
    except ValueError as exc:
        raise ValidationError(f"{v['input']}: {exc}") from exc
    out = _output_path(v["output"], "bars.csv")
    paths = []
    times = returns.meta["start"] + returns.times
    table = None
    if v["decompose"]:
        r = normalize_returns(returns) if v["normalize"] else returns
        bins = decompose_empirical(r, v["ma_window"], v["lambda2"], v["ma_bins"],
                                   min_count=v["min_count"])
        table = bins
    write_series(out, {"t": times, "r": returns.values, "N": activity.values})
    paths.append(out)
    if table is not None:
        dpath = out.with_name(out.stem + "_decomp.csv")
        write_series(dpath, {
            "ma_lo": [b.ma_lo for b in table], "ma_hi": [b.ma_hi for b in table],
            "ma": [b.ma_center for b in table], "r0": [b.r0 for b in table],
            "count": [b.count for b in table],
            "underpopulated": [float(b.underpopulated) for b in table],
        })
        paths.append(dpath)
        lines = [f"qsde {__version__} ingest", f"bars: {len(returns)}  ticks: {t.size}"]
        try:
            c0, c1 = fit_modulation(table)
            lines.append(f"r0(|MA|) = {c0:.6g} + {c1:.6g} |MA|")
        except ValueError as exc:
            lines.append(f"modulation fit: n/a ({exc})")
        rpath = out.with_name(out.stem + "_report.txt")
        rpath.write_text("\n".join(lines) + "\n")
        paths.append(rpath)
    paths.append(_write_manifest(out, "ingest", {**v, "output": str(out)}))
    return paths


HANDLERS = {"simulate": cmd_simulate, "returns": cmd_returns, "analyze": cmd_analyze, "ingest": cmd_ingest}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config = args.pop("config", None)
    try:
        values = resolve(command, args, config)
        paths = HANDLERS[command](values)
    except (ValidationError, DomainError) as exc:
        print(f"qsde {command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (InputError, OSError) as exc:
        print(f"qsde {command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DivergenceError, ArithmeticError, ValueError) as exc:
        print(f"qsde {command}: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
