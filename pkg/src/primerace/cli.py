"""Command-line front end.

    primerace zeros compute --modulus 4 --height 100 --out zeros.txt
    primerace delta estimate --q 24 --race 5,1 --zeros zeros24.txt --samples 10000000 --seed 1
    primerace bias verify --synthetic --n 8 --k 2 --xi -0.3 --samples 10000000 --seed 1

Reports are JSON (stdout unless ``--report``) with sorted keys and floats at 12
significant digits.  ``--threads`` changes only the execution, never the
numbers, and is left out of the report so reruns compare byte for byte.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 hypothesis
violation under ``--strict``.
"""
from __future__ import annotations

import argparse
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .errors import (ConfigError, DimensionTooLarge, HypothesisWarning, Inadmissible,
                     InsufficientPrimes, MissingCharacter, NotPositiveDefinite, OrderError,
                     ParseError, PreconditionViolation, ZeroCountMismatch)
from .report import FORMATS, write_report

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_HYPOTHESIS = 0, 2, 3, 4
DATA_ERRORS = (MissingCharacter, ParseError, OrderError, InsufficientPrimes, ZeroCountMismatch,
               NotPositiveDefinite, FileNotFoundError)
CONFIG_ERRORS = (ConfigError, PreconditionViolation, Inadmissible, DimensionTooLarge, ValueError)
# run options that do not affect results
_EXECUTION = {"threads", "report", "format", "config", "func", "strict", "needs_zeros", "needs_samples"}


@dataclass
class RunConfig:
    command: str
    params: dict
    constants: dict = field(default_factory=dict)
    report: str | None = None
    fmt: str = "json"
    threads: int = 1
    strict: bool = False
    handler: object = field(default=None, repr=False)
    needs_zeros: bool = False

    def validate(self) -> None:
        if self.fmt not in FORMATS:
            raise ConfigError(f"unknown format {self.fmt!r}")
        if self.threads < 1:
            raise ConfigError("--threads must be at least 1")
        for key in ("samples", "n", "height", "q", "modulus"):
            v = self.params.get(key)
            if v is not None and not v > 0:
                raise ConfigError(f"--{key} must be positive")
        if self.needs_zeros:
            have = [self.params.get("zeros") is not None, self.params.get("height") is not None]
            if sum(have) != 1:
                raise ConfigError("give exactly one zero source: --zeros FILE or --height T")


# ---------------------------------------------------------------- helpers

def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.replace(" ", "").split(",") if t)
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _pairs(text: str | None):
    if not text:
        return None
    out = []
    for item in text.split(";"):
        a = _ints(item)
        if len(a) != 2:
            raise ConfigError(f"pair {item!r} must be i,j")
        out.append(a)
    return out


def _constants(items) -> dict:
    out = {}
    for it in items or []:
        key, sep, val = it.partition("=")
        if not sep:
            raise ConfigError(f"--const expects NAME=VALUE, got {it!r}")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise ConfigError(f"constant {key!r} is not a number") from None
    return out


def _repo(cfg: RunConfig, q) -> tuple[object, dict]:
    from .zeros import compute_repository, data_hash, load_zeros
    p = cfg.params
    if p.get("zeros") is not None:
        repo = load_zeros(p["zeros"])
        info = {"source": "file", "path": Path(p["zeros"]).name, "sha256": repo.content_hash}
    else:
        repo = compute_repository(q, float(p["height"]))
        info = {"source": "computed", "height": float(p["height"])}
    if p.get("truncate") is not None:
        repo = repo.truncated(float(p["truncate"]))
        info["truncated_at"] = float(p["truncate"])
    info["data_sha256"] = data_hash(repo)
    return repo, info


def _race(p: dict):
    from .residues import RaceTuple, build_race_tuple
    q = int(p["q"])
    if p.get("race"):
        return RaceTuple.custom(q, _ints(p["race"]))
    if p.get("n") is None or p.get("k") is None:
        raise ConfigError("give --race a,b,... or --n and --k")
    return build_race_tuple(q, int(p["n"]), int(p["k"]), strict=not p.get("lenient", False))


def _spec(p: dict, n: int):
    from .model import make_ordering
    return make_ordering(p.get("ordering") or "full_chain", n, p.get("k_order"), _pairs(p.get("pairs")))


# ---------------------------------------------------------------- commands

def cmd_zeros_compute(cfg: RunConfig) -> dict:
    from .zeros import compute_repository, data_hash, write_zeros
    p = cfg.params
    repo = compute_repository(int(p["modulus"]), float(p["height"]), step=p["step"])
    out = {"modulus": int(p["modulus"]), "height": float(p["height"]),
           "characters": [{"label": list(z.label), "count": z.count,
                           "first": float(z.ordinates[0]) if z.count else None}
                          for z in repo.sets()],
           "data_sha256": data_hash(repo)}
    if p.get("out"):
        write_zeros(repo, p["out"])
        out["file"] = Path(p["out"]).name
    return out


def cmd_zeros_import(cfg: RunConfig) -> dict:
    from .zeros import data_hash, load_zeros, write_zeros
    p = cfg.params
    repo = load_zeros(p["file"])
    out = {"file": Path(p["file"]).name, "sha256": repo.content_hash, "data_sha256": data_hash(repo),
           "characters": [{"label": list(z.label), "count": z.count, "height": z.height}
                          for z in repo.sets()]}
    if p.get("out"):
        write_zeros(repo, p["out"])
        out["canonical_file"] = Path(p["out"]).name
    return out


def cmd_race_build(cfg: RunConfig) -> dict:
    from .residues import race_tuple_bound
    race = _race(cfg.params)
    return {"race": race.to_dict(), "size_bound": race_tuple_bound(race.q)}


def cmd_cov_inspect(cfg: RunConfig) -> dict:
    from .covariance import covariance_model_exact, perturbation_check
    race = _race(cfg.params)
    repo, info = _repo(cfg, race.q)
    model = covariance_model_exact(race, repo, cfg.constants.get("density_scale", 1.0))
    pc = perturbation_check(model, cfg.constants.get("c1", 1.0))
    return {"zeros": info, "model": model.to_dict(), "perturbation": pc.to_dict()}


def cmd_delta_estimate(cfg: RunConfig) -> dict:
    from .model import ExactSampler, estimate_ordering
    p = cfg.params
    race = _race(p)
    repo, info = _repo(cfg, race.q)
    spec = _spec(p, race.n)
    sampler = ExactSampler(race, repo, exact_height=p.get("exact_height"), center=p.get("center", False))
    est = estimate_ordering(sampler, spec, int(p["samples"]), int(p["seed"]), cfg.threads)
    return {"zeros": info, "race": race.to_dict(), "ordering": spec.to_dict(), "estimate": est,
            "var_q": sampler.var, "var_q_tail_estimate": sampler.var_tail,
            "exact_zeros_per_sample": sampler.n_exact}


def cmd_approx_sandwich(cfg: RunConfig) -> dict:
    from .gaussapprox import ordering_probability_bounds
    p = cfg.params
    race = _race(p)
    repo, info = _repo(cfg, race.q)
    spec = _spec(p, race.n)
    lo, hi, diag = ordering_probability_bounds(
        race, repo, spec, p.get("delta"), int(p["samples"]), int(p["seed"]),
        band_constant=cfg.constants.get("band", 1.0), with_exact=p.get("with_exact", False),
        exact_height=p.get("exact_height"), centered=not p.get("shifted", False), threads=cfg.threads)
    return {"zeros": info, "race": race.to_dict(), "ordering": spec.to_dict(),
            "lower": lo, "upper": hi, "diagnostics": diag.to_dict()}


def cmd_approx_lindeberg(cfg: RunConfig) -> dict:
    from .gaussapprox import SummandFamily, lindeberg_compare
    from .model import make_ordering
    from .smooth import SmoothTestParams
    p = cfg.params
    laws = tuple(s.strip() for s in p["laws"].split(",") if s.strip())
    spec = _spec(p, len(laws)) if p.get("ordering") else make_ordering("full_chain", len(laws))
    params = SmoothTestParams(float(p["delta"]), spec, 1 if p.get("sign", "+") == "+" else -1)
    rows = []
    for m in _ints(p["m"]):
        r = lindeberg_compare(SummandFamily(m, laws), params, p.get("eps"), int(p["samples"]),
                              int(p["seed"]), budget_constant=cfg.constants.get("budget", 1.0),
                              threads=cfg.threads)
        rows.append(r.to_dict())
    return {"laws": list(laws), "ordering": spec.to_dict(), "runs": rows}


def cmd_bias_verify(cfg: RunConfig) -> dict:
    from .covariance import covariance_model_synthetic
    from .density import DensityModel, bias_factor, bias_verify, ordering_quadrature
    from .model import make_ordering
    p = cfg.params
    if not p.get("synthetic"):
        raise ConfigError("bias verify currently runs on synthetic block models; pass --synthetic")
    n, k, xi = int(p["n"]), int(p["k"]), float(p["xi"])
    out = {"n": n, "k": k, "xi": xi}
    rows = []
    if p.get("samples"):
        for b in bias_verify(n, k, xi, int(p["samples"]), int(p["seed"]), cfg.threads):
            rows.append({"kind": b.kind, "xi": xi, "predicted_factor": b.predicted_factor,
                         "measured_ratio": b.ratio, "sigma": b.combined_sd, "z": b.z,
                         "estimate": b.estimate, "baseline": b.baseline,
                         "exact_baseline": b.exact_baseline})
        out["monte_carlo"] = rows
        out["opposite_directions"] = bool(len(rows) == 2 and rows[0]["z"] < -3 and rows[1]["z"] > 3)
    if p.get("quadrature"):
        quad = []
        for kind in ("S_2k", "S_2k_sharp"):
            spec = make_ordering(kind, n, k)
            a = ordering_quadrature(DensityModel(covariance_model_synthetic(n, k, xi)), spec)
            b = ordering_quadrature(DensityModel(covariance_model_synthetic(n, k, 0.0)), spec)
            quad.append({"kind": kind, "ratio": a / b, "value": a, "baseline": b})
        out["quadrature"] = quad
    if xi != 0:
        lq = math.log(2) / abs(xi)
        out["asymptotic_factors"] = {"log_q": lq, "S_2k_upper": bias_factor(lq, n, k, -1),
                                  "S_2k_sharp_lower": bias_factor(lq, n, k, +1)}
    return out


def cmd_empirical_race(cfg: RunConfig):
    from .empirical import LABEL, race_trajectory
    p = cfg.params
    tup = _ints(p["race"])
    spec = _spec(p, len(tup))
    tr = race_trajectory(int(p["q"]), tup, spec, float(p["x_min"]), float(p["x_max"]), int(p["M"]),
                         threads=cfg.threads)
    if cfg.fmt == "csv":
        return tr
    ties = tr.log_measure(tr.ties)
    return {"label": LABEL, "q": tr.q, "race": list(tr.contestants), "ordering": spec.to_dict(),
            "x_min": float(tr.x[0]), "x_max": float(tr.x[-1]), "M": int(tr.x.size),
            "log_density": tr.density, "reversed_log_density": tr.log_measure(spec.reversed().contains(tr.E)),
            "tie_measure": ties, "final_E": tr.E[-1]}


def cmd_oracle_quadrature(cfg: RunConfig) -> dict:
    from .covariance import covariance_model_synthetic
    from .density import DensityModel, ordering_quadrature
    from .model import GaussianSampler, estimate_ordering
    p = cfg.params
    n, k = int(p["n"]), int(p.get("block_k") or 0)
    model = covariance_model_synthetic(n, k, float(p["xi"]))
    spec = _spec(p, n)
    v = ordering_quadrature(DensityModel(model), spec)
    out = {"n": n, "k": k, "xi": float(p["xi"]), "ordering": spec.to_dict(), "quadrature": v}
    if p.get("samples"):
        est = estimate_ordering(GaussianSampler(model), spec, int(p["samples"]), int(p["seed"]), cfg.threads)
        out["monte_carlo"] = est
        out["agree"] = bool(abs(est.estimate - v) <= 3 * est.stderr + 1e-5)
    return out


# ---------------------------------------------------------------- parser

def _common(sp, zeros: bool = False, samples: bool = False):
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--strict", action="store_true", help="exit 4 on any hypothesis violation")
    sp.add_argument("--report", help="write the report here instead of stdout")
    sp.add_argument("--format", default="json", help="json | csv (csv for trajectories only)")
    sp.add_argument("--const", action="append", metavar="NAME=VALUE", help="override a constant")
    sp.add_argument("--config", help="key=value file merged under the flags")
    if zeros:
        sp.add_argument("--zeros", help="zero file (text or .gz)")
        sp.add_argument("--height", type=float, help="compute zeros up to this height")
        sp.add_argument("--truncate", type=float, help="use only ordinates up to this height")
    if samples:
        sp.add_argument("--samples", type=int)
        sp.add_argument("--seed", type=int, default=0)


def _race_args(sp):
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--race", help="comma-separated residues")
    sp.add_argument("--n", type=int)
    sp.add_argument("--k", type=int)
    sp.add_argument("--lenient", action="store_true", help="allow n beyond the tuple-size hypothesis")


def _ordering_args(sp):
    sp.add_argument("--ordering", default="full_chain",
                    help="full_chain | top_chain_k | S_2k | S_2k_sharp | custom")
    sp.add_argument("--order-k", dest="k_order", type=int, help="k of the ordering set")
    sp.add_argument("--pairs", help="custom pairs 'i,j;i,j' (1-based, i above j)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="primerace", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    top = ap.add_subparsers(dest="group", required=True)

    z = top.add_parser("zeros").add_subparsers(dest="action", required=True)
    s = z.add_parser("compute")
    s.add_argument("--modulus", type=int, required=True)
    s.add_argument("--height", type=float, required=True)
    s.add_argument("--step", type=float, default=0.05)
    s.add_argument("--out")
    _common(s)
    s.set_defaults(func=cmd_zeros_compute)
    s = z.add_parser("import")
    s.add_argument("--file", required=True)
    s.add_argument("--out", help="rewrite in canonical form")
    _common(s)
    s.set_defaults(func=cmd_zeros_import)

    s = top.add_parser("race").add_subparsers(dest="action", required=True).add_parser("build")
    _race_args(s)
    _common(s)
    s.set_defaults(func=cmd_race_build)

    s = top.add_parser("cov").add_subparsers(dest="action", required=True).add_parser("inspect")
    _race_args(s)
    _common(s, zeros=True)
    s.set_defaults(func=cmd_cov_inspect, needs_zeros=True)

    s = top.add_parser("delta").add_subparsers(dest="action", required=True).add_parser("estimate")
    _race_args(s)
    _ordering_args(s)
    _common(s, zeros=True, samples=True)
    s.add_argument("--exact-height", type=float,
                   help="phase zeros one by one up to here, Gaussian aggregate above")
    s.add_argument("--center", action="store_true", help="drop the mean shifts")
    s.set_defaults(func=cmd_delta_estimate, needs_zeros=True, needs_samples=True)

    a = top.add_parser("approx").add_subparsers(dest="action", required=True)
    s = a.add_parser("sandwich")
    _race_args(s)
    _ordering_args(s)
    _common(s, zeros=True, samples=True)
    s.add_argument("--delta", type=float)
    s.add_argument("--with-exact", action="store_true")
    s.add_argument("--exact-height", type=float)
    s.add_argument("--shifted", action="store_true", help="keep the mean shifts in the exact draws")
    s.set_defaults(func=cmd_approx_sandwich, needs_zeros=True, needs_samples=True)
    s = a.add_parser("lindeberg")
    s.add_argument("--m", required=True, help="comma-separated summand counts")
    s.add_argument("--laws", default="bernoulli:0.1,bernoulli:0.3")
    s.add_argument("--delta", type=float, default=0.1)
    s.add_argument("--eps", type=float)
    s.add_argument("--sign", default="+", choices=["+", "-"])
    _ordering_args(s)
    _common(s, samples=True)
    s.set_defaults(func=cmd_approx_lindeberg, needs_samples=True)

    s = top.add_parser("bias").add_subparsers(dest="action", required=True).add_parser("verify")
    s.add_argument("--synthetic", action="store_true")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--xi", type=float, required=True)
    s.add_argument("--quadrature", action="store_true", help="also compare by quadrature (n <= 4)")
    _common(s, samples=True)
    s.set_defaults(func=cmd_bias_verify)

    s = top.add_parser("empirical").add_subparsers(dest="action", required=True).add_parser("race")
    s.add_argument("--q", type=int, required=True)
    s.add_argument("--race", required=True)
    s.add_argument("--x-min", type=float, default=1e3)
    s.add_argument("--x-max", type=float, default=1e6)
    s.add_argument("--M", type=int, default=10**4)
    _ordering_args(s)
    _common(s)
    s.set_defaults(func=cmd_empirical_race)

    s = top.add_parser("oracle").add_subparsers(dest="action", required=True).add_parser("quadrature")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--block-k", type=int, default=0, help="number of correlated pairs")
    s.add_argument("--xi", type=float, default=0.0)
    _ordering_args(s)
    _common(s, samples=True)
    s.set_defaults(func=cmd_oracle_quadrature)
    return ap


def _config_tokens(path: str) -> list[str]:
    toks = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"config line {line!r} is not key=value")
        flag = "--" + key.strip().replace("_", "-")
        val = val.strip()
        if val.lower() in ("true", "yes"):
            toks.append(flag)
        elif val.lower() in ("false", "no"):
            continue
        else:
            toks += [flag, val]
    return toks


def _parse(argv: list[str]) -> argparse.Namespace:
    ap = build_parser()
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv) or tok.startswith("--config="):
            path = argv[i + 1] if tok == "--config" else tok.partition("=")[2]
            # file values go first so explicit flags override them
            argv = argv[:2] + _config_tokens(path) + argv[2:]
            break
    return ap.parse_args(argv)


def make_config(args: argparse.Namespace) -> RunConfig:
    d = vars(args)
    params = {k: v for k, v in d.items() if k not in _EXECUTION and k not in ("group", "action", "const")}
    cfg = RunConfig(f"{args.group} {args.action}", params, _constants(d.get("const")), d.get("report"),
                    d.get("format", "json"), d.get("threads", 1), d.get("strict", False),
                    d.get("func"), d.get("needs_zeros", False))
    cfg.validate()
    if d.get("needs_samples") and not params.get("samples"):
        raise ConfigError("--samples is required")
    return cfg


def run(cfg: RunConfig) -> tuple[int, str]:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", HypothesisWarning)
        result = cfg.handler(cfg)
    hyp = sorted({str(w.message) for w in caught if issubclass(w.category, HypothesisWarning)})
    if cfg.fmt == "csv":
        text = write_report(result, "csv", cfg.report)
    else:
        body = {"command": cfg.command, "version": __version__, "parameters": cfg.params,
                "constants": cfg.constants, "hypothesis_warnings": hyp, "result": result}
        text = write_report(body, "json", cfg.report)
    status = EXIT_HYPOTHESIS if (cfg.strict and hyp) else EXIT_OK
    return status, text


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
    except SystemExit as e:
        return int(e.code or 0) and EXIT_CONFIG
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = make_config(args)
        status, text = run(cfg)
    except DATA_ERRORS as e:
        print(f"data error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DATA
    except CONFIG_ERRORS as e:
        print(f"config error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.report is None:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
