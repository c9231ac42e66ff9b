"""``kme-lab`` command-line interface.

Every run writes its JSON/CSV outputs plus a ``manifest.json`` into ``--out``.
Options may come from flags or from ``--config`` (a JSON object keyed by flag
names, or a previous manifest); flags win.  Exit codes: 0 success, 2 usage or
configuration error, 3 numeric or construction failure.
"""

import argparse
import ast
import datetime
import hashlib
import json
import math
import operator
import os
import sys
from importlib import metadata, resources

import numpy as np

from . import bounds as B
from .errors import (
    ArgumentError,
    ConstructionError,
    IntegrationError,
    InternalConsistencyError,
    KmeLabError,
    PreconditionError,
    ReplicateError,
    UnsupportedCaseError,
)
from .estimator import RateExperimentConfig, hoeffding_bound, resolve_jobs, run_rate_experiment
from .geometry import IsotropicGaussian, TwoPointDiscrete, l2_gauss_dist2, rkhs_gauss_dist2
from .kernels import kernel_constants, kernel_from_spec, kernel_to_spec, moment_condition
from .lecam import build_hard_family_thm8, minimax_stress, verify_hard_family
from .oracles import bochner_rkhs_oracle, l2_dist_oracle

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
RKHS_THEOREMS = ("thm1", "cor2", "thm6", "thm8", "thmE1")
L2_THEOREMS = ("thm9", "cor10", "thm12", "thm13")
ALL_THEOREMS = RKHS_THEOREMS + L2_THEOREMS

DEFAULTS = {
    "common": {"out": ".", "seed": 0, "jobs": None},
    "kernel": {"kernel": None, "eta": None, "betas": None, "etas": None, "c": None, "gamma": None, "tau": None},
    "rate": {"d": None, "target": "gaussian", "sigma2": 1.0, "mu": None, "x": None, "v": None, "p": 0.5,
             "n": None, "reps": 200, "norm": "rkhs"},
    "bounds": {"d": "1", "n": "100", "theorems": ",".join(ALL_THEOREMS), "sigma2": 1.0},
    "verify": {"d": "1,2,3", "families": "gaussian,gaussian_mixture,inverse_multiquadric,matern",
               "norms": "rkhs,l2", "sigma2": "0.5,1", "pairs": 20, "tol": 1e-6, "perturb": 0.0},
    "lecam": {"d": None, "n": None, "norm": "rkhs", "stress": 0, "alternate": False},
    "constants": {"d": "1"},
}


class UsageError(Exception):
    pass


# -- parsing helpers -------------------------------------------------------

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
        ast.Pow: operator.pow, ast.USub: operator.neg, ast.UAdd: operator.pos}


def eval_param(text, d):
    """Evaluate a numeric parameter that may reference the dimension, e.g. ``d/2+1.5``."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "d":
            return float(d)
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise UsageError(f"unsupported expression {text!r}")
    try:
        return ev(ast.parse(str(text), mode="eval"))
    except SyntaxError:
        raise UsageError(f"cannot parse numeric value {text!r}") from None


def parse_int_list(text, name):
    """``"3"``, ``"1,2,3"``, ``"1..5"`` or ``"64,128,...,8192"`` (geometric when the ratio is an integer >= 2)."""
    if isinstance(text, int) and not isinstance(text, bool):
        return [text]
    if isinstance(text, list):
        return [int(v) for v in text]
    s = str(text).replace(" ", "")
    try:
        if ".." in s and "..." not in s:
            a, b = s.split("..")
            return list(range(int(a), int(b) + 1))
        parts = s.split(",")
        if "..." in parts:
            if len(parts) != 4 or parts[2] != "...":
                raise UsageError(f"{name}: ellipsis form must be 'a,b,...,z'")
            a, b, z = int(parts[0]), int(parts[1]), int(parts[3])
            if a > 1 and b % a == 0 and b // a >= 2:
                out = [a]
                while out[-1] < z:
                    out.append(out[-1] * (b // a))
            else:
                out = list(range(a, z + 1, b - a)) if b > a else []
            if not out or out[-1] != z:
                raise UsageError(f"{name}: sequence {s!r} does not reach its last term")
            return out
        return [int(p) for p in parts]
    except ValueError:
        raise UsageError(f"{name}: cannot parse integer list {text!r}") from None


def parse_float_list(text, name):
    if text is None:
        return None
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return [float(text)]
    if isinstance(text, list):
        return [float(v) for v in text]
    try:
        return [float(p) for p in str(text).split(",") if p]
    except ValueError:
        raise UsageError(f"{name}: cannot parse number list {text!r}") from None


def kernel_spec_from(opts, d):
    fam = opts.get("kernel")
    if fam is None:
        raise UsageError("missing --kernel")
    fam = {"mixture": "gaussian_mixture", "imq": "inverse_multiquadric"}.get(fam, fam)

    def need(key):
        if opts.get(key) is None:
            raise UsageError(f"kernel {fam} needs --{key}")
        return opts[key]
    if fam == "gaussian":
        params = {"eta": eval_param(need("eta"), d)}
    elif fam == "gaussian_mixture":
        params = {"betas": parse_float_list(need("betas"), "betas"), "etas": parse_float_list(need("etas"), "etas")}
    elif fam == "inverse_multiquadric":
        params = {"c": eval_param(need("c"), d), "gamma": eval_param(need("gamma"), d)}
    elif fam == "matern":
        params = {"c": eval_param(need("c"), d), "tau": eval_param(need("tau"), d)}
    else:
        raise UsageError(f"unknown kernel family {fam!r}")
    return {"family": fam, "d": int(d), "params": params}


def build_kernel(opts, d):
    if isinstance(d, bool) or int(d) < 1:
        raise UsageError(f"dimension must be >= 1, got {d}")
    try:
        return kernel_from_spec(kernel_spec_from(opts, d))
    except ArgumentError as exc:
        raise UsageError(str(exc)) from None


def _single_d(opts):
    if opts.get("d") is None:
        raise UsageError("missing --d")
    ds = parse_int_list(opts["d"], "d")
    if len(ds) != 1:
        raise UsageError("--d must be a single dimension here")
    if ds[0] < 1:
        raise UsageError(f"dimension must be >= 1, got {ds[0]}")
    return ds[0]


def _clean(obj):
    """JSON-safe copy with non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


# -- output ----------------------------------------------------------------

def load_schema(name):
    return json.loads(resources.files("kme_lab").joinpath("schemas", f"{name}.json").read_text())


def validate(doc, schema_name):
    import jsonschema

    jsonschema.validate(doc, load_schema(schema_name))


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0.1.0"


class Writer:
    def __init__(self, out_dir):
        self.out = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.files = []

    def text(self, name, content):
        path = os.path.join(self.out, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(content)
        self.files.append({"path": name, "sha256": hashlib.sha256(content.encode()).hexdigest()})
        return path

    def json(self, name, doc, schema=None):
        doc = _clean(doc)
        if schema is not None:
            validate(doc, schema)
        return self.text(name, json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def manifest(self, subcommand, params, kernel_spec=None):
        doc = {"subcommand": subcommand, "parameters": _clean(params), "kernel": kernel_spec,
               "seed": params.get("seed"), "version": _version(),
               "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
               "outputs": self.files}
        validate(_clean(doc), "manifest")
        path = os.path.join(self.out, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(_clean(doc), fh, indent=2, sort_keys=True)
            fh.write("\n")


# -- subcommands -----------------------------------------------------------

def cmd_rate(opts, jobs):
    d = _single_d(opts)
    kernel = build_kernel(opts, d)
    if opts.get("n") is None:
        raise UsageError("missing --n")
    ns = parse_int_list(opts["n"], "n")
    target_kind = opts["target"]
    try:
        if target_kind == "gaussian":
            mu = parse_float_list(opts.get("mu"), "mu") or [0.0] * d
            target = IsotropicGaussian(np.array(mu), float(opts["sigma2"]))
        elif target_kind == "two_point":
            x = parse_float_list(opts.get("x"), "x")
            v = parse_float_list(opts.get("v"), "v")
            if x is None or v is None:
                raise UsageError("two_point target needs --x and --v")
            target = TwoPointDiscrete(np.array(x), np.array(v), float(opts["p"]))
        else:
            raise UsageError(f"unknown target {target_kind!r}")
        config = RateExperimentConfig(kernel, target, tuple(ns), int(opts["reps"]), opts["norm"], int(opts["seed"]))
    except ArgumentError as exc:
        raise UsageError(str(exc)) from None
    except PreconditionError as exc:
        raise UsageError(str(exc)) from None
    report = run_rate_experiment(config, jobs)
    w = Writer(opts["out"])
    doc = report.to_dict()
    doc["kernel"] = kernel_to_spec(kernel)
    w.json("rate_report.json", doc, "rate")
    w.text("errors.csv", report.to_csv())
    w.manifest("rate", opts, kernel_to_spec(kernel))
    slope = "absent" if report.slope is None else f"{report.slope:.4f}"
    print(f"rate: slope {slope}, ci {report.slope_ci}, seed {config.seed}")
    return EXIT_OK


def _theorem_row(theorem, kernel, d, n, sigma2, cache):
    norm = "rkhs" if theorem in RKHS_THEOREMS else "l2"
    row = {"theorem": theorem, "d": d, "n": n, "norm": norm}
    try:
        if theorem == "thm1":
            _, beta = B.find_z_beta(kernel)
            rep = B.bound_thm1(beta, n)
        elif theorem == "cor2":
            rep = B.bound_cor2(B.alpha_for(kernel)[1], n)
        elif theorem == "thm8":
            rep = B.bound_thm8(kernel, d, n)
        elif theorem == "thmE1":
            rep = B.bound_thmE1(kernel, d, n)
        elif theorem == "thm9":
            z2, _ = B.find_z_beta(kernel)
            rep = B.bound_thm9(kernel, z2, n)
        elif theorem == "cor10":
            rep = B.bound_cor10(kernel, d, n)
        elif theorem == "thm13":
            rep = B.bound_thm13(kernel, d, n)
        elif theorem in ("thm6", "thm12"):
            mode = "rkhs" if theorem == "thm6" else "l2"
            if d > 4:
                row.update(status="not_applicable", message="strong-convexity search supports d <= 4")
                return row
            if mode == "l2" and not moment_condition(kernel):
                B.require_moment_condition(kernel)
            key = (d, mode)
            if key not in cache:
                cache[key] = B.estimate_cpsi_eps(kernel, sigma2, d, mode)
            est = cache[key]
            fn = B.bound_thm6 if mode == "rkhs" else B.bound_thm12
            rep = fn(est.c_psi, est.eps_psi, n)
            rep.inputs.update({"sigma2": sigma2, "kernel": kernel.label, "d": d})
        else:
            raise UsageError(f"unknown theorem {theorem!r}")
    except PreconditionError as exc:
        row.update(status="precondition_failed", message=str(exc))
        return row
    row.update(status="ok" if rep.applicable else "precondition_failed", report=rep.to_dict(), s_lower=rep.s)
    consts = kernel_constants(kernel)
    ck = consts.C_k_rkhs if norm == "rkhs" else consts.C_k_l2
    if ck is not None:
        row["upper_bound"] = hoeffding_bound(ck, n, 0.5)
    return row


def cmd_bounds(opts, jobs):
    ds = parse_int_list(opts["d"], "d")
    ns = parse_int_list(opts["n"], "n")
    theorems = [t.strip() for t in str(opts["theorems"]).split(",") if t.strip()]
    bad = [t for t in theorems if t not in ALL_THEOREMS]
    if bad:
        raise UsageError(f"unknown theorem ids {bad}")
    if any(n < 1 for n in ns):
        raise UsageError("sample sizes must be >= 1")
    rows = []
    specs = []
    for d in ds:
        kernel = build_kernel(opts, d)
        specs.append(kernel_to_spec(kernel))
        cache = {}
        for n in ns:
            for t in theorems:
                rows.append(_theorem_row(t, kernel, d, n, float(opts["sigma2"]), cache))
    w = Writer(opts["out"])
    w.json("bounds.json", {"kernels": specs, "rows": rows}, "bounds")
    w.manifest("bounds", opts, specs[0] if len(specs) == 1 else None)
    ok = sum(r["status"] == "ok" for r in rows)
    print(f"bounds: {len(rows)} cells, {ok} with all preconditions met")
    return EXIT_OK


VERIFY_FAMILIES = {
    "gaussian": lambda d: {"family": "gaussian", "d": d, "params": {"eta": 1.0}},
    "gaussian_mixture": lambda d: {"family": "gaussian_mixture", "d": d,
                                   "params": {"betas": [0.6, 0.4], "etas": [1.5, 0.7]}},
    "inverse_multiquadric": lambda d: {"family": "inverse_multiquadric", "d": d, "params": {"c": 1.0, "gamma": 2.0}},
    "matern": lambda d: {"family": "matern", "d": d, "params": {"c": 1.0, "tau": d / 2.0 + 1.5}},
}


def verify_pairs(d, count, seed):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, d])))
    return [(rng.normal(size=d), rng.normal(size=d)) for _ in range(count)]


def cmd_verify(opts, jobs):
    ds = parse_int_list(opts["d"], "d")
    fams = [f.strip() for f in str(opts["families"]).split(",") if f.strip()]
    norms = [f.strip() for f in str(opts["norms"]).split(",") if f.strip()]
    s2s = parse_float_list(opts["sigma2"], "sigma2")
    tol = float(opts["tol"])
    perturb = float(opts["perturb"])
    pairs = int(opts["pairs"])
    for f in fams:
        if f not in VERIFY_FAMILIES:
            raise UsageError(f"unknown family {f!r}")
    for nm in norms:
        if nm not in ("rkhs", "l2"):
            raise UsageError(f"unknown norm {nm!r}")
    if any(d < 1 or d > 3 for d in ds):
        raise UsageError("verify sweeps support d in 1..3")
    if tol <= 0 or pairs < 1:
        raise UsageError("tol and pairs must be positive")
    checks = []
    for fam in fams:
        for d in ds:
            kernel = kernel_from_spec(VERIFY_FAMILIES[fam](d))
            for nm in norms:
                closed_fn = rkhs_gauss_dist2 if nm == "rkhs" else l2_gauss_dist2
                oracle_fn = bochner_rkhs_oracle if nm == "rkhs" else l2_dist_oracle
                for s2 in s2s:
                    for i, (m0, m1) in enumerate(verify_pairs(d, pairs, int(opts["seed"]))):
                        g0, g1 = IsotropicGaussian(m0, s2), IsotropicGaussian(m1, s2)
                        closed = closed_fn(kernel, g0, g1) * (1.0 + perturb)
                        orc = oracle_fn(kernel, g0, g1)
                        err = abs(closed - orc.value)
                        allowed = tol * (1.0 + abs(orc.value))
                        checks.append({"family": fam, "norm": nm, "d": d, "sigma2": s2, "pair": i,
                                       "closed_form": closed, "oracle": orc.value,
                                       "oracle_error": orc.error_estimate, "abs_error": err,
                                       "allowed": allowed, "pass": bool(err <= allowed)})
    all_pass = all(c["pass"] for c in checks)
    w = Writer(opts["out"])
    w.json("verify.json", {"tolerance": tol, "perturbation": perturb, "checks": checks, "all_pass": all_pass,
                           "worst_ratio": max(c["abs_error"] / c["allowed"] for c in checks)}, "verify")
    w.manifest("verify", opts)
    fails = sum(not c["pass"] for c in checks)
    print(f"verify: {len(checks)} checks, {fails} failures, tolerance {tol:g}")
    return EXIT_OK if all_pass else EXIT_NUMERIC


def cmd_lecam(opts, jobs):
    d = _single_d(opts)
    if opts.get("n") is None:
        raise UsageError("missing --n")
    n = int(opts["n"])
    if n < 1:
        raise UsageError("n must be >= 1")
    if opts["norm"] not in ("rkhs", "l2"):
        raise UsageError(f"unknown norm {opts['norm']!r}")
    kernel = build_kernel(opts, d)
    try:
        family = build_hard_family_thm8(kernel, d, n, opts["norm"])
    except PreconditionError as exc:
        raise UsageError(str(exc)) from None
    report = verify_hard_family(family, check_alternate=bool(opts.get("alternate")))
    doc = {"family": family.to_dict(), "conditions": report.to_dict(), "stress": None}
    reps = int(opts["stress"])
    if reps < 0:
        raise UsageError("--stress must be >= 0")
    if reps > 0:
        doc["stress"] = minimax_stress("empirical", family, reps, int(opts["seed"]), jobs)
    w = Writer(opts["out"])
    w.json("lecam.json", doc, "lecam")
    w.manifest("lecam", opts, kernel_to_spec(kernel))
    msg = f"lecam: M={family.M}, conditions {'pass' if report.all_pass else 'FAIL'}"
    if doc["stress"]:
        msg += f", worst exceedance {doc['stress']['worst_frequency']:.3f}"
    print(msg)
    return EXIT_OK if report.all_pass else EXIT_NUMERIC


def cmd_constants(opts, jobs):
    ds = parse_int_list(opts["d"], "d")
    tables = []
    for d in ds:
        kernel = build_kernel(opts, d)
        try:
            rows = B.constants_table(kernel)
        except PreconditionError as exc:
            raise UsageError(str(exc)) from None
        tables.append({"kernel": kernel_to_spec(kernel), "d": d, "rows": rows})
    w = Writer(opts["out"])
    w.json("constants.json", {"tables": tables}, "constants")
    w.manifest("constants", opts)
    for t in tables:
        for r in t["rows"]:
            flag = "" if r["matches_definition"] else "  (differs from definition)"
            print(f"d={t['d']} {r['constant']}: {r['value']:.12g}{flag}")
    return EXIT_OK


COMMANDS = {"rate": cmd_rate, "bounds": cmd_bounds, "verify": cmd_verify, "lecam": cmd_lecam,
            "constants": cmd_constants}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="kme-lab", description="Kernel mean embedding experiments and minimax bounds.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file of options (or a previous manifest)")
        sp.add_argument("--jobs", type=int, help="worker processes (fallback: KME_LAB_JOBS)")
        sp.add_argument("--out", help="output directory (default: current directory)")
        sp.add_argument("--seed", type=int)
        keys = dict(DEFAULTS[name])
        if name != "verify":
            keys.update(DEFAULTS["kernel"])
        for key in keys:
            flag = "--" + key.replace("_", "-")
            if isinstance(DEFAULTS.get(name, {}).get(key), bool):
                sp.add_argument(flag, dest=key, action="store_const", const=True, default=None)
            else:
                sp.add_argument(flag, dest=key)
    return p


def _merge(name, args):
    cfg = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
        if "subcommand" in cfg and "parameters" in cfg:
            if cfg["subcommand"] != name:
                raise UsageError(f"manifest is for '{cfg['subcommand']}', not '{name}'")
            cfg = cfg["parameters"]
    opts = dict(DEFAULTS["common"])
    if name != "verify":
        opts.update(DEFAULTS["kernel"])
    opts.update(DEFAULTS[name])
    unknown = set(cfg) - set(opts) - {"config"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    opts.update({k: v for k, v in cfg.items() if k != "config"})
    for k, v in vars(args).items():
        if k in ("config", "command") or v is None:
            continue
        opts[k] = v
    return opts


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        opts = _merge(args.command, args)
        jobs = resolve_jobs(opts.get("jobs"))
        opts["seed"] = int(opts["seed"])
        if opts["seed"] < 0:
            raise UsageError("seed must be non-negative")
        return COMMANDS[args.command](opts, jobs)
    except (UsageError, ArgumentError, UnsupportedCaseError) as exc:
        print(f"kme-lab: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConstructionError, IntegrationError, InternalConsistencyError, ReplicateError, PreconditionError) as exc:
        print(f"kme-lab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except KmeLabError as exc:
        print(f"kme-lab: failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
