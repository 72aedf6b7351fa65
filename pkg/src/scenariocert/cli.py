"""Command-line entry point ``scenario-cert``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
Every command that writes files computes all results first, then writes
each file atomically into ``--out`` and finally a ``manifest.json`` that
``scenario-cert replay`` can re-run.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field

from . import __version__
from .certificates import Certificate, sample_size
from .errors import DimensionMismatch, DomainError, MalformedProgram, ScenarioCertError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    argv: list
    config: str = None
    seed: int = None
    version: str = __version__
    outputs: list = field(default_factory=list)
    duration_s: float = 0.0

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return "" if v is None else str(v)


def _csv_text(rows, columns):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _atomic_write(path, text):
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_outputs(out_dir, files, manifest):
    os.makedirs(out_dir, exist_ok=True)
    for name, text in files:
        _atomic_write(os.path.join(out_dir, name), text)
    manifest.outputs = [name for name, _ in files]
    _atomic_write(os.path.join(out_dir, MANIFEST), manifest.to_json())


def _require_out(args):
    if args.out is None:
        raise UsageError("--out is required for this command")


def _load_config(path):
    if path is None:
        raise UsageError("--config is required")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path!r}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path!r} is not valid JSON: {exc}") from exc


def _check_beta(beta):
    if not 0.0 < beta < 1.0:
        raise UsageError(f"--beta must lie in (0, 1), got {beta}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_epsilon(args):
    if args.M is None or len(args.M) != 1:
        raise UsageError("epsilon needs exactly one --M")
    M = args.M[0]
    if args.mode == "posteriori":
        if args.k is None:
            raise UsageError("mode posteriori needs --k")
        cert = Certificate.posteriori(M, args.k, args.beta)
    else:
        if args.dim is None:
            raise UsageError(f"mode {args.mode} needs --dim")
        cert = Certificate.apriori(M, args.beta, args.dim, explicit=args.mode == "explicit")
    sys.stdout.write(cert.to_json(sort_keys=True) + "\n")
    return EXIT_OK, None


def _set_rows_generic(cfg, M_list, M_test, beta, k_override, seed):
    from .geometry import Polytope
    from .scenario import OffsetNoiseSampler, TEST, assemble, certify_set, estimate_set_violation
    from .certificates import epsilon_posteriori

    try:
        base = Polytope.from_dict(cfg["base"])
        sampler = OffsetNoiseSampler.from_dict(cfg)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"offset_noise config is missing or malformed: {exc}") from exc
    rows = []
    for M in M_list:
        sfs = assemble(base, sampler, M, seed)
        k_comp = sfs.support_subsample().k
        cert = certify_set(sfs, beta, k_override)
        est = estimate_set_violation(sfs, sampler, M_test, seed)
        rows.append({
            "M": M, "k_used": cert.k, "k_computed": k_comp, "epsilon_theory": cert.epsilon,
            "epsilon_computed": epsilon_posteriori(M, k_comp, beta),
            "epsilon_empirical": est.frequency, "hits": est.hits, "trials": est.trials,
            "beta": beta, "seed": seed, "namespace": TEST,
        })
    return rows


SET_COLUMNS = ["M", "k_used", "k_computed", "epsilon_theory", "epsilon_computed",
               "epsilon_empirical", "hits", "trials", "beta", "seed", "namespace"]


def cmd_certify_set(args):
    from .evstudy import EVFeasibilityConfig, run_feasibility_experiment

    _require_out(args)
    raw = _load_config(args.config)
    _check_beta(args.beta)
    if not args.M or any(m < 0 for m in args.M) or args.M_test < 1:
        raise UsageError("--M must list non-negative counts and --M-test must be positive")
    kind = raw.get("kind", "ev_feasibility") if isinstance(raw, dict) else None
    if kind == "ev_feasibility":
        try:
            cfg = EVFeasibilityConfig.from_dict(raw)
        except TypeError as exc:
            raise UsageError(f"bad feasibility config: {exc}") from exc
        seed = cfg.seed if args.seed is None else args.seed
        rows = run_feasibility_experiment(cfg, args.M, args.M_test, args.beta, args.k_override, seed)
    elif kind == "offset_noise":
        seed = int(raw.get("seed", 0)) if args.seed is None else args.seed
        rows = _set_rows_generic(raw, args.M, args.M_test, args.beta, args.k_override, seed)
    else:
        raise UsageError(f"unknown config kind {kind!r}")
    files = [("certify_set.csv", _csv_text(rows, SET_COLUMNS))]
    for r in rows:
        cert = Certificate.posteriori(r["M"], r["k_used"], args.beta).to_dict()
        cert.update(seed=seed, namespace=r["namespace"], k_computed=r["k_computed"])
        files.append((f"certificate_M{r['M']}.json", json.dumps(cert, indent=2, sort_keys=True) + "\n"))
    return EXIT_OK, (files, seed)


SOLUTION_COLUMNS = ["N", "repeat", "M", "beta", "empirical_violation", "epsilon_theory",
                    "epsilon_binomial", "hits", "trials", "gamma_star", "value", "status",
                    "seed", "namespace"]


def cmd_certify_solution(args):
    from .evstudy import EVCostConfig, run_cost_experiment

    _require_out(args)
    raw = _load_config(args.config)
    _check_beta(args.beta)
    if not args.M or len(args.M) != 1:
        raise UsageError("certify-solution needs exactly one --M")
    if args.M_test < 1 or args.repeats < 1:
        raise UsageError("--M-test and --repeats must be positive")
    try:
        cfg = EVCostConfig.from_dict(raw)
    except TypeError as exc:
        raise UsageError(f"bad cost config: {exc}") from exc
    N_list = args.N_list or [cfg.N]
    seed = cfg.seed if args.seed is None else args.seed
    rows = run_cost_experiment(cfg, N_list, args.M[0], args.M_test, args.beta, args.repeats, seed)
    code = EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_NUMERIC
    return code, ([("certify_solution.csv", _csv_text(rows, SOLUTION_COLUMNS))], seed)


def cmd_sample_size(args):
    if args.eps is None or args.n is None:
        raise UsageError("sample-size needs --eps and --n")
    if not 0.0 < args.eps < 1.0:
        raise UsageError(f"--eps must lie in (0, 1), got {args.eps}")
    _check_beta(args.beta)
    N_list = args.N_list or [1]
    rows = [
        {"N": N, "M_rank_bound": sample_size(args.eps, args.beta, args.n),
         "M_naive": sample_size(args.eps, args.beta, args.n * N)}
        for N in N_list
    ]
    text = _csv_text(rows, ["N", "M_rank_bound", "M_naive"])
    if args.out is None:
        sys.stdout.write(text)
        return EXIT_OK, None
    return EXIT_OK, ([("sample_size.csv", text)], None)


def cmd_replay(args):
    if args.manifest is None:
        raise UsageError("replay needs --manifest")
    try:
        with open(args.manifest, encoding="utf-8") as fh:
            manifest = RunManifest.from_json(fh.read())
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"cannot read manifest {args.manifest!r}: {exc}") from exc
    argv = list(manifest.argv)
    if args.out is not None:
        # strip the recorded output directory and substitute the new one
        cleaned, skip = [], False
        for tok in argv:
            if skip:
                skip = False
                continue
            if tok == "--out":
                skip = True
                continue
            if tok.startswith("--out="):
                continue
            cleaned.append(tok)
        argv = cleaned + ["--out", args.out]
    return "replay", argv


COMMANDS = {
    "epsilon": cmd_epsilon,
    "certify-set": cmd_certify_set,
    "certify-solution": cmd_certify_solution,
    "sample-size": cmd_sample_size,
    "replay": cmd_replay,
}


def build_parser():
    p = argparse.ArgumentParser(prog="scenario-cert", description="Scenario certificates and experiments.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--seed", type=int, help="overrides the configuration seed")
        if out:
            sp.add_argument("--out", help="output directory")
        sp.add_argument("--beta", type=float, default=1e-6)

    sp = sub.add_parser("epsilon", help="print a certificate")
    sp.add_argument("--mode", choices=["posteriori", "apriori", "explicit"], required=True)
    sp.add_argument("--M", type=int, nargs=1)
    sp.add_argument("--k", type=int)
    sp.add_argument("--dim", type=int)
    sp.add_argument("--beta", type=float, required=True)

    sp = sub.add_parser("certify-set", help="certify scenario feasible sets")
    common(sp)
    sp.add_argument("--M", type=int, nargs="+")
    sp.add_argument("--M-test", dest="M_test", type=int, default=20000)
    sp.add_argument("--k-override", dest="k_override", type=int)

    sp = sub.add_parser("certify-solution", help="solve and validate the uncertain-cost program")
    common(sp)
    sp.add_argument("--M", type=int, nargs=1)
    sp.add_argument("--M-test", dest="M_test", type=int, default=20000)
    sp.add_argument("--N-list", dest="N_list", type=int, nargs="+")
    sp.add_argument("--repeats", type=int, default=1)

    sp = sub.add_parser("sample-size", help="samples needed with and without the rank bound")
    sp.add_argument("--eps", type=float)
    sp.add_argument("--beta", type=float, default=1e-6)
    sp.add_argument("--n", type=int)
    sp.add_argument("--N-list", dest="N_list", type=int, nargs="+")
    sp.add_argument("--out")

    sp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", help="write into this directory instead of the recorded one")
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    start = time.perf_counter()
    try:
        result = COMMANDS[args.command](args)
        if result[0] == "replay":
            return main(result[1])
        code, payload = result
    except UsageError as exc:
        print(f"scenario-cert: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, DimensionMismatch, MalformedProgram) as exc:
        print(f"scenario-cert: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioCertError as exc:
        # infeasible configurations or sets, unbounded domains, iteration limits
        print(f"scenario-cert: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if payload is not None:
        files, seed = payload
        out = args.out
        manifest = RunManifest(
            command=args.command,
            argv=argv,
            config=getattr(args, "config", None),
            seed=seed,
            duration_s=round(time.perf_counter() - start, 6),
        )
        _write_outputs(out, files, manifest)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
