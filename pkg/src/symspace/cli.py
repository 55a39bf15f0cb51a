"""Command-line front end.

Exit codes: 0 pass, 1 negative verdict, 2 inconclusive, 64 usage or parse
error, 65 failed precondition, 66 depth budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction

import numpy as np

from . import cex, embed, gfun, norms, stepfn

EXIT_OK, EXIT_NEGATIVE, EXIT_INCONCLUSIVE = 0, 1, 2
EXIT_USAGE, EXIT_PRECONDITION, EXIT_DEPTH = 64, 65, 66


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _plain(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, Fraction):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _rows(report: dict) -> list:
    if "claims" in report:
        return [
            {k: c.get(k) for k in ("claim_id", "paper_eq", "computed", "bound", "pass")}
            for c in report["claims"]
        ]
    rows = []

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k in sorted(obj):
                walk(f"{prefix}.{k}" if prefix else k, obj[k])
        elif isinstance(obj, list):
            rows.append({"key": prefix, "value": json.dumps(obj)})
        else:
            rows.append({"key": prefix, "value": obj})

    walk("", report)
    return rows


def emit(report: dict, fmt: str, out) -> None:
    report = _plain(report)
    if fmt == "json":
        out.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
    elif fmt == "csv":
        rows = _rows(report)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else ["key", "value"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        out.write(buf.getvalue())
    else:
        for row in _rows(report):
            if "claim_id" in row:
                mark = "PASS" if row["pass"] else "FAIL"
                out.write(f"[{mark}] {row['claim_id']}: {row['computed']} (bound {row['bound']})\n")
            else:
                val = row["value"]
                if isinstance(val, str) and len(val) > 120:
                    val = val[:117] + "..."
                out.write(f"{row['key']}: {val}\n")


# spec parsing ----------------------------------------------------------------


def parse_weight(spec: str) -> gfun.PositiveFunction:
    """A class-G spec, or ``tilde:<spec>`` for t/f(t)."""
    if spec.startswith("tilde:"):
        return gfun.tilde_of(gfun.parse_gfun(spec[len("tilde:"):]))
    return gfun.parse_gfun(spec)


def parse_orlicz(spec: str) -> norms.OrliczFunction:
    """``pow:p`` for s**p, ``table:<path>`` for a JSON list of (s, N(s)) samples."""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "pow":
            return norms.Power(float(rest))
        if kind == "table":
            with open(rest) as fh:
                data = json.load(fh)
            return norms.TableConvex(tuple(map(tuple, data["points"] if isinstance(data, dict) else data)))
    except norms.NonConvex:
        raise
    except (ValueError, OSError, KeyError, TypeError) as exc:
        raise gfun.SpecError(f"cannot parse Orlicz spec {spec!r}: {exc}") from exc
    raise gfun.SpecError(f"unknown Orlicz spec {spec!r}")


# commands -------------------------------------------------------------------


def cmd_indices(args) -> tuple:
    f = gfun.parse_gfun(args.spec)
    try:
        prof = gfun.dilation_profile(f, args.J, args.K)
    except gfun.FitUnstable as exc:
        return {"spec": args.spec, "status": "unstable", "reason": str(exc)}, EXIT_INCONCLUSIVE
    return {"spec": args.spec, **prof.to_dict()}, EXIT_OK


def cmd_embed(args) -> tuple:
    phi, psi = gfun.parse_gfun(args.phi), gfun.parse_gfun(args.psi)
    rep = embed.series_test(phi, psi, args.depth)
    out = {"phi": args.phi, "psi": args.psi, **rep.to_dict()}
    try:
        out["condition_A"] = gfun.condition_A(phi, psi).to_dict()
        out["condition_B"] = gfun.condition_B(phi, psi).to_dict()
    except gfun.EmbedOrderError as exc:
        out["condition_A"] = out["condition_B"] = {"verdict": "undefined", "reason": str(exc)}
    if args.theorem5:
        t5 = embed.theorem5_chain(phi, psi)
        out["theorem5"] = t5.to_dict()
        out["constants"].update(t5.to_dict()["constants"])
    if args.witness:
        w = embed.witness_search(phi, psi, args.witness)
        out["witness"] = w.to_dict() if w else {"status": "not_found"}
        if w:
            out["constants"]["C2"] = w.C2
    code = {
        embed.SeriesVerdict.CONVERGES: EXIT_OK,
        embed.SeriesVerdict.DIVERGES: EXIT_NEGATIVE,
    }.get(rep.verdict, EXIT_INCONCLUSIVE)
    return out, code


def cmd_rho(args) -> tuple:
    phi, psi = gfun.parse_gfun(args.phi), gfun.parse_gfun(args.psi)
    rc = embed.construct_rho(phi, psi, args.u, args.K)
    checks = embed.verify_rho(rc, phi, psi, args.depth)
    ok = all(c.passed for c in checks)
    out = {"verdict": "pass" if ok else "fail", **rc.to_dict(), "checks": [c.to_dict() for c in checks]}
    return out, EXIT_OK if ok else EXIT_NEGATIVE


def cmd_verify_cex(args) -> tuple:
    fam = cex.build_family(args.m)
    rep = cex.verify_all(fam, samples=args.samples, seed=args.seed)
    out = {"M_max": args.m, "n": list(fam.n), **rep.to_dict()}
    return out, EXIT_OK if rep.passed else EXIT_NEGATIVE


def cmd_norm(args) -> tuple:
    try:
        x = stepfn.load(args.x)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot load step function {args.x!r}: {exc}") from exc
    out = {"space": args.space, "spec": args.spec}
    if args.space == "lorentz":
        out["value"] = norms.lorentz_norm(x, gfun.parse_gfun(args.spec))
    elif args.space == "marc":
        res = norms.marcinkiewicz_sup(x, parse_weight(args.spec))
        out.update(value=res.value, refinement=res.refinement, polished=res.polished)
    elif args.space == "quasi":
        out["value"] = norms.quasi_norm(x, gfun.parse_gfun(args.spec))
    elif args.space == "orlicz":
        out["value"] = norms.orlicz_norm(x, parse_orlicz(args.spec))
    else:
        res = cex.f_norm(x)
        out.update(value=res.value, m_eff=res.m_eff, tail_bound=res.tail_bound, chi_part=res.chi_part)
    return out, EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="symspace", description="Norms, indices and embedding checks for symmetric spaces on [0,1].")
    p.add_argument("--format", choices=("json", "csv", "text"), default="json", help="report format (default json)")
    p.add_argument("--output", default="-", help="report path, - for stdout (default)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("indices", help="dilation indices of a class-G function")
    s.add_argument("spec", help="pow:a | powlog:a:b | table:<path> | scaled:c:<spec>")
    s.add_argument("--J", type=int, default=64, help="dilation window (default 64)")
    s.add_argument("--K", type=int, default=None, help="probe depth (default 8J)")
    s.set_defaults(func=cmd_indices)

    s = sub.add_parser("embed", help="series test, conditions A/B, optional chain and witnesses")
    s.add_argument("phi")
    s.add_argument("psi")
    s.add_argument("--depth", type=int, default=200, help="series depth (default 200)")
    s.add_argument("--theorem5", action="store_true", help="run the power-gap chain")
    s.add_argument("--witness", type=int, default=0, metavar="N", help="search N disjoint witnesses")
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("rho", help="build and check the slower weight rho")
    s.add_argument("phi")
    s.add_argument("psi")
    s.add_argument("--u", type=float, default=0.25, help="recursion step (default 0.25)")
    s.add_argument("--K", type=int, default=200, help="construction depth (default 200)")
    s.add_argument("--depth", type=int, default=60, help="ratio check depth (default 60)")
    s.set_defaults(func=cmd_rho)

    s = sub.add_parser("verify-cex", help="verify the block family claims")
    s.add_argument("--m", type=int, default=5, help="largest block index (default 5, at most 6)")
    s.add_argument("--samples", type=int, default=1000, help="coefficient samples (default 1000)")
    s.add_argument("--seed", type=lambda v: int(v, 0), default=cex.DEFAULT_SEED, help="RNG seed (default 0x5EED)")
    s.set_defaults(func=cmd_verify_cex)

    s = sub.add_parser("norm", help="norm of a step function read from JSON")
    s.add_argument("space", choices=("lorentz", "marc", "quasi", "orlicz", "F"))
    s.add_argument("spec", help="weight spec; tilde:<spec> allowed for marc; ignored (-) for F")
    s.add_argument("x", help="step function JSON file")
    s.set_defaults(func=cmd_norm)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report, code = args.func(args)
    except (gfun.SpecError, gfun.NotInClassG, norms.NonConvex, UsageError) as exc:
        print(f"symspace: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (embed.PreconditionFailed, gfun.EmbedOrderError, gfun.DomainError, norms.RangeError) as exc:
        print(f"symspace: precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except cex.DepthError as exc:
        print(f"symspace: {exc}", file=sys.stderr)
        return EXIT_DEPTH
    if args.output == "-":
        emit(report, args.format, sys.stdout)
    else:
        with open(args.output, "w") as fh:
            emit(report, args.format, fh)
    return code


if __name__ == "__main__":
    sys.exit(main())
