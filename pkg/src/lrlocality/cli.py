"""Command-line interface.

Exit codes: 0 success, 1 certificate failure, 2 invalid input, 3 resource cap.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Sequence

from .diagnosis import certify
from .dynamics import BoundParams, ConeProfile, cone_profile, default_time_grid, fmt
from .errors import ResourceCapError, ValidationError
from .fermions import MODE_CAP, fermion_model_from_json, fermionic_certify
from .potential import (
    canonical_form,
    decay_fit,
    hamiltonian,
    is_canonical,
    potential_from_json,
    potential_to_json,
)
from .shift import build_ring, slope_table

EXIT_OK, EXIT_CERT, EXIT_INPUT, EXIT_CAP = 0, 1, 2, 3


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _write(out: str | None, text: str) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _load_spin_model(args):
    kw = {} if args.cap_dim is None else {"dim_cap": args.cap_dim}
    return potential_from_json(_read_json(args.model), **kw)


def _parse_pairs(text: str | None):
    if not text:
        return None
    pairs = []
    for chunk in text.split(","):
        try:
            a, b = chunk.split("-")
            pairs.append((int(a), int(b)))
        except ValueError:
            raise ValidationError(f"bad pair {chunk!r}; use x-y with integer sites") from None
    return pairs


def cmd_canonical(args) -> int:
    phi = _load_spin_model(args)
    H = hamiltonian(phi)
    max_size = args.k if args.k is not None else phi.declared_k
    canon = canonical_form(H, max_size=max_size)
    try:
        decay = decay_fit(canon)
    except ValidationError:
        decay = None
    out = potential_to_json(canon, decay)
    out["is_canonical"] = bool(is_canonical(canon))
    _write(args.out, _dump(out))
    return EXIT_OK


def cmd_cone(args) -> int:
    phi = _load_spin_model(args)
    given = [v is not None for v in (args.mu, args.v, args.K)]
    if any(given) and not all(given):
        raise ValidationError("--mu, --v and --K must be given together")
    params = BoundParams(args.mu, args.v, args.K) if all(given) else None
    if not (0 < args.tmin < args.tmax) or args.tsteps < 1:
        raise ValidationError("need 0 < tmin < tmax and tsteps >= 1")
    grid = default_time_grid(args.tmin, args.tmax, args.tsteps)
    profile: ConeProfile = cone_profile(phi, grid, _parse_pairs(args.pairs), params, seed=args.seed)
    _write(args.out, profile.to_csv())
    return EXIT_OK


def cmd_certify(args) -> int:
    if args.k is None:
        raise ValidationError("certify needs --k (the k-body promise)")
    phi = _load_spin_model(args)
    cert = certify(phi, args.k, mode=args.mode, seed=args.seed)
    _write(args.out, _dump(cert.to_json()))
    return EXIT_OK if cert.valid else EXIT_CERT


def cmd_shift(args) -> int:
    model = build_ring(args.L)
    rows = slope_table(model, range(1, 11))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["distance", "matrix_element", "slope_fd", "slope_analytic"])
    for r in rows:
        w.writerow([r.distance, fmt(r.matrix_element), fmt(r.slope_fd), fmt(r.slope_analytic)])
    _write(args.out, buf.getvalue())
    return EXIT_OK


def cmd_fermion(args) -> int:
    if args.k is None:
        raise ValidationError("fermion needs --k (the k-body promise)")
    cap = MODE_CAP if args.cap_dim is None else int(math.log2(args.cap_dim))
    alg, phi = fermion_model_from_json(_read_json(args.model), mode_cap=cap)
    cert = fermionic_certify(alg, phi, args.k, args.aux1, args.aux2, seed=args.seed)
    _write(args.out, _dump(cert.to_json()))
    return EXIT_OK if cert.valid else EXIT_CERT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lrlocality", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        if model:
            sp.add_argument("--model", required=True, help="model JSON file")
        sp.add_argument("--out", default=None, help="output file (default: stdout)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--cap-dim", type=int, default=None, help="largest dense Hilbert dimension")

    sp = sub.add_parser("canonical", help="canonical potential and decay fit")
    common(sp)
    sp.add_argument("--k", type=int, default=None, help="largest support size to compute")
    sp.set_defaults(func=cmd_canonical)

    sp = sub.add_parser("cone", help="commutator growth profile as CSV")
    common(sp)
    sp.add_argument("--tmin", type=float, default=1e-3)
    sp.add_argument("--tmax", type=float, default=10.0)
    sp.add_argument("--tsteps", type=int, default=20)
    sp.add_argument("--pairs", default=None, help="comma-separated x-y pairs, e.g. 0-7,0-3")
    sp.add_argument("--mu", type=float, default=None)
    sp.add_argument("--v", type=float, default=None)
    sp.add_argument("--K", type=float, default=None)
    sp.set_defaults(func=cmd_cone)

    sp = sub.add_parser("certify", help="locality certificate for a spin model")
    common(sp)
    sp.add_argument("--k", type=int, required=True, help="k-body promise")
    sp.add_argument("--mode", choices=["exact", "finite-diff"], default="exact")
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("shift", help="shift-ring slope data as CSV")
    common(sp, model=False)
    sp.add_argument("--L", type=int, default=101)
    sp.set_defaults(func=cmd_shift)

    sp = sub.add_parser("fermion", help="locality certificate for a fermionic model")
    common(sp)
    sp.add_argument("--k", type=int, required=True, help="k-body promise")
    sp.add_argument("--aux1", type=int, default=1, help="auxiliary modes next to x")
    sp.add_argument("--aux2", type=int, default=1, help="auxiliary modes next to y")
    sp.set_defaults(func=cmd_fermion)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
