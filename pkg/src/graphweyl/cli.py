"""Command line driver: ``graphweyl <command> --config FILE [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import math
import os
import re
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ConfigurationError,
    ConstructionFailure,
    EmptyBin,
    GraphWeylError,
    InvariantViolation,
)
from .interval_map import load_map
from .io import HISTOGRAM_HEADER, config_hash, histogram_rows, load_config, write_csv, write_json

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_CONSTRUCTION = 0, 1, 2, 3

_ANGLE = re.compile(r"^\s*([0-9.eE+-]*)\s*\*?\s*pi\s*(?:/\s*([0-9.]+))?\s*$")


def parse_angle(value) -> float:
    """Numbers or strings such as ``"pi/4"``, ``"2pi"``, ``"2*pi/3"``."""
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _ANGLE.match(value)
        if m:
            sign = {"": 1.0, "+": 1.0, "-": -1.0}
            mult = sign[m.group(1)] if m.group(1) in sign else float(m.group(1))
            return mult * math.pi / (float(m.group(2)) if m.group(2) else 1.0)
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigurationError(f"cannot parse angle {value!r}")


def _n_list(config):
    ns = config.get("n")
    if ns is None:
        raise ConfigurationError("config needs an 'n' entry")
    ns = ns if isinstance(ns, list) else [ns]
    if not all(isinstance(n, int) and n > 0 for n in ns):
        raise ConfigurationError(f"'n' must be positive integers, got {ns}")
    return ns


def _r_cutoff(rule, K: int) -> int:
    if isinstance(rule, int):
        r = rule
    elif rule in (None, "half"):
        r = max(1, K // 2)
    elif rule == "log":
        r = max(1, int(math.log2(max(K, 1))))
    else:
        raise ConfigurationError(f"unknown r rule {rule!r}")
    if not 1 <= r < K:
        raise ConfigurationError(f"cutoff r = {r} must satisfy 1 <= r < K = {K}")
    return r


def _arcs(config, smap=None, n=None):
    from .random_quant import default_kappa
    from .spectral import TWO_PI, ArcWindow

    spec = config.get("arcs", {"widths": ["2pi"], "centers": ["pi"]})
    closed = bool(spec.get("closed", False))
    if "kappa" in spec:
        kappa = spec["kappa"]
        if kappa == "auto":
            kappa = default_kappa(smap, n)
        kappa = int(kappa)
        w = TWO_PI / kappa
        return [ArcWindow((b + 0.5) * w, w, closed) for b in range(kappa)]
    widths = [parse_angle(w) for w in spec.get("widths", ["2pi"])]
    if "positions" in spec:
        k = int(spec["positions"])
        offset = parse_angle(spec.get("offset", 0.0))
        centers = [offset + TWO_PI * i / k for i in range(k)]
    else:
        centers = [parse_angle(c) for c in spec.get("centers", [0.0])]
    for w in widths:
        if not 0 < w <= TWO_PI + 1e-12:
            raise ConfigurationError(f"arc width {w} outside (0, 2pi]")
    return [ArcWindow(c, min(w, TWO_PI), closed) for w in widths for c in centers]


def _unitary_for(config, smap, n, P):
    from .quantize import ComplexUnitary, block_dft_quantize, doubling_unitary, quantize

    method = config.get("quantization", "auto")
    if isinstance(method, dict) and "file" in method:
        U = ComplexUnitary.load(method["file"])
        if U.n != n:
            raise ConfigurationError(f"supplied unitary has n = {U.n}, expected {n}")
        return U
    if method == "auto":
        return quantize(P, smap)
    if method == "doubling":
        return doubling_unitary(n)
    if method == "block_dft":
        return block_dft_quantize(P)
    raise ConfigurationError(f"unknown quantization {method!r}")


def cmd_build(config, out: Path, seed=None) -> dict:
    from .markov import build_markov
    from .quantize import verify_unistochastic

    smap = load_map(config.get("map", "doubling"))
    rows = []
    ok = True
    for n in _n_list(config):
        P = build_markov(smap, n)
        U = _unitary_for(config, smap, n, P)
        check = verify_unistochastic(U, P)
        P.to_csv(out / f"P_n{n}.csv")
        U.save(out / f"U_n{n}.bin")
        passed = check.entry_error <= 1e-12 and check.unitarity_error <= 1e-12
        ok &= passed
        rows.append({"n": n, "provenance": U.provenance, **check._asdict(), "passed": passed})
    return {"map": smap.to_config(), "results": rows, "passed": ok}


def _spectra(config, smap):
    from .markov import build_markov
    from .spectral import eigendecompose

    for n in _n_list(config):
        P = build_markov(smap, n)
        U = _unitary_for(config, smap, n, P)
        yield n, P, U, eigendecompose(U)


def cmd_weyl(config, out: Path, seed=None) -> dict:
    from .markov import bad_coordinates
    from .spectral import effective_horizon, weyl_count, weyl_remainder_report

    smap = load_map(config.get("map", "doubling"))
    rows, ok = [], True
    for n, P, U, spec in _spectra(config, smap):
        K = effective_horizon(smap, n)
        r = _r_cutoff(config.get("r"), K)
        bad = bad_coordinates(smap, n, r)
        for i, arc in enumerate(_arcs(config, smap, n)):
            rep = weyl_remainder_report(spec, smap, n, arc, r, bad=bad, strict=False)
            ok &= rep.passed
            d = rep.to_dict()
            d["weyl_count"] = weyl_count(spec, arc)
            d["expected_count"] = n * arc.width / (2 * np.pi)
            rows.append(d)
            sel = spec.vectors[:, arc.contains(spec.phases)]
            write_csv(out / f"hist_n{n}_arc{i}.csv", HISTOGRAM_HEADER, histogram_rows(np.sqrt(n) * sel.real))
        rows_bad = {"n": n, "r": r, "size": len(bad), "bound": bad.bound}
        rows.append({"bad_coordinates": rows_bad})
    return {"results": rows, "passed": ok}


def cmd_qe(config, out: Path, seed=None) -> dict:
    from .ergodic import egorov_defect, observable, parse_function, variance_sweep

    smap = load_map(config.get("map", "doubling"))
    hs = [parse_function(h) for h in config.get("observables", ["cos(2pi x)"])]
    spectra, egorov, ok = {}, [], True
    for n, P, U, spec in _spectra(config, smap):
        spectra[n] = spec
        for h in hs:
            obs = observable(h, n)
            c = smap.constants
            if n % (c.m0 * c.l0) == 0:
                res = egorov_defect(U, smap, h, n, check=False)
                passed = res.defect <= res.bound * (1 + 1e-12) + 1e-12
                ok &= passed
                egorov.append({"n": n, "h": h.name, "defect": res.defect, "bound": res.bound, "passed": passed})
            ok &= obs.trace_error() <= 1e-10
    variance = []
    for h in hs:
        rows = variance_sweep(spectra, h, _arcs(config, smap, max(spectra)))
        write_csv(
            out / f"variance_{re.sub(r'[^A-Za-z0-9]+', '_', h.name).strip('_')}.csv",
            ["n", "bin_center", "bin_width", "variance", "bin_count"],
            [(r.n, r.bin_center, r.bin_width, r.variance, r.bin_count) for r in rows],
        )
        variance.append({"h": h.name, "rows": [r.__dict__ for r in rows]})
    limit = config.get("thresholds", {}).get("variance_max")
    if limit is not None:
        last = max(spectra)
        worst = max(r["variance"] for v in variance for r in v["rows"] if r["n"] == last and r["bin_count"])
        ok &= worst < limit
    return {"ergodic_asserted": bool(config.get("ergodic", True)), "egorov": egorov, "variance": variance, "passed": ok}


def cmd_perturb(config, out: Path, seed=None) -> dict:
    from .random_quant import build_random_quantization, default_kappa, make_rng, verify_random_quantization

    smap = load_map(config.get("map", "doubling"))
    seed = config.get("seed") if seed is None else seed
    if seed is None:
        raise ConfigurationError("perturb needs a seed (config 'seed' or --seed)")
    hs = config.get("observables", ["cos(2pi x)"])
    th = config.get("thresholds", {})
    rows, ok = [], True
    for i, (n, P, U, spec) in enumerate(_spectra(config, smap)):
        kappa = config.get("kappa", "auto")
        kappa = default_kappa(smap, n) if kappa == "auto" else int(kappa)
        eps = config.get("epsilon_split")
        q = build_random_quantization(spec, kappa, eps, rng=make_rng(seed, i), seed=seed)
        rep = verify_random_quantization(q, U, P, smap, hs, spec_U=spec, egorov=bool(config.get("egorov", False)))
        hard = rep["a"]["passed"] and rep["d"]["passed"] and rep["e"]["passed"]
        if "que_max" in th:
            rep["c_passed"] = all(c["max_deviation"] < th["que_max"] for c in rep["c"])
            hard &= rep["c_passed"]
        if "ks_max" in th:
            rep["b_passed"] = rep["b"]["ks_real_max"] < th["ks_max"]
            hard &= rep["b_passed"]
        ok &= hard
        rows.append(rep)
        write_csv(out / f"hist_perturbed_n{n}.csv", HISTOGRAM_HEADER, histogram_rows(np.sqrt(n) * q.spectral.vectors.real))
    return {"seed": seed, "results": rows, "passed": ok}


def cmd_doubling2k(config, out: Path, seed=None) -> dict:
    from .doubling import (
        bad_pairs_2k,
        degeneracy_profile,
        staircase_check,
        tensor_power_identities,
        write_profile_csv,
    )

    Ks = config.get("K", [8])
    Ks = Ks if isinstance(Ks, list) else [Ks]
    rows, profiles = [], []
    for K in Ks:
        ident = tensor_power_identities(K)
        prof = degeneracy_profile(K)
        profiles.append(prof)
        row = {"K": K, "identities": ident.to_dict(), "multiplicities": prof.multiplicities,
               "max_relative_deviation": prof.max_relative_deviation}
        if K <= 10:
            row["staircases"] = [staircase_check(K, m).to_dict() for m in range(1, K + 1)]
        r = config.get("r")
        if r is not None and K <= 10:
            row["bad_pairs"] = bad_pairs_2k(K, _r_cutoff(r, K)).to_dict()
        rows.append(row)
    write_profile_csv(profiles, out / "multiplicities.csv")
    return {"results": rows, "passed": True}


def cmd_failcoord(config, out: Path, seed=None) -> dict:
    from .doubling import failing_coordinate_bound, series_constant

    ns = config.get("n", [1024, 2048])
    ns = ns if isinstance(ns, list) else [ns]
    exact = bool(config.get("exact", True))
    const = series_constant()
    print(f"series constant {const:.8f}")
    rows = [failing_coordinate_bound(n, exact=exact).to_dict() for n in ns]
    write_csv(out / "failing_coordinate.csv", ["n", "series_bound", "exact_value"],
              [(r["n"], r["series_value"], r["exact_value"]) for r in rows])
    for r in rows:
        print(f"n={r['n']}: series {r['series_value']:.6f}, exact {r['exact_value']}")
    return {"series_constant": const, "results": rows, "passed": all(r["consistent"] for r in rows)}


COMMANDS = {
    "build": cmd_build,
    "weyl": cmd_weyl,
    "qe": cmd_qe,
    "perturb": cmd_perturb,
    "doubling2k": cmd_doubling2k,
    "failcoord": cmd_failcoord,
}


def _thread_limit():
    threads = os.environ.get("GRAPHWEYL_THREADS")
    if not threads:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    try:
        return threadpool_limits(limits=int(threads))
    except ValueError as exc:
        raise ConfigurationError(f"GRAPHWEYL_THREADS must be an integer, got {threads!r}") from exc


def run(command: str, config_path, seed=None, out=None) -> int:
    config = load_config(config_path)
    if seed is not None:
        config["seed"] = seed
    out = Path(out or config.get("out", "graphweyl-out"))
    out.mkdir(parents=True, exist_ok=True)
    with _thread_limit():
        body = COMMANDS[command](config, out, seed)
    report = {
        "command": command,
        "library_version": __version__,
        "config_hash": config_hash(config),
        "config": config,
        "seed": config.get("seed"),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        **body,
    }
    write_json(out / f"{command}_report.json", report)
    return EXIT_OK if body.get("passed", True) else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graphweyl", description="Spectral experiments for quantized interval maps.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON or TOML experiment config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args.command, args.config, args.seed, args.out)
    except (ConfigurationError, EmptyBin) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConstructionFailure as exc:
        print(f"construction failure: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION
    except (InvariantViolation, GraphWeylError) as exc:
        print(f"invariant violation: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
