"""Command-line front end: ``uppertail <command> <operation> [--flags]``.

Every run writes JSON-lines records (see :mod:`uppertail.records`) to
``--out`` or standard output.  Exit status: 0 success, 2 configuration error,
3 budget exceeded or incomplete experiment, 4 quadrature tolerance not met,
5 degenerate importance-sampling estimate, 1 any other package error,
130 interrupted.
"""
from __future__ import annotations

import argparse
import csv
import math
import signal
import sys

import numpy as np

from . import ldp, lpp, mp, rates, rmt
from .config import SCHEMA, ExperimentConfig, load_toml, validate
from .errors import BudgetError, ConfigError, ToleranceNotMet, UppertailError
from .records import RecordWriter

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_BUDGET, EXIT_TOLERANCE, EXIT_DEGENERATE = 0, 1, 2, 3, 4, 5
EXIT_INTERRUPTED = 130


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("argv", message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uppertail", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="TOML file; CLI flags override its entries")
    sub = parser.add_subparsers(dest="command")
    for command, ops in SCHEMA.items():
        cp = sub.add_parser(command)
        osub = cp.add_subparsers(dest="operation")
        for op, params in ops.items():
            p = osub.add_parser(op)
            p.add_argument("--seed")
            p.add_argument("--out")
            p.add_argument("--workers")
            for name, spec in params.items():
                flag = "--" + name.replace("_", "-")
                if spec.conv.__name__ == "_bool":
                    p.add_argument(flag, dest=name, nargs="?", const="true", help=spec.help)
                else:
                    p.add_argument(flag, dest=name, help=spec.help)
    return parser


def argv_to_mapping(argv) -> dict:
    """Flat ``{key: raw value}`` from an argument vector, merged over ``--config``."""
    ns = build_parser().parse_args(argv)
    raw = load_toml(ns.config) if ns.config else {}
    given = {k: v for k, v in vars(ns).items() if k != "config" and v is not None}
    if raw and "command" in given and raw.get("command") not in (None, given["command"]):
        raise ConfigError("command", "differs between the config file and the command line")
    raw.update(given)
    if "command" in raw and "operation" not in raw:
        raise ConfigError("operation", f"missing operation for {raw['command']}")
    return raw


# -- operations ----------------------------------------------------------------------------
# each handler returns (payload, rows, status)


def _field(cfg: ExperimentConfig):
    p = cfg.params
    if p["field"] is not None:
        return lpp.load_field(p["field"])
    return lpp.sample_weight_field(p["rows"], p["cols"], cfg.seed)


def _lpp(cfg: ExperimentConfig):
    f = _field(cfg)
    base = {"rows": f.rows, "cols": f.cols, "seed": f.seed}
    if cfg.operation == "sample":
        if cfg.params["save"]:
            lpp.save_field(f, cfg.params["save"])
        rows = [{"row": r + 1, "weights": f.weights[r]} for r in range(f.rows)]
        return {**base, "mean": float(f.weights.mean()), "saved": cfg.params["save"]}, rows, 0
    if cfg.operation == "passage":
        st = lpp.last_passage(f)
        return {**base, "value": st.value, "truncated_value": st.truncated_value,
                "endpoints": st.endpoints}, [], 0
    g = lpp.geodesic(f)
    return {**base, "weight": g.weight, "path": g.path, "profile": g.profile,
            "max_fluct": g.max_fluct}, [], 0


def _rmt(cfg: ExperimentConfig):
    p, op = cfg.params, cfg.operation
    M, N = p["m"], p["n"]
    if op == "sample":
        spec = rmt.WishartSpec(M, N, p["scaled"])
        ev = rmt.spectra_trials(spec, cfg.seed, p["trials"], p["backend"], workers=cfg.workers)
        rows = [{"trial": i, "eigenvalues": v} for i, v in enumerate(ev)]
        return {"M": M, "N": N, "scaled": p["scaled"], "trials": p["trials"],
                "backend": p["backend"] or rmt.default_backend(spec),
                "mean_top": float(ev[:, 0].mean()), "mean_trace": float(ev.sum(1).mean())}, rows, 0
    if op == "identity":
        return rmt.lpp_wishart_identity_test(M, N, p["trials"], cfg.seed,
                                             workers=cfg.workers), [], 0
    if op == "dominance":
        return rmt.dominance_check(M, N, p["trials"], cfg.seed, workers=cfg.workers), [], 0
    if op == "rigidity":
        s = rmt.sample_spectrum(rmt.WishartSpec(M, N), cfg.seed)
        r = rmt.rigidity_report(s, p["c"])
        return {"M": M, "N": N, "c": r.c, "window": r.window, "window_max": r.window_max,
                "argmax": r.argmax, "normalized": r.normalized}, [], 0
    K = rmt.build_projection_kernel(M, N)
    pts = np.random.Generator(np.random.Philox(cfg.seed)).exponential(
        max(M, 1), size=(p["points"], N))
    ratio = rmt.kernel_density_ratio(M, N, pts)
    return {"M": M, "N": N, "trace": K.trace(), "ratio_mean": float(ratio.mean()),
            "ratio_spread": float(ratio.max() / ratio.min() - 1.0)}, [], 0


def _rates(cfg: ExperimentConfig):
    p, op = cfg.params, cfg.operation
    if op == "eval":
        which, d, y = p["which"], p["delta"], p["y"]
        inputs = {"delta": d, "y": y}
        if which == "I":
            r = rates.rate_I(d)
        elif which == "Jy":
            r = rates.rate_Jy(y, d)
        elif which == "Iy":
            r = rates.rate_Iy(y, d)
        elif which == "beta":
            return {"which": which, "inputs": inputs, "value": rates.beta_coefficient(d),
                    "derivative": rates.beta_prime(d), "abs_err_estimate": None}, [], 0
        else:
            e = rates.intest_expansion(d, np.linspace(0.0025, 0.02, 8))
            return {"which": which, "inputs": inputs, "value": e.beta, "A": e.A, "B": e.B,
                    "fitted_A": e.fitted_A, "fitted_B": e.fitted_B,
                    "abs_err_estimate": abs(e.fitted_B - e.B)}, [], 0
        return {"which": which, "inputs": inputs, "value": r.value,
                "abs_err_estimate": r.abs_err_estimate}, [], 0
    if op == "mp":
        law = mp.MPLaw(p["y"])
        fn = {"density": mp.mp_density, "cdf": mp.mp_cdf, "quantile": mp.mp_quantile}[p["op"]]
        vals = np.atleast_1d(fn(law, np.asarray(p["x"])))
        return {"y": p["y"], "op": p["op"], "x": p["x"], "values": vals}, [], 0
    fit = rates.fit_curvature(p["delta"], p["n"], p["c"])
    return {"delta": p["delta"], "n": p["n"], "c": p["c"], **fit,
            "beta": rates.beta_coefficient(p["delta"])}, [], 0


def _ldp(cfg: ExperimentConfig):
    p, op, seed, w = cfg.params, cfg.operation, cfg.seed, cfg.workers
    if op == "estimate":
        if p["theta"] is None:
            plan = ldp.choose_tilt(p["n"], p["delta"], max(p["trials"] // 20, 500), seed,
                                   truncated=p["truncated"], workers=w)
        else:
            plan = ldp.TiltPlan(p["theta"], p["strip"])
        est, tr = ldp.importance_estimate(p["n"], p["delta"], plan, p["trials"], seed,
                                          truncated=p["truncated"], workers=w,
                                          return_trials=True)
        rows = [{"trial": i, "T": float(T), "D_max": int(d) if a else None,
                 "accepted": bool(a), "log_L": float(lL), "L": math.exp(lL)}
                for i, (T, lL, a, d) in enumerate(zip(tr["T"], tr["logL"], tr["accepted"],
                                                      tr["dmax"]))]
        return est.as_dict(), rows, EXIT_DEGENERATE if est.degenerate else 0
    if op == "reject":
        res = ldp.rejection_conditional_samples(p["n"], p["delta"], p["budget"], seed,
                                                max_accepted=p["max_accepted"], workers=w)
        rows = [{"trial": int(i), "T": float(T), "D_max": int(d), "accepted": True, "L": 1.0}
                for i, T, d in zip(res.accepted_index, res.accepted_T, res.accepted_dmax)]
        k = len(res.accepted_T)
        return {"n": res.n, "delta": res.delta, "trials": res.trials, "accepted": k,
                "acceptance": res.acceptance, "acceptance_ci": res.acceptance_ci(),
                "pilot_estimate": res.pilot_estimate,
                "median_D": float(np.median(res.accepted_dmax)) if k else None}, rows, 0
    if op == "midpoint":
        out = ldp.midpoint_ratio_experiment(p["n"], p["delta"], p["trials"], seed,
                                            method=p["method"], k=p["k"], workers=w)
        return out, [], 0
    if op == "tf":
        out = ldp.conditional_tf_experiment(p["n"], p["delta"], p["budget"], seed,
                                            uncond_trials=p["uncond_trials"],
                                            max_accepted=p["max_accepted"],
                                            resamples=p["resamples"], keep_samples=True,
                                            workers=w)
        samples = out.pop("samples")
        rows = [{"n": n, "conditioned": kind == "conditioned", "trial": i, "D_max": d}
                for kind in ("unconditioned", "conditioned")
                for n, vals in sorted(samples[kind].items()) for i, d in enumerate(vals)]
        if p["csv"]:
            write_fit_table(out, p["csv"])
        return out, rows, EXIT_BUDGET if out["incomplete"] else 0
    out = ldp.two_scale_split_probe(p["n"], p["t1"], p["delta1"], p["delta2"], p["trials"],
                                    seed, delta=p["delta"], workers=w)
    return out, [], 0


def write_fit_table(report: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["n", "uncond_median", "uncond_upper_quartile", "cond_median",
                     "cond_upper_quartile", "cond_count"])
        for n in report["n_grid"]:
            u = report["unconditioned"].get(str(n), {})
            c = report["conditioned"].get(str(n), {})
            wr.writerow([n, u.get("median", ""), u.get("upper_quartile", ""),
                         c.get("median", ""), c.get("upper_quartile", ""), c.get("count", 0)])


HANDLERS = {"lpp": _lpp, "rmt": _rmt, "rates": _rates, "ldp": _ldp}


class _Terminated(Exception):
    pass


def _on_sigterm(signum, frame):
    raise _Terminated()


def _interrupted(exc: BaseException) -> bool:
    """True if ``exc`` is, or wraps, an interrupt.

    A signal handler that raises while compiled code runs resurfaces as a
    SystemError whose context is the original exception.
    """
    while exc is not None:
        if isinstance(exc, (KeyboardInterrupt, _Terminated)):
            return True
        exc = exc.__cause__ or exc.__context__
    return False


def run(config: ExperimentConfig, stream=None, timestamp: str | None = None) -> int:
    """Dispatch ``config`` and write its records; returns the exit status."""
    own = stream is None
    if own:
        stream = open(config.out, "w", encoding="utf-8") if config.out else sys.stdout
    writer = RecordWriter(stream, config.as_dict(), timestamp)
    try:
        try:
            payload, rows, status = HANDLERS[config.command](config)
        except BudgetError as exc:
            writer.truncated(f"budget: {exc}", EXIT_BUDGET)
            return EXIT_BUDGET
        except ToleranceNotMet as exc:
            writer.truncated(f"tolerance: {exc}", EXIT_TOLERANCE)
            return EXIT_TOLERANCE
        except UppertailError as exc:
            writer.truncated(f"{type(exc).__name__}: {exc}", EXIT_ERROR)
            return EXIT_ERROR
        for row in rows:
            writer.trial(row)
        writer.summary(payload)
        writer.end(status)
        return status
    except BaseException as exc:
        if not _interrupted(exc):
            raise
        if not writer.closed:
            writer.truncated("interrupted", EXIT_INTERRUPTED)
        return EXIT_INTERRUPTED
    finally:
        if own and stream is not sys.stdout:
            stream.close()


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = validate(argv_to_mapping(argv))
    except ConfigError as exc:
        print(f"uppertail: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    previous = signal.signal(signal.SIGTERM, _on_sigterm)
    try:
        return run(cfg)
    finally:
        signal.signal(signal.SIGTERM, previous)


if __name__ == "__main__":
    sys.exit(main())
