"""Command-line front end.

Exit codes: 0 success, 1 a validation check failed, 2 configuration or
usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from dataclasses import replace
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from . import audio_dsp, audio_ranging, episode, propagation, simulator, validation
from .config import RunConfig, load, parse_floats
from .errors import ConfigError, ContactClassError

log = logging.getLogger("contactclass")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def fnum(v: float) -> str:
    """Locale-free, run-to-run stable float text."""
    return repr(float(v)) if v != 0 else "0.0"


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _write(out_dir: str, name: str, text: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    log.info("wrote %s", path)
    return path


# tables ---------------------------------------------------------------------


def table3_rows(rc: RunConfig):
    for r in rc.table3_ratios:
        row = [r]
        for x0 in rc.table3_x0_values:
            row.append(fnum(episode.solve_pfa_target(rc.k_y, r * x0, x0, rc.target)))
        row.append(fnum(episode.large_x0_limit(r)))
        yield row


def table4_rows(rc: RunConfig):
    for n in rc.table4_n_values:
        yield [n, fnum(episode.crowd_pi_md_lognormal(rc.lognormal_md, rc.propagation, rc.crowd, n))]


def table5_rows(rc: RunConfig):
    rows = episode.performance_table(rc.lognormal_md, rc.propagation, rc.crowd, rc.n_values, rc.x0_values, rc.lognormal_fa)
    for r in rows:
        yield [r.n, r.x0, fnum(r.pi_md_av), fnum(r.reduction), fnum(r.p_fa), f"{r.rate.numerator}/{r.rate.denominator}", fnum(float(r.rate))]


def cmd_tables(rc: RunConfig, args) -> int:
    h3 = ["ratio_y_over_x0"] + [f"pi_fa_x0_{x0}" for x0 in rc.table3_x0_values] + ["pi_fa_large_x0_limit"]
    _write(rc.out, "table3_pfa_targets.csv", _csv_text(h3, table3_rows(rc)))
    _write(rc.out, "table4_pi_md_av.csv", _csv_text(["n", "pi_md_av"], table4_rows(rc)))
    h5 = ["n", "x0", "pi_md_av", "reduction_x0_pi_md", "p_fa", "rho_per_s_fraction", "rho_per_s"]
    _write(rc.out, "table5_performance.csv", _csv_text(h5, table5_rows(rc)))
    return EXIT_OK


# curves ---------------------------------------------------------------------

FIG2_GRID = [0.01 * i for i in range(1, 201)]
AUDIO_GRID = [1.0 + 0.005 * i for i in range(200)]


def bluetooth_curve_rows(rc: RunConfig):
    cfg = rc.propagation
    for d in FIG2_GRID:
        yield [
            fnum(d),
            fnum(propagation.pi_md_rice(rc.rice, cfg, 1, d)),
            fnum(propagation.pi_md_rice(rc.rice, cfg, 60, d)),
            fnum(propagation.pi_md_lognormal(rc.lognormal_md, cfg, 1, d)),
            fnum(propagation.pi_md_lognormal(rc.lognormal_md, cfg, 60, d)),
        ]


def audio_curve_rows(rc: RunConfig):
    d_c = rc.propagation.critical_distance
    s = rc.audio_sigma
    for d in AUDIO_GRID:
        yield [fnum(d), fnum(audio_ranging.pi_md_audio(s, d_c, d)), fnum(audio_ranging.pi_fa_audio(s, d_c, d_c * d_c / d))]


def cmd_curves(rc: RunConfig, args) -> int:
    h2 = ["d_m", "pi_md_rice_n1", "pi_md_rice_n60", "pi_md_lognormal_n1", "pi_md_lognormal_n60"]
    _write(rc.out, "fig2_pi_md_bluetooth.csv", _csv_text(h2, bluetooth_curve_rows(rc)))
    _write(rc.out, "fig5_audio.csv", _csv_text(["d_m", "pi_md_audio", "pi_fa_audio_at_dc2_over_d"], audio_curve_rows(rc)))
    return EXIT_OK


# validate -------------------------------------------------------------------


def cmd_validate(rc: RunConfig, args) -> int:
    checks = validation.run_all(rc)
    text = validation.report_csv(checks)
    _write(rc.out, "validate_report.csv", text)
    sys.stdout.write(text)
    return EXIT_CHECK if validation.failed(checks) else EXIT_OK


# protocol -------------------------------------------------------------------


def cmd_protocol(rc: RunConfig, args) -> int:
    positions = rc.positions
    if len(positions) < 2:
        raise ConfigError("the protocol needs at least 2 devices")
    rng = None
    if rc.max_delay > 0 or rc.timestamp_noise > 0:
        rng = simulator.stream(rc.require_seed(), 0)
    profiles = []
    for _ in positions:
        if rng is not None and rc.max_delay > 0:
            tx, rx = rng.uniform(0.0, rc.max_delay, 2)
            profiles.append(audio_ranging.DeviceTimingProfile(tx, rx, clock_offset=float(rng.uniform(0.0, 10.0))))
        else:
            profiles.append(audio_ranging.DeviceTimingProfile())
    res = audio_ranging.simulate_network(positions, profiles, rc.audio, timestamp_noise=rc.timestamp_noise, rng=rng)
    _write(rc.out, "protocol_transcript.csv", res.transcript_csv())
    _write(rc.out, "protocol_deltas.csv", res.deltas_csv())
    _write(rc.out, "protocol_distances.csv", res.distances_csv())
    sys.stdout.write(f"devices {res.schedule.k}, cycle {res.schedule.cycle_seconds:.3f} s, {len(res.deltas)} exchanged values\n")
    for (i, j), d in sorted(res.distances.items()):
        sys.stdout.write(f"{i}-{j}: {d:.3f} m\n")
    for (i, j), v in sorted(res.deltas.items()):
        sys.stdout.write(f"dt[{i}<-{j}] = {v:.9f} s\n")
    return EXIT_OK


# dsp ------------------------------------------------------------------------


def cmd_dsp_experiment(rc: RunConfig, args) -> int:
    seed = rc.require_seed()
    summary = []
    per_trial = []
    for k, db in enumerate(rc.esn0_values):
        exp = audio_dsp.variance_experiment(rc.audio, db, rc.dsp_trials, seed + k, rc.window_chips)
        summary.append(
            [fnum(db), rc.dsp_trials, fnum(exp.acquisition_rate), fnum(exp.mean_error), fnum(exp.std_error), fnum(exp.predicted_std_chips), fnum(exp.std_ratio)]
        )
        per_trial.extend([fnum(db), i, "" if not np.isfinite(e) else fnum(e)] for i, e in enumerate(exp.errors_chips))
        sys.stdout.write(f"E/N0 {db:g} dB: std {exp.std_error:.4f} Tc (model {exp.predicted_std_chips:.4f} Tc), acquired {exp.acquisition_rate:.3f}\n")
    h = ["esn0_dB", "trials", "acquisition_rate", "mean_error_Tc", "std_error_Tc", "model_std_Tc", "std_ratio"]
    _write(rc.out, "dsp_experiment.csv", _csv_text(h, summary))
    _write(rc.out, "dsp_errors.csv", _csv_text(["esn0_dB", "trial", "error_Tc"], per_trial))
    return EXIT_OK


COMMANDS = {
    "tables": cmd_tables,
    "curves": cmd_curves,
    "validate": cmd_validate,
    "protocol": cmd_protocol,
    "dsp-experiment": cmd_dsp_experiment,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="contactclass", description="Contact classification statistics, tables and simulations.")
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI configuration file")
    common.add_argument("--seed", type=int, help="seed for stochastic commands")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--trials", type=int, help="Monte Carlo trials")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("tables", parents=[common], help="performance tables as CSV")
    sub.add_parser("curves", parents=[common], help="error-probability curves as CSV")
    sub.add_parser("validate", parents=[common], help="closed forms against Monte Carlo and enumeration")
    pp = sub.add_parser("protocol", parents=[common], help="networked two-way ranging cycle")
    pp.add_argument("--positions", help="comma-separated device positions in m")
    sub.add_parser("dsp-experiment", parents=[common], help="delay-estimator variance experiment")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = {"seed": args.seed, "out": args.out, "trials": args.trials}
        rc = load(args.config, overrides)
        if getattr(args, "positions", None):
            rc = replace(rc, positions=parse_floats(args.positions, "positions"))
        return COMMANDS[args.command](rc, args)
    except ConfigError as exc:
        sys.stderr.write(f"contactclass: configuration error: {exc}\n")
        return EXIT_CONFIG
    except OSError as exc:
        sys.stderr.write(f"contactclass: I/O error: {exc}\n")
        return EXIT_IO
    except ContactClassError as exc:
        sys.stderr.write(f"contactclass: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
