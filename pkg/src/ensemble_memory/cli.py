"""Command-line scenario runner.

Exit codes: 0 success, 1 invalid input or configuration, 2 solver or
oracle failure. Every output file is written atomically.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from .calibrate import calibrate, parse_targets
from .core import ConfigError, ExperimentConfig, SolverError, config_to_json, load_config, validate
from .oracle import exact_joint, tv_distance, z_scores
from .retrieval import apply_storage_decay, retrieve_finite_depth, retrieve_ideal
from .sampler import COLUMNS, TrialBatch, prepare, run_batch
from .stats import conditional_g2, conditional_mean, mandel_q, normalized_variance, summarize
from .write import gain_for_mode_mean, spin_profile, stokes_flux

HEADERS = {
    "simulate": ["trial", "s1", "s2", "as1", "as2"],
    "figure2a": ["t_us", "flux_per_us"],
    "figure2b": ["t_us", "flux_per_us"],
    "figure2c": ["coupling", "fwhm_us", "total_photons"],
    "figure3": ["tau_d_us", "V", "V_err", "mean_as"],
    "figure4": ["n_s", "g2", "g2_err", "mean_as", "Q"],
}
LATENT_COLUMNS = ["true_stokes", "true_spin", "retrieved"]
TV_LIMIT = 1e-2
Z_LIMIT = 3.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def atomic_write(path: str | Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _floats(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from exc
    if not values:
        raise UsageError("empty list")
    return values


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(rng_seed=args.seed)
    validate(cfg)
    print(config_to_json(cfg), file=sys.stderr)
    return cfg


def _fmt(x: float) -> str:
    return f"{x:g}"


# -- subcommands -------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    batch = run_batch(cfg, args.trials, workers=args.workers)
    header = HEADERS["simulate"] + (LATENT_COLUMNS if args.debug_latent else [])
    cols = [np.arange(len(batch))] + [getattr(batch, c) for c in header[1:]]
    atomic_write(args.out, _csv_text(header, zip(*(c.tolist() for c in cols))))
    return 0


def _read_counts(path: str) -> TrialBatch:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"s1", "s2", "as1", "as2"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        rows = list(reader)
    data = {c: np.array([int(r[c]) for r in rows], dtype=np.int64) for c in ("s1", "s2", "as1", "as2")}
    batch = TrialBatch.from_counts(data["s1"], data["s2"], data["as1"], data["as2"])
    if rows and all(c in rows[0] for c in LATENT_COLUMNS):
        for c in LATENT_COLUMNS:
            setattr(batch, c, np.array([int(r[c]) for r in rows], dtype=np.int64))
    return batch


def cmd_analyze(args) -> int:
    batch = _read_counts(args.counts)
    if args.config:
        batch.config = validate(_resolve_config(args))
    summary = summarize(batch)
    atomic_write(args.out, json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n")
    return 0


def cmd_figure2a(args) -> int:
    cfg = _resolve_config(args)
    rates = _floats(args.rates) if args.rates else [cfg.single_atom_rate]
    out = Path(args.out)
    for rate in rates:
        pulse = stokes_flux(validate(cfg.replace(single_atom_rate=rate)), bins=args.bins)
        rows = zip(pulse.times.tolist(), pulse.flux.tolist())
        atomic_write(out / f"figure2a_rate_{_fmt(rate)}.csv", _csv_text(HEADERS["figure2a"], rows))
    return 0


def _figure2b_profile(cfg: ExperimentConfig, n_spin: float):
    # Write rate chosen so the stored spin wave holds n_spin excitations.
    gain = gain_for_mode_mean(n_spin / cfg.mode_count)
    xi = gain / cfg.write_duration
    cfg = cfg.replace(single_atom_rate=xi / cfg.optical_depth)
    profile = spin_profile(validate(cfg))
    return cfg, apply_storage_decay(profile, cfg.decoherence_rate, cfg.delay)


def _retrieve(cfg: ExperimentConfig, profile, coupling: float):
    if cfg.retrieval_model == "ideal":
        return retrieve_ideal(profile, coupling)
    return retrieve_finite_depth(profile, validate(cfg), coupling)


def cmd_figure2b(args) -> int:
    cfg, profile = _figure2b_profile(_resolve_config(args), args.n_spin)
    couplings = _floats(args.couplings)
    out = Path(args.out)
    for k in couplings:
        pulse = _retrieve(cfg, profile, k).antistokes_flux
        rows = zip(pulse.times.tolist(), pulse.flux.tolist())
        atomic_write(out / f"figure2b_coupling_{_fmt(k)}.csv", _csv_text(HEADERS["figure2b"], rows))
    return 0


def cmd_figure2c(args) -> int:
    cfg, profile = _figure2b_profile(_resolve_config(args), args.n_spin)
    rows = []
    for k in _floats(args.couplings):
        result = _retrieve(cfg, profile, k)
        rows.append((k, result.fwhm, result.retrieved))
    atomic_write(args.out, _csv_text(HEADERS["figure2c"], rows))
    return 0


def cmd_figure3(args) -> int:
    cfg = _resolve_config(args)
    first = prepare(cfg)
    rows = []
    for tau in _floats(args.taus):
        if tau < 0:
            raise ValueError(f"delay must be >= 0, got {tau}")
        # Retrieval efficiency does not depend on the delay; reuse it.
        model = prepare(cfg.replace(delay=tau), first.retrieval_efficiency)
        batch = run_batch(model, args.trials, workers=args.workers)
        v = normalized_variance(batch)
        rows.append((tau, v.value, v.stderr, float(batch.antistokes.mean())))
    atomic_write(args.out, _csv_text(HEADERS["figure3"], rows))
    return 0


def cmd_figure4(args) -> int:
    cfg = _resolve_config(args)
    batch = run_batch(cfg, args.trials, workers=args.workers)
    rows = []
    for n_s in range(args.max_ns + 1):
        if not np.any(batch.stokes == n_s):
            continue
        g2 = conditional_g2(batch, n_s)
        rows.append((n_s, g2.value, g2.stderr, conditional_mean(batch, n_s).value, mandel_q(batch, n_s).value))
    atomic_write(args.out, _csv_text(HEADERS["figure4"], rows))
    return 0


def cmd_oracle_check(args) -> int:
    cfg = _resolve_config(args)
    model = prepare(cfg)
    dist = exact_joint(model, args.n_max)
    batch = run_batch(model, args.trials, workers=args.workers)
    tv = tv_distance(dist, batch)
    ok = tv < TV_LIMIT
    print(f"tv_distance {tv:.3e} (limit {TV_LIMIT:g})")
    for z in z_scores(dist, batch):
        flag = abs(z.z) < Z_LIMIT
        ok &= flag
        print(f"{z.name:<16} exact {z.exact:+.6f}  mc {z.estimate:+.6f} ± {z.stderr:.6f}  z {z.z:+.2f}{'' if flag else '  FAIL'}")
    print("PASS" if ok else "FAIL")
    return 0 if ok else 2


def cmd_calibrate(args) -> int:
    cfg = _resolve_config(args)
    result = calibrate(cfg, parse_targets(args.targets))
    text = config_to_json(result.config) + "\n"
    for key, value in result.achieved.items():
        print(f"{key} = {value:.6g}", file=sys.stderr)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ensemble-memory", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, trials=False, out_required=True, seed=True):
        p.add_argument("--config", help="flat JSON config; defaults apply for a missing file argument")
        if seed:
            p.add_argument("--seed", type=int, help="override rng_seed")
        if trials:
            p.add_argument("--trials", type=_positive_int, required=True)
            p.add_argument("--workers", type=_positive_int, default=1)
        p.add_argument("--out", required=out_required)
        return p

    p = common(sub.add_parser("simulate", help="sample trials, write counts CSV"), trials=True)
    p.add_argument("--debug-latent", action="store_true", help="also write latent photon numbers")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="estimators from a counts CSV")
    p.add_argument("counts")
    p.add_argument("--config", help="config used to compute zeta")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = common(sub.add_parser("figure2a", help="Stokes flux for a sweep of write rates"), seed=False)
    p.add_argument("--rates", help="comma-separated single_atom_rate values (us^-1)")
    p.add_argument("--bins", type=_positive_int, default=160)
    p.set_defaults(func=cmd_figure2a)

    for name, help_text, func in (
        ("figure2b", "anti-Stokes pulse per retrieve coupling", cmd_figure2b),
        ("figure2c", "pulse width and photon number vs coupling", cmd_figure2c),
    ):
        p = common(sub.add_parser(name, help=help_text), seed=False)
        p.add_argument("--couplings", default="0.05,0.1,0.2,0.4,0.8")
        p.add_argument("--n-spin", type=float, default=3.0, help="stored excitations")
        p.set_defaults(func=func)

    p = common(sub.add_parser("figure3", help="V and mean anti-Stokes number vs delay"), trials=True)
    p.add_argument("--taus", default="0,1,2,4,6")
    p.set_defaults(func=cmd_figure3)

    p = common(sub.add_parser("figure4", help="conditional anti-Stokes statistics vs n_S"), trials=True)
    p.add_argument("--max-ns", type=int, default=4)
    p.set_defaults(func=cmd_figure4)

    p = common(sub.add_parser("oracle-check", help="Monte Carlo vs exact distribution"), trials=True, out_required=False)
    p.add_argument("--n-max", type=_positive_int, default=30)
    p.set_defaults(func=cmd_oracle_check)

    p = common(sub.add_parser("calibrate", help="fit instrument parameters to targets"), out_required=False, seed=False)
    p.add_argument("--targets", required=True, help="e.g. ns=1.06,nas=0.36,V=0.942[,zeta=0.3,retrieval=0.3]")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
