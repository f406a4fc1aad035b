"""Command-line experiment runner.

Usage::

    qstbc <experiment> [--config FILE] [--seed N] [--workers N]
                       [--out PATH] [--format csv|json] [experiment flags]

Settings come from built-in defaults, then the INI file (``[DEFAULT]``
plus the section named after the experiment), then command-line flags.
A manifest ``<out>.manifest.json`` is written before the results.

Exit codes: 0 success, 2 config/usage error, 3 structural invariant
violated, 4 I/O error.
"""

import argparse
import configparser
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .analysis import (OutageConfig, bounds_experiment, eigen_stat_experiment,
                       outage_mc, outage_mutual_info)
from .channel import (alphas, decouple, matched_filter, rearrange_receive,
                      sample_channels, stack_channel)
from .codec import (build_theta, check_quasi_orthogonality, psk_constellation,
                    transmit_matrices)
from .detect import ber_experiment, equivalence_experiment
from .eigen import (build_eigenvectors, build_projectors,
                    diagonalization_residual, eigenvalues_quadratic,
                    eigenvalues_recursive, hermitian_eig_oracle, prewhitener,
                    structured_matrix)
from .errors import StructuralViolation, UsageError
from .streams import stream

__all__ = ["ExperimentConfig", "CurveRecord", "emit_curve", "read_curve",
           "emit_table", "read_table", "verify_structure", "run", "main"]

EXPERIMENTS = ("verify-structure", "eigen-stats", "outage", "omi", "bounds",
               "ber", "detect-equivalence")
CURVE_FIELDS = ("snr_db", "value", "stderr", "series")

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_IO = 0, 2, 3, 4


class ConfigError(UsageError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    nt: int = 4
    nr: int = 1
    order: int = 4
    rate: float = 2.0
    snr_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    samples: int = 100_000
    trials: int = 100
    blocks: int = 10_000
    q: float = 0.1
    k_factor: float = None
    seed: int = 0
    workers: int = 1
    out: str = None
    format: str = "csv"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: unknown kind {self.experiment!r}")
        if self.nt not in (2, 4, 8, 16):
            raise ConfigError(f"nt: must be one of 2, 4, 8, 16, got {self.nt}")
        if self.nr < 1:
            raise ConfigError(f"nr: must be >= 1, got {self.nr}")
        if not self.snr_db or not all(math.isfinite(s) for s in self.snr_db):
            raise ConfigError("snr_db: grid must be nonempty and finite")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed: must be a 64-bit unsigned integer")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format: must be csv or json, got {self.format!r}")
        for name in ("samples", "trials", "blocks", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        if self.order < 2 or self.order & (self.order - 1):
            raise ConfigError("order: must be a power of two >= 2")
        if not 0 < self.q < 1:
            raise ConfigError("q: must lie in (0, 1)")
        if self.k_factor is not None and self.k_factor < 0:
            raise ConfigError("k_factor: must be >= 0")

    def identity(self):
        """Fields that determine the results (excludes workers and paths)."""
        d = asdict(self)
        for k in ("workers", "out", "format"):
            d.pop(k)
        d["snr_db"] = list(d["snr_db"])
        return d

    def digest(self):
        blob = json.dumps(self.identity(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _parse_grid(text):
    items = [t for t in str(text).replace(",", " ").split() if t]
    return tuple(float(t) for t in items)


_CASTS = {
    "nt": int, "nr": int, "order": int, "rate": float, "snr_db": _parse_grid,
    "samples": int, "trials": int, "blocks": int, "q": float,
    "k_factor": float, "seed": int, "workers": int, "out": str, "format": str,
}


def load_config_file(path, experiment):
    """Read ``[DEFAULT]`` and ``[<experiment>]`` from an INI file."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    section = parser[experiment] if parser.has_section(experiment) \
        else parser.defaults()
    values = {}
    for key, raw in section.items():
        name = key.replace("-", "_")
        if name not in _CASTS:
            raise ConfigError(f"{path}: unknown field {key!r}")
        try:
            values[name] = _CASTS[name](raw)
        except ValueError as exc:
            raise ConfigError(f"{path}: field {key!r}: bad value {raw!r}") from exc
    return values


def build_config(experiment, file_values, flag_values):
    merged = dict(file_values)
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    return ExperimentConfig(experiment=experiment, **merged)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurveRecord:
    snr_db: float
    value: float
    stderr: float
    series: str


def _num(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _jsonable(x):
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _write_text(path, text):
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def emit_table(rows, path, fmt="csv", columns=None):
    """Write a list of flat dicts as CSV or JSON."""
    if not rows:
        raise UsageError("nothing to emit: empty record list")
    columns = list(columns or rows[0].keys())
    if fmt == "json":
        body = [{c: _jsonable(r.get(c)) for c in columns} for r in rows]
        text = json.dumps({"columns": columns, "rows": body}, indent=1) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_num(r.get(c)) for c in columns])
        text = buf.getvalue()
    else:
        raise UsageError(f"unknown format {fmt!r}")
    _write_text(path, text)


def emit_curve(records, path, fmt="csv"):
    """Write curve records with columns ``snr_db,value,stderr,series``."""
    rows = [{f: getattr(r, f) for f in CURVE_FIELDS} for r in records]
    emit_table(rows, path, fmt, CURVE_FIELDS)


def _cell(text):
    if text == "":
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_table(path, fmt="csv"):
    with open(path, encoding="utf-8") as fh:
        if fmt == "json":
            return json.load(fh)["rows"]
        return [{k: _cell(v) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def read_curve(path, fmt="csv"):
    """Inverse of :func:`emit_curve`."""
    out = []
    for row in read_table(path, fmt):
        se = row["stderr"]
        out.append(CurveRecord(snr_db=float(row["snr_db"]),
                               value=float(row["value"]),
                               stderr=None if se is None else float(se),
                               series=str(row["series"])))
    return out


def write_manifest(cfg, path):
    manifest = {"tool": "qstbc", "version": __version__,
                "experiment": cfg.experiment, "seed": cfg.seed,
                "config_sha256": cfg.digest(), "config": cfg.identity()}
    text = json.dumps(manifest, indent=1, sort_keys=True) + "\n"
    if path is None:
        return
    _write_text(path + ".manifest.json", text)


# ---------------------------------------------------------------------------
# structure verification
# ---------------------------------------------------------------------------

def verify_structure(n_t, trials=100, seed=0):
    """Residuals of every structural identity at one antenna count.

    Returns rows ``{check, residual, threshold, passed}``; raises
    :class:`StructuralViolation` naming the first failing identity.
    """
    rng = stream(seed, "verify-structure", n_t)
    n = n_t // 2
    n_r = 2
    h = sample_channels(n_t, n_r, trials, rng)
    x = rng.standard_normal((trials, n_t)) + 1j * rng.standard_normal((trials, n_t))
    rows = []

    def add(name, value, threshold):
        rows.append({"check": name, "residual": float(value),
                     "threshold": threshold,
                     "passed": bool(value < threshold)})

    add("quasi_orthogonality",
        max(check_quasi_orthogonality(n_t, xi) for xi in x), 1e-12 * n_t)
    y = transmit_matrices(x) @ h
    hp = stack_channel(h)
    yp = rearrange_receive(y)
    add("rearranged_receive", np.abs(yp - (hp @ x[..., None])[..., 0]).max()
        / max(1.0, np.abs(yp).max()), 1e-12)
    h2, _ = matched_filter(hp)
    eq = decouple(h2)
    a = alphas(h)
    add("alpha_extraction", np.abs(a - alphas(h, "extract")).max()
        / a[:, 0].max(), 1e-12)
    add("structured_htilde", np.abs(eq.htilde - np.stack(
        [structured_matrix(ai) for ai in a])).max() / a[:, 0].max(), 1e-12)
    v = build_eigenvectors(n)
    add("eigenvector_unitarity", np.abs(v.conj().T @ v - np.eye(n)).max(), 1e-12)
    add("diagonalization", max(diagonalization_residual(m, v)
                               for m in eq.htilde), 1e-10)
    mu_rec = eigenvalues_recursive(a) * (2.0 / n_t)
    mu_quad = eigenvalues_quadratic(h)
    vals, _ = hermitian_eig_oracle(eq.htilde)
    mu_jac = np.sort(vals, axis=-1) * (2.0 / n_t)
    scale = a[:, :1] * (2.0 / n_t)
    add("eigen_quadratic_vs_recursive",
        np.max(np.abs(mu_quad - mu_rec) / scale), 1e-9)
    add("eigen_recursive_vs_jacobi",
        np.max(np.abs(np.sort(mu_rec, axis=-1) - mu_jac) / scale), 1e-9)
    fam = build_projectors(n_t).matrices
    ident = [np.abs(p - p.conj().T).max() for p in fam]
    ident += [np.abs(p @ p - p).max() for p in fam]
    ident += [abs(np.trace(p) - 2) for p in fam]
    ident += [np.abs(fam[j] @ fam[k]).max()
              for j in range(len(fam)) for k in range(len(fam)) if j != k]
    if n_t >= 4:
        th = np.kron(np.eye(2), build_theta(n_t))
        ident += [np.abs(th @ p @ th - p).max() for p in fam]
    add("projector_algebra", max(ident), 1e-12)
    f, _ = prewhitener(eq)
    w = f @ eq.htilde @ np.conj(np.swapaxes(f, -1, -2))
    add("whitening", np.abs(w - np.eye(n)).max(), 1e-10)
    for r in rows:
        if not r["passed"]:
            raise StructuralViolation(r["check"],
                                      f"residual {r['residual']:.3e}")
    return rows


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def _outage_cfg(cfg):
    return OutageConfig(n_t=cfg.nt, n_r=cfg.nr, rate=cfg.rate,
                        snr_db=cfg.snr_db, n_samples=cfg.samples,
                        seed=cfg.seed, q=cfg.q, workers=cfg.workers)


def _run_experiment(cfg):
    """Returns ``(rows, columns)`` for the configured experiment."""
    kind = cfg.experiment
    if kind == "verify-structure":
        return verify_structure(cfg.nt, cfg.trials, cfg.seed), None
    if kind == "eigen-stats":
        rep = eigen_stat_experiment(cfg.nt, cfg.nr, cfg.samples, cfg.seed,
                                    k_factor=cfg.k_factor,
                                    workers=cfg.workers)
        nc = rep.extras["noncentrality"]
        rows = [{"index": j + 1, "ks": ks, "noncentrality": float(nc[j]),
                 "max_abs_corr": rep.max_abs_corr}
                for j, ks in enumerate(rep.ks)]
        return rows, None
    if kind == "outage":
        oc = _outage_cfg(cfg)
        return [CurveRecord(s, p, se, "mc") for s, (p, se)
                in zip(oc.snr_db, outage_mc(oc))], CURVE_FIELDS
    if kind == "omi":
        recs = []
        for r in outage_mutual_info(_outage_cfg(cfg)):
            recs.append(CurveRecord(r.snr_db, r.omi_q, r.omi_q_stderr, "qstbc"))
            recs.append(CurveRecord(r.snr_db, r.omi_mimo, r.omi_mimo_stderr,
                                    "mimo"))
        return recs, CURVE_FIELDS
    if kind == "bounds":
        recs = []
        for r in bounds_experiment(_outage_cfg(cfg)):
            recs.append(CurveRecord(r.snr_db, r.mc, r.mc_stderr, "mc"))
            recs.append(CurveRecord(r.snr_db, r.lower, None, "lower"))
            if r.upper is not None:
                recs.append(CurveRecord(r.snr_db, r.upper, r.upper_stderr,
                                        "upper"))
            if r.k0_approx is not None:
                recs.append(CurveRecord(r.snr_db, r.k0_approx, None,
                                        "k0_approx"))
        return recs, CURVE_FIELDS
    if kind == "ber":
        recs = ber_experiment(cfg.nt, cfg.nr, psk_constellation(cfg.order),
                              cfg.snr_db, cfg.blocks, cfg.seed,
                              workers=cfg.workers)
        return [CurveRecord(r.snr_db, r.ber, r.stderr, "linear")
                for r in recs], CURVE_FIELDS
    if kind == "detect-equivalence":
        recs = equivalence_experiment(
            cfg.nt, cfg.nr, psk_constellation(cfg.order), cfg.snr_db,
            cfg.trials, cfg.seed, unsplit=(cfg.order ** cfg.nt <= 256),
            workers=cfg.workers)
        return [asdict(r) for r in recs], None
    raise ConfigError(f"experiment: unknown kind {kind!r}")  # pragma: no cover


def run(cfg):
    """Execute one configured experiment and write manifest and results."""
    write_manifest(cfg, cfg.out)
    rows, columns = _run_experiment(cfg)
    if columns == CURVE_FIELDS:
        emit_curve(rows, cfg.out, cfg.format)
    else:
        emit_table(rows, cfg.out, cfg.format, columns)
    return rows


def _add_flags(p):
    g = p.add_argument_group("common")
    g.add_argument("--config", help="INI file with [DEFAULT]/[experiment]")
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--out", help="result file (stdout when omitted)")
    g.add_argument("--format", choices=("csv", "json"))
    e = p.add_argument_group("experiment")
    e.add_argument("--nt", type=int)
    e.add_argument("--nr", type=int)
    e.add_argument("--order", type=int, help="PSK order")
    e.add_argument("--rate", type=float, help="target rate R, bit/s/Hz")
    e.add_argument("--snr-db", dest="snr_db", type=float, nargs="+")
    e.add_argument("--samples", type=int)
    e.add_argument("--trials", type=int)
    e.add_argument("--blocks", type=int)
    e.add_argument("--q", type=float, help="outage level for omi")
    e.add_argument("--k-factor", dest="k_factor", type=float)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="qstbc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="experiment", required=True,
                                parser_class=_Parser)
    for name in EXPERIMENTS:
        _add_flags(sub.add_parser(name))
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        flags = {k: v for k, v in vars(args).items()
                 if k not in ("experiment", "config")}
        if flags.get("snr_db") is not None:
            flags["snr_db"] = tuple(flags["snr_db"])
        file_values = (load_config_file(args.config, args.experiment)
                       if args.config else {})
        cfg = build_config(args.experiment, file_values, flags)
        run(cfg)
    except StructuralViolation as exc:
        print(f"qstbc: invariant violated: {exc.invariant}: {exc}",
              file=sys.stderr)
        return EXIT_INVARIANT
    except UsageError as exc:
        print(f"qstbc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"qstbc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
