"""Command-line entry point: ``mstnhp simulate|train|eval|ingest``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.

Kernel configs are either a preset name (``biv1`` .. ``biv4``, ``compare``) or
an INI file::

    [model]
    family = separable      ; separable | biv4 | temporal
    K = 2
    T = 100

    [domain]
    kind = rectangle
    x = 0, 1
    y = 0, 1

    [params]
    mu = 0.1, 0.1
    alpha = 0.25, 0.1,
            0.1, 0.25       ; matrices row-major, K*K entries
    beta = 0.3, 0.3, 0.3, 0.3
    sigma2 = 0.5, 0.5, 0.5, 0.5
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as dt
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import dataio, evaluation as ev
from .core import UNIT_SQUARE, DomainError, Polygon, RandomStream, SequenceError, domain_from_dict
from .ctlstm import ModelConfig, NeuralHawkes
from .kernels import PRESETS, spec_from_dict
from .likelihood import MCConfig, TrainConfig, TrainingError, dataset_loglik, train
from .simulate import SimulationError, collapse_to_temporal, make_dataset

log = logging.getLogger("mstnhp")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
DEFAULT_T = 100.0
SPLIT_NAMES = ("train", "valid", "test")


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config parsing


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace("\n", ",").split(",") if x.strip()]


def load_kernel_config(ref: str):
    """``(spec, domain, T, config_dict)`` for a preset name or an INI file path."""
    name = ref.lower()
    if name in PRESETS:
        spec = PRESETS[name]
        domain = UNIT_SQUARE if spec.spatial else None
        cfg = {"preset": name, "spec": spec.to_dict(), "T": DEFAULT_T,
               "domain": None if domain is None else domain.to_dict()}
        return spec, domain, DEFAULT_T, cfg
    path = Path(ref)
    if not path.is_file():
        raise ConfigError(f"unknown kernel config {ref!r}: not a preset or a file")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read(path)
        fam = cp.get("model", "family").strip().lower()
        T = cp.getfloat("model", "T", fallback=DEFAULT_T)
        d = {"family": fam, "K": cp.getint("model", "K", fallback=2)}
        if cp.has_section("params"):
            for key, val in cp.items("params"):
                d[key] = _floats(val)
        if fam not in ("separable", "biv4", "temporal"):
            raise ConfigError(f"unknown kernel family {fam!r}")
        spec = spec_from_dict(d)
        domain = None
        if spec.spatial:
            if cp.has_section("domain"):
                kind = cp.get("domain", "kind", fallback="rectangle").strip()
                if kind == "rectangle":
                    dd = {"kind": kind, "x": _floats(cp.get("domain", "x")),
                          "y": _floats(cp.get("domain", "y"))}
                else:
                    v = _floats(cp.get("domain", "vertices"))
                    dd = {"kind": kind, "vertices": [v[i:i + 2] for i in range(0, len(v), 2)]}
                domain = domain_from_dict(dd)
            else:
                domain = UNIT_SQUARE
    except ConfigError:
        raise
    except (configparser.Error, KeyError, ValueError, DomainError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    cfg = {"file": str(path), "spec": spec.to_dict(), "T": T,
           "domain": None if domain is None else domain.to_dict()}
    return spec, domain, T, cfg


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _parse_split(text: str, n: int):
    try:
        parts = tuple(int(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError(f"invalid split {text!r}") from None
    if len(parts) != 3 or any(p < 0 for p in parts) or sum(parts) != n:
        raise ConfigError(f"split {text!r} does not partition {n} sequences")
    return parts


def _parse_list(text: Optional[str], cast=float):
    if text is None:
        return None
    try:
        return [cast(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"invalid list {text!r}") from None


def _manifest(command: str, args: argparse.Namespace, **extra) -> dict:
    from . import __version__
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    return {"command": command, "flags": flags, "code_version": __version__, **extra}


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    spec, domain, T, cfg = load_kernel_config(args.config)
    split = _parse_split(args.split, args.n_seqs)
    rng = RandomStream(args.seed)
    parts = make_dataset(spec, args.n_seqs, split, rng, T=T, domain=domain)
    out = dataio.ensure_dir(args.out)
    for name, seqs in zip(SPLIT_NAMES, parts):
        dataio.write_dataset(out / f"{name}.jsonl", seqs)
    counts = {name: {"sequences": len(s), "events": int(sum(len(q) for q in s))}
              for name, s in zip(SPLIT_NAMES, parts)}
    dataio.write_json(out / "manifest.json", _manifest(
        "simulate", args, kernel=cfg, config_hash=_config_hash(cfg), seed=args.seed, counts=counts))
    print(json.dumps(counts))
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _load_split(data: Path, name: str, required: bool = True):
    path = data / f"{name}.jsonl"
    if not path.exists():
        if required:
            raise DataError(f"missing {path}")
        return []
    return dataio.read_dataset(path)


def _infer_K(seqs) -> int:
    ks = [s.K for s in seqs if s.K is not None]
    if ks:
        return max(ks)
    return max((int(s.types.max()) for s in seqs if len(s)), default=1)


def _domain_of(seqs):
    for s in seqs:
        if s.domain is not None:
            return s.domain
    return None


def cmd_train(args) -> int:
    data = Path(args.data)
    tr = _load_split(data, "train")
    va = _load_split(data, "valid", required=False)
    if not tr:
        raise DataError("training split is empty")
    spatial_data = any(s.is_spatial for s in tr)
    if args.model == "mtnhp" and spatial_data:
        if not args.collapse:
            raise ConfigError("mtnhp on spatial data requires --collapse")
        tr = [collapse_to_temporal(s) for s in tr]
        va = [collapse_to_temporal(s) for s in va]
    if args.model == "mstnhp" and not spatial_data:
        raise DataError("mstnhp needs spatial sequences")
    K = args.K or _infer_K(tr + va)
    cfg = ModelConfig(args.model, K, args.hidden, args.embed)
    rng = RandomStream(args.seed)
    model = NeuralHawkes.initialize(cfg, rng.spawn(0), _domain_of(tr) if cfg.spatial else None)
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch, lr=args.lr,
                       patience=args.patience, threads=args.threads)
    res = train(model, tr, va, tcfg, MCConfig(mult=args.mc_mult), rng.spawn(1))
    history = [dict(r, wall_seconds=r["wall_seconds"] if args.wall_clock else None)
               for r in res.history]
    ckpt = Path(args.out)
    if ckpt.parent != Path(""):
        ckpt.parent.mkdir(parents=True, exist_ok=True)
    dataio.save_checkpoint(ckpt, res.model, history, res.best_epoch)
    hist_path = ckpt.with_name(ckpt.stem + ".history.csv")
    with open(hist_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_ll", "valid_ll", "wall_seconds"])
        for r in history:
            w.writerow([r["epoch"], repr(r["train_ll"]), repr(r["valid_ll"]),
                        "" if r["wall_seconds"] is None else repr(r["wall_seconds"])])
    dataio.write_json(ckpt.with_name(ckpt.stem + ".manifest.json"),
                      _manifest("train", args, model=cfg.to_dict(), seed=args.seed))
    print(f"best_epoch {res.best_epoch} valid_loglik {res.best_valid!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _parse_grid(text: str):
    vals = _parse_list(text, int)
    if not vals or len(vals) != 2 or min(vals) < 2:
        raise ConfigError(f"--grid needs nx,ny >= 2, got {text!r}")
    return vals


def cmd_eval(args) -> int:
    try:
        model, _, header = dataio.load_checkpoint(args.ckpt)
    except dataio.CheckpointError as exc:
        raise DataError(str(exc)) from None
    seqs = dataio.read_dataset(args.data)
    if not seqs:
        raise DataError("no sequences to evaluate")
    truth = None
    if args.truth:
        truth, _, _, _ = load_kernel_config(args.truth)
        if truth.K != model.config.K:
            raise ConfigError(f"truth has K={truth.K}, model has K={model.config.K}")
    orig = seqs
    if not model.config.spatial:
        seqs = [collapse_to_temporal(s) if s.is_spatial else s for s in seqs]
    elif any(not s.is_spatial for s in seqs):
        raise DataError("spatial model needs spatial sequences")
    nx, ny = _parse_grid(args.grid)
    times = _parse_list(args.times)
    out = dataio.ensure_dir(args.out) if args.out else None

    if args.what == "loglik":
        total, per = dataset_loglik(model, seqs, MCConfig(mult=args.mc_mult),
                                    RandomStream(args.seed))
        print(f"total {total!r} per_event {per!r}")
        if out:
            dataio.write_json(out / "loglik.json", {"total": total, "per_event": per})
        return EXIT_OK

    if out is None:
        raise ConfigError("--out is required for this --what")
    K = model.config.K
    if args.what in ("curves", "metrics"):
        rows = []
        for i, (seq, raw) in enumerate(zip(seqs, orig)):
            grid = np.asarray(times) if times else np.linspace(0.0, seq.T, 512)
            fit = ev.temporal_curve(model, seq, grid, nx, ny)
            if args.what == "curves":
                ev.write_curve_csv(out / f"curve_seq{i:03d}.csv", grid, fit)
                continue
            if truth is None:
                raise ConfigError("--what metrics needs --truth")
            true = ev.temporal_curve(truth, raw, grid, nx, ny)
            for k in range(K):
                rmse, corr = ev.recovery_metrics(fit[:, k], true[:, k])
                rows.append((i, k + 1, rmse, corr))
        if rows:
            with open(out / "metrics.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["sequence", "type", "rmse", "corr"])
                for i, k, rmse, corr in rows:
                    w.writerow([i, k, repr(rmse), "" if corr is None else repr(corr)])
                    print(f"seq {i} type {k} rmse {rmse:.6g} corr "
                          f"{'nan' if corr is None else format(corr, '.4f')}")
        return EXIT_OK

    if not model.config.spatial:
        raise ConfigError("maps need a spatio-temporal model")
    if args.what == "maps":
        ts = times or [seqs[0].T]
        for i, seq in enumerate(seqs):
            for t in ts:
                if not 0.0 <= t <= seq.T:
                    raise ConfigError(f"time {t} outside [0, {seq.T}]")
                m = ev.spatial_map(model, seq, t, nx, ny)
                for k in range(K):
                    ev.write_map_csv(out / f"map_seq{i:03d}_t{t:g}_type{k + 1}.csv", m[k],
                                     seq.domain)
        return EXIT_OK
    # cummaps
    horizons = _parse_list(args.horizons) or [seqs[0].T]
    for i, seq in enumerate(seqs):
        for tau in horizons:
            if tau > seq.T:
                raise ConfigError(f"horizon {tau} beyond T={seq.T}")
            m = ev.cumulative_mean_map(model, seq, tau, nx, ny, times=times)
            for k in range(K):
                ev.write_map_csv(out / f"cummap_seq{i:03d}_tau{tau:g}_type{k + 1}.csv", m[k],
                                 seq.domain)
    return EXIT_OK


# ---------------------------------------------------------------------------
# ingest


def _parse_years(text: str) -> list[int]:
    try:
        a, b = (int(x) for x in text.split(".."))
    except ValueError:
        raise ConfigError(f"--years expects a..b, got {text!r}") from None
    if b < a:
        raise ConfigError("--years range is empty")
    return list(range(a, b + 1))


def cmd_ingest(args) -> int:
    events = dataio.read_raw_events(args.raw)
    lonlat = np.array([[e.lon, e.lat] for e in events], dtype=float).reshape(-1, 2)
    if args.bbox:
        bbox = _parse_list(args.bbox)
        if len(bbox) != 4:
            raise ConfigError("--bbox needs lon_min,lon_max,lat_min,lat_max")
    elif args.auto_bbox:
        bbox = dataio.auto_bbox(lonlat)
    else:
        raise ConfigError("one of --bbox or --auto-bbox is required")
    try:
        pts, tr = dataio.normalize_coordinates(lonlat, bbox)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    keep = np.ones(len(events), dtype=bool)
    # events outside the box would leave the normalised square
    keep &= np.asarray(dataio.NORMALIZED_SQUARE.contains(pts), dtype=bool).reshape(-1)
    outside_box = int((~keep).sum())
    rejected = 0
    if args.polygon:
        try:
            with open(args.polygon) as fh:
                verts = json.load(fh)
            verts = verts["vertices"] if isinstance(verts, dict) else verts
            poly = Polygon(tuple(tuple(tr.forward(v).tolist()) for v in verts))
        except (OSError, json.JSONDecodeError, KeyError, TypeError, DomainError) as exc:
            raise ConfigError(f"bad polygon file: {exc}") from None
        mask, _ = dataio.filter_polygon(pts, poly)
        rejected = int((keep & ~mask).sum())
        keep &= mask
    log.info("dropped %d events outside the box, %d outside the polygon", outside_box, rejected)
    idx = np.nonzero(keep)[0]
    years = _parse_years(args.years)
    seqs = dataio.yearly_split([events[i].date for i in idx], [events[i].group for i in idx],
                               pts[idx], years)
    out = dataio.ensure_dir(args.out)
    dataio.write_dataset(out / "sequences.jsonl", seqs)
    dataio.write_json(out / "manifest.json", _manifest(
        "ingest", args, bbox=list(map(float, bbox)), transform=tr.to_dict(),
        dropped_outside_box=outside_box, dropped_outside_polygon=rejected,
        sequences={str(y): len(s) for y, s in zip(years, seqs)}))
    print(f"{len(seqs)} sequences, {len(idx)} events, {rejected} rejected by polygon")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mstnhp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a train/valid/test dataset")
    s.add_argument("--config", required=True, help="preset name or INI file")
    s.add_argument("--n-seqs", type=int, required=True)
    s.add_argument("--split", required=True, help="a:b:c summing to --n-seqs")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="fit MSTNHP or MTNHP")
    t.add_argument("--data", required=True, help="directory with train/valid JSONL")
    t.add_argument("--model", choices=("mstnhp", "mtnhp"), default="mstnhp")
    t.add_argument("--hidden", type=int, default=16)
    t.add_argument("--embed", type=int, default=8)
    t.add_argument("--K", type=int, default=None, help="number of types (default: inferred)")
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--batch", type=int, default=10)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--mc-mult", type=int, default=10)
    t.add_argument("--patience", type=int, default=None)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--threads", type=int, default=1)
    t.add_argument("--collapse", action="store_true", help="strip coordinates for mtnhp")
    t.add_argument("--wall-clock", action="store_true",
                   help="record wall time in the history (breaks byte-identical reruns)")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="curves, maps, log-likelihood, recovery metrics")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True, help="JSONL dataset file")
    e.add_argument("--what", choices=("curves", "maps", "cummaps", "loglik", "metrics"),
                   required=True)
    e.add_argument("--grid", default="64,64")
    e.add_argument("--times", default=None, help="comma-separated evaluation times")
    e.add_argument("--horizons", default=None, help="comma-separated cumulative-map horizons")
    e.add_argument("--truth", default=None, help="kernel config of the true process")
    e.add_argument("--mc-mult", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("ingest", help="normalise raw dated events into yearly sequences")
    g.add_argument("--raw", required=True, help="CSV with date,lat,lon,group")
    box = g.add_mutually_exclusive_group()
    box.add_argument("--bbox", help="lon_min,lon_max,lat_min,lat_max")
    box.add_argument("--auto-bbox", action="store_true")
    g.add_argument("--polygon", default=None, help="JSON list of [lon, lat] vertices")
    g.add_argument("--years", required=True, help="a..b inclusive")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_ingest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, configparser.Error) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, dataio.DataFormatError, SequenceError, DomainError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, SimulationError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
