"""Dataset files, real-data ingestion (normalisation, polygon filter, yearly split) and checkpoints.

Datasets are JSON Lines, one sequence per line::

    {"format_version": 1, "T": 100.0, "domain": {...} | null,
     "events": [{"k": 1, "t": 0.5, "x": 0.1, "y": 0.2}, ...]}

Temporal-only sequences have a null domain and events without ``x``/``y``.
Floats are written with ``repr`` precision so files round-trip exactly.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .core import EventSequence, Polygon, Rectangle, SequenceError, SpatialDomain, domain_from_dict
from .ctlstm import ModelConfig, NeuralHawkes

FORMAT_VERSION = 1
DAY_JITTER = 1e-3
YEAR_HORIZON = 366.0


class DataFormatError(ValueError):
    """Malformed or invalid input file; ``line`` is 1-based when known."""

    def __init__(self, msg: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


class CheckpointError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Datasets


def sequence_to_dict(seq: EventSequence) -> dict:
    events = []
    for i in range(len(seq)):
        e = {"k": int(seq.types[i]), "t": float(seq.times[i])}
        if seq.locations is not None:
            e["x"] = float(seq.locations[i, 0])
            e["y"] = float(seq.locations[i, 1])
        events.append(e)
    return {"format_version": FORMAT_VERSION, "T": float(seq.T),
            "domain": None if seq.domain is None else seq.domain.to_dict(),
            "events": events}


def sequence_from_dict(d: dict, K: Optional[int] = None) -> EventSequence:
    if not isinstance(d, dict):
        raise DataFormatError("expected a JSON object")
    if d.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
        raise DataFormatError(f"unsupported format_version {d.get('format_version')!r}")
    try:
        T = float(d["T"])
        events = d["events"]
        domain = domain_from_dict(d.get("domain"))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"bad sequence header: {exc}") from None
    types, times, locs = [], [], []
    for j, e in enumerate(events):
        try:
            types.append(int(e["k"]))
            times.append(float(e["t"]))
            if domain is not None:
                locs.append((float(e["x"]), float(e["y"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"event {j}: missing or invalid field {exc}") from None
    locations = np.array(locs, dtype=float).reshape(-1, 2) if domain is not None else None
    return EventSequence(np.array(types, dtype=np.int64), np.array(times, dtype=float), T,
                         locations, domain, K)


def write_dataset(path, seqs: Iterable[EventSequence]) -> None:
    with open(path, "w") as fh:
        for seq in seqs:
            fh.write(json.dumps(sequence_to_dict(seq)) + "\n")


def read_dataset(path, K: Optional[int] = None) -> list[EventSequence]:
    """Parse and validate every line; errors carry the offending line number."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(sequence_from_dict(json.loads(line), K))
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"malformed JSON ({exc.msg})", lineno) from None
            except DataFormatError as exc:
                raise DataFormatError(str(exc), lineno) from None
            except (SequenceError, ValueError) as exc:
                raise DataFormatError(str(exc), lineno) from None
    return out


# ---------------------------------------------------------------------------
# Ingestion


@dataclass(frozen=True)
class AffineTransform:
    """Per-axis map ``u = scale * v + offset`` from raw (lon, lat) to normalised (x, y)."""

    scale: tuple
    offset: tuple

    def forward(self, raw) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        return raw * np.asarray(self.scale) + np.asarray(self.offset)

    def inverse(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return (pts - np.asarray(self.offset)) / np.asarray(self.scale)

    def to_dict(self) -> dict:
        return {"scale": list(self.scale), "offset": list(self.offset)}

    @classmethod
    def from_box(cls, bbox) -> "AffineTransform":
        lon0, lon1, lat0, lat1 = map(float, bbox)
        if not (lon1 > lon0 and lat1 > lat0) or not np.all(np.isfinite(bbox)):
            raise ValueError(f"degenerate bounding box {bbox}")
        sx, sy = 2.0 / (lon1 - lon0), 2.0 / (lat1 - lat0)
        return cls((sx, sy), (-1.0 - sx * lon0, -1.0 - sy * lat0))


NORMALIZED_SQUARE = Rectangle(-1.0, 1.0, -1.0, 1.0)


def normalize_coordinates(lonlat, bbox):
    """Map (n, 2) lon/lat to [-1, 1]^2 with box edges sent to +-1.

    ``bbox`` is ``(lon_min, lon_max, lat_min, lat_max)``. Returns the points
    and the :class:`AffineTransform` that produced them.
    """
    tr = AffineTransform.from_box(bbox)
    return tr.forward(np.asarray(lonlat, dtype=float).reshape(-1, 2)), tr


def auto_bbox(lonlat) -> tuple:
    p = np.asarray(lonlat, dtype=float).reshape(-1, 2)
    if not len(p):
        raise ValueError("cannot infer a bounding box from no events")
    return (float(p[:, 0].min()), float(p[:, 0].max()), float(p[:, 1].min()), float(p[:, 1].max()))


def filter_polygon(points, polygon: SpatialDomain):
    """Boolean keep-mask of points inside ``polygon`` and the number rejected."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if not len(points):
        return np.zeros(0, dtype=bool), 0
    keep = np.asarray(polygon.contains(points), dtype=bool).reshape(-1)
    return keep, int((~keep).sum())


@dataclass(frozen=True)
class RawEvent:
    date: dt.date
    lat: float
    lon: float
    group: int


def read_raw_events(path) -> list[RawEvent]:
    """CSV with columns ``date`` (ISO), ``lat``, ``lon`` and integer ``group`` (1..K)."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"date", "lat", "lon", "group"} - set(reader.fieldnames or ())
        if missing:
            raise DataFormatError(f"missing columns {sorted(missing)}", 1)
        for lineno, row in enumerate(reader, 2):
            try:
                ev = RawEvent(dt.date.fromisoformat(row["date"].strip()), float(row["lat"]),
                              float(row["lon"]), int(row["group"]))
            except (TypeError, ValueError) as exc:
                raise DataFormatError(str(exc), lineno) from None
            if ev.group < 1 or not (np.isfinite(ev.lat) and np.isfinite(ev.lon)):
                raise DataFormatError("group must be >= 1 and coordinates finite", lineno)
            out.append(ev)
    return out


def yearly_split(dates: Sequence[dt.date], types, points, years: Sequence[int],
                 domain: Optional[SpatialDomain] = NORMALIZED_SQUARE,
                 K: Optional[int] = None) -> list[EventSequence]:
    """One sequence per year in ``years`` (empty years kept), timed in days since Jan 1.

    Same-day events keep their input order at ``t = day + j * 1e-3``.
    """
    types = np.asarray(types, dtype=np.int64).reshape(-1)
    pts = None if points is None else np.asarray(points, dtype=float).reshape(-1, 2)
    by_year: dict[int, list[int]] = {int(y): [] for y in years}
    for i, d in enumerate(dates):
        if d.year in by_year:
            by_year[d.year].append(i)
    out = []
    for year in sorted(by_year):
        idx = by_year[year]
        start = dt.date(year, 1, 1)
        day = np.array([(dates[i] - start).days for i in idx], dtype=float)
        order = np.argsort(day, kind="stable")
        idx = [idx[i] for i in order]
        day = day[order]
        t = day.copy()
        for j in range(1, len(t)):
            if day[j] == day[j - 1]:
                t[j] = t[j - 1] + DAY_JITTER
        locs = None if pts is None else pts[idx].reshape(-1, 2)
        out.append(EventSequence(types[idx], t, YEAR_HORIZON, locs,
                                 domain if pts is not None else None, K))
    return out


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, model: NeuralHawkes, history: Sequence[dict] = (),
                    best_epoch: int = 0) -> None:
    cfg = model.config
    header = {"format_version": FORMAT_VERSION, "variant": cfg.variant, "K": cfg.K, "D": cfg.D,
              "E": cfg.E, "tau": list(cfg.tau),
              "domain": None if model.domain is None else model.domain.to_dict(),
              "best_epoch": int(best_epoch)}
    doc = {"header": header, "params": model.params.to_json_dict(), "history": list(history)}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def _expected_shapes(cfg: ModelConfig) -> dict:
    G, D = cfg.n_gates, cfg.D
    return {"embedding": (cfg.K + 1, cfg.E), "W": (G * D, cfg.input_dim), "U": (G * D, D),
            "b": (G * D,), "w": (cfg.K, D)}


def load_checkpoint(path):
    """``(model, history, header)``; raises :class:`CheckpointError` on any inconsistency."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
        header = doc["header"]
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {header.get('format_version')!r}")
        cfg = ModelConfig(header["variant"], int(header["K"]), int(header["D"]), int(header["E"]),
                          tuple(header["tau"]))
        store = ad.ParamStore.from_json_dict(doc["params"])
        domain = domain_from_dict(header.get("domain"))
        history = list(doc.get("history", []))
    except CheckpointError:
        raise
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from None
    expected = _expected_shapes(cfg)
    got = {k: tuple(store[k].shape) for k in store.names()}
    if got != expected:
        raise CheckpointError(f"parameter shapes {got} do not match config {expected}")
    return NeuralHawkes(cfg, store, domain), history, header


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
