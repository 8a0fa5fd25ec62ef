"""Occurrence tables (GBIF-style CSV/TSV): parsing, filtering and joining to colour stats."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import date, datetime
from typing import Iterable, Mapping, Sequence, TextIO

from .colour import PartColourStats
from .stats import AnalysisRow, remap_hour

ROLES = ("record_id", "species", "sex", "life_stage", "latitude", "longitude", "observed_at", "country")

# Darwin Core column names as they appear in a GBIF occurrence download.
GBIF_COLUMNS = {
    "gbifID": "record_id",
    "species": "species",
    "sex": "sex",
    "lifeStage": "life_stage",
    "decimalLatitude": "latitude",
    "decimalLongitude": "longitude",
    "eventDate": "observed_at",
    "countryCode": "country",
}

JOIN_HEADER = ["record_id", "part", "sex", "latitude", "longitude", "hour_remapped", "mean_h", "mean_s", "mean_v"]


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class OccurrenceRecord:
    record_id: str
    species: str | None = None
    sex: str = "unknown"
    life_stage: str = "unknown"
    latitude: float | None = None
    longitude: float | None = None
    observed_at: datetime | date | None = None
    country: str | None = None

    @property
    def hour(self) -> int | None:
        """Hour of day, or None when the timestamp is absent or date-only."""
        if isinstance(self.observed_at, datetime):
            return self.observed_at.hour
        return None


@dataclass(frozen=True)
class Region:
    min_lat: float
    max_lat: float
    min_lon: float
    max_lon: float

    def __post_init__(self):
        if self.min_lat > self.max_lat or self.min_lon > self.max_lon:
            raise ValueError(f"region bounds inverted: {self}")

    def contains(self, lat: float, lon: float) -> bool:
        return self.min_lat <= lat <= self.max_lat and self.min_lon <= lon <= self.max_lon


@dataclass(frozen=True)
class FilterSpec:
    life_stage: str | None = None
    species: str | None = None
    region: Region | None = None


@dataclass
class JoinResult:
    rows: list[AnalysisRow]
    unmatched_stats: int
    unmatched_records: int

    @property
    def matched(self) -> int:
        return len(self.rows)


# --------------------------------------------------------------------------
# field normalisation


def normalize_sex(value: str | None) -> str:
    v = (value or "").strip().lower()
    if v in ("male", "m", "♂"):
        return "male"
    if v in ("female", "f", "♀"):
        return "female"
    return "unknown"


def normalize_life_stage(value: str | None) -> str:
    v = (value or "").strip().lower()
    if not v:
        return "unknown"
    if v in ("imago", "adult"):
        return "imago"
    if v in ("larva", "larvae", "nymph", "naiad"):
        return "larva"
    if v == "unknown":
        return "unknown"
    return "other"


def _coord(value: str | None, limit: float) -> float | None:
    if value is None or not value.strip():
        return None
    try:
        f = float(value)
    except ValueError:
        return None
    if f != f or not -limit <= f <= limit:
        return None
    return f


def parse_timestamp(value: str | None) -> datetime | date | None:
    """ISO-8601 date-time, or a bare date (which carries no hour). Anything else is absent."""
    v = (value or "").strip()
    if not v or "/" in v:
        return None
    if v.endswith("Z"):
        v = v[:-1] + "+00:00"
    if "T" in v or " " in v:
        try:
            return datetime.fromisoformat(v)
        except ValueError:
            return None
    try:
        return date.fromisoformat(v)
    except ValueError:
        return None


# --------------------------------------------------------------------------
# parsing


def _sniff_delimiter(header: str) -> str:
    return "\t" if header.count("\t") >= header.count(",") and "\t" in header else ","


def parse_occurrences(source: TextIO | str, column_map: Mapping[str, str] | None = None) -> list[OccurrenceRecord]:
    """Read a delimited occurrence table.

    ``column_map`` maps column names to roles in :data:`ROLES`; it defaults to
    :data:`GBIF_COLUMNS`. Tab or comma delimiters are detected from the header.
    Blank or unparseable optional fields become ``None``.
    """
    column_map = dict(GBIF_COLUMNS if column_map is None else column_map)
    bad_roles = set(column_map.values()) - set(ROLES)
    if bad_roles:
        raise IngestError(f"unknown roles in column map: {sorted(bad_roles)}")
    if isinstance(source, str):
        source = io.StringIO(source)
    header = source.readline()
    if not header.strip():
        raise IngestError("missing header row")
    delim = _sniff_delimiter(header)
    names = next(csv.reader([header.rstrip("\r\n")], delimiter=delim))
    role_col = {}
    for idx, name in enumerate(names):
        role = column_map.get(name.strip())
        if role and role not in role_col:
            role_col[role] = idx
    if "record_id" not in role_col:
        raise IngestError("no column mapped to record_id")

    records = []
    seen: dict[str, int] = {}
    reader = csv.reader(source, delimiter=delim, quoting=csv.QUOTE_NONE if delim == "\t" else csv.QUOTE_MINIMAL)
    for rowno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue

        def get(role):
            i = role_col.get(role)
            if i is None or i >= len(row):
                return None
            v = row[i].strip()
            return v or None

        rid = get("record_id")
        if rid is None:
            raise IngestError(f"row {rowno}: empty record_id")
        if rid in seen:
            raise IngestError(f"duplicate record_id {rid!r} on rows {seen[rid]} and {rowno}")
        seen[rid] = rowno
        records.append(OccurrenceRecord(
            record_id=rid,
            species=get("species"),
            sex=normalize_sex(get("sex")),
            life_stage=normalize_life_stage(get("life_stage")),
            latitude=_coord(get("latitude"), 90.0),
            longitude=_coord(get("longitude"), 180.0),
            observed_at=parse_timestamp(get("observed_at")),
            country=get("country"),
        ))
    return records


# --------------------------------------------------------------------------
# filtering and joining


def _species_match(record_species: str | None, wanted: str) -> bool:
    if record_species is None:
        return False
    have = " ".join(record_species.lower().split())
    want = " ".join(wanted.lower().split())
    return have == want or have.startswith(want + " ")


def filter_records(records: Sequence[OccurrenceRecord], spec: FilterSpec) -> list[OccurrenceRecord]:
    out = []
    for r in records:
        if spec.life_stage is not None and r.life_stage != normalize_life_stage(spec.life_stage):
            continue
        if spec.species is not None and not _species_match(r.species, spec.species):
            continue
        if spec.region is not None:
            if r.latitude is None or r.longitude is None or not spec.region.contains(r.latitude, r.longitude):
                continue
        out.append(r)
    return out


def join_metadata(stats_rows: Iterable[tuple[str, PartColourStats]],
                  records: Iterable[OccurrenceRecord]) -> JoinResult:
    """Inner join of per-part colour stats with occurrence records on record_id."""
    by_id = {r.record_id: r for r in records}
    rows = []
    unmatched = 0
    used = set()
    for rid, st in stats_rows:
        rec = by_id.get(rid)
        if rec is None:
            unmatched += 1
            continue
        used.add(rid)
        hour = rec.hour
        rows.append(AnalysisRow(
            record_id=rid,
            part=st.part,
            sex=rec.sex,
            latitude=rec.latitude,
            longitude=rec.longitude,
            hour_remapped=remap_hour(hour) if hour is not None else None,
            mean_h=st.mean_hsv.h,
            mean_s=st.mean_hsv.s,
            mean_v=st.mean_hsv.v,
        ))
    return JoinResult(rows, unmatched, len(by_id) - len(used))


def _fmt(v) -> str:
    return "" if v is None else repr(v) if isinstance(v, float) else str(v)


def write_join_csv(rows: Iterable[AnalysisRow], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(JOIN_HEADER)
    for r in rows:
        w.writerow([r.record_id, r.part.label, r.sex, _fmt(r.latitude), _fmt(r.longitude),
                    _fmt(r.hour_remapped), _fmt(r.mean_h), _fmt(r.mean_s), _fmt(r.mean_v)])
