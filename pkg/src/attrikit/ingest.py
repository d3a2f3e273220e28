"""Loss-record ingestion: parsing, validation, deduplication, geo normalization.

Also hosts the seeded synthetic dataset generator used for tests and demos,
since real visually-confirmed loss datasets are not redistributable.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta
from enum import Enum

import numpy as np

from .errors import SchemaError

DEFAULT_COVERAGE = (date(2022, 2, 24), date(2025, 7, 31))

# Logical column names; a schema maps these onto the CSV's actual headers.
LOGICAL_COLUMNS = ("date", "type", "model", "status", "location", "raion", "oblast", "url")
MANDATORY_COLUMNS = ("date", "type")

_DATE_FORMATS = ("%Y-%m-%d", "%d.%m.%Y", "%m/%d/%Y")


class Category(Enum):
    TANK = "tank"
    IFV = "ifv"
    APC = "apc"
    ARTILLERY = "artillery"
    AIR_DEFENSE = "air_defense"
    AIRCRAFT = "aircraft"
    HELICOPTER = "helicopter"
    TRUCK = "truck"
    ENGINEERING = "engineering"
    OTHER = "other"


class Status(Enum):
    DESTROYED = "destroyed"
    DAMAGED = "damaged"
    ABANDONED = "abandoned"
    CAPTURED = "captured"


# Common phrasing seen in loss exports, mapped onto the category enum.
_CATEGORY_ALIASES = {
    "tanks": Category.TANK,
    "mbt": Category.TANK,
    "infantry fighting vehicle": Category.IFV,
    "infantry fighting vehicles": Category.IFV,
    "ifvs": Category.IFV,
    "armored personnel carrier": Category.APC,
    "armoured personnel carrier": Category.APC,
    "apcs": Category.APC,
    "self-propelled artillery": Category.ARTILLERY,
    "towed artillery": Category.ARTILLERY,
    "mlrs": Category.ARTILLERY,
    "air defence": Category.AIR_DEFENSE,
    "air defense": Category.AIR_DEFENSE,
    "anti-aircraft": Category.AIR_DEFENSE,
    "sam": Category.AIR_DEFENSE,
    "plane": Category.AIRCRAFT,
    "jet": Category.AIRCRAFT,
    "helicopters": Category.HELICOPTER,
    "trucks": Category.TRUCK,
    "lorry": Category.TRUCK,
    "engineering vehicle": Category.ENGINEERING,
    "engineering vehicles": Category.ENGINEERING,
}

_STATUS_ALIASES = {
    "destroyed and captured": Status.DESTROYED,
    "damaged and captured": Status.CAPTURED,
    "lost": Status.DESTROYED,
}


@dataclass(frozen=True)
class LossRecord:
    """One visually-confirmed equipment loss event."""

    record_id: int
    date: date
    category: Category
    status: Status
    model_text: str | None = None
    location_text: str | None = None
    raion: str | None = None
    oblast: str | None = None
    source_url: str | None = None


@dataclass(frozen=True)
class GeoIndex:
    """Normalized location string -> (raion, oblast) lookup table."""

    entries: dict[str, tuple[str, str]]
    unmatched_policy: str = "leave_blank"  # or "error"

    def __post_init__(self):
        if self.unmatched_policy not in ("leave_blank", "error"):
            raise ValueError(f"unknown unmatched_policy {self.unmatched_policy!r}")
        for key, (raion, oblast) in self.entries.items():
            if not raion or not oblast:
                raise ValueError(f"geo index entry {key!r} has a blank raion or oblast")

    def lookup(self, location: str) -> tuple[str, str] | None:
        return self.entries.get(_normalize_location(location))


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_parsed: int = 0
    duplicates_removed: int = 0
    unparsable_rows: list[tuple[int, str]] = field(default_factory=list)
    category_corrections: int = 0

    def check(self) -> None:
        if self.rows_read != self.rows_parsed + len(self.unparsable_rows) + self.duplicates_removed:
            raise AssertionError("ingest report row accounting does not balance")


def _normalize_location(text: str) -> str:
    return " ".join(text.split()).casefold()


def _normalize_token(text: str) -> str:
    return " ".join(text.replace("_", " ").replace("-", " ").split()).casefold()


def parse_category(text: str | None) -> Category:
    """Map free-text equipment type onto the category enum.

    Unmappable inputs become OTHER rather than failing, so one odd label
    never drops a record.
    """
    if text is None:
        return Category.OTHER
    token = _normalize_token(text)
    for cat in Category:
        if token == cat.value.replace("_", " "):
            return cat
    return _CATEGORY_ALIASES.get(token, Category.OTHER)


def parse_status(text: str | None) -> Status | None:
    """Map free-text status; blank means destroyed, unknown returns None."""
    if text is None or not text.strip():
        return Status.DESTROYED
    token = _normalize_token(text)
    for st in Status:
        if token == st.value:
            return st
    return _STATUS_ALIASES.get(token)


def parse_loss_date(text: str) -> date:
    """ISO 8601 first, then DD.MM.YYYY, then MM/DD/YYYY."""
    cleaned = text.strip()
    for fmt in _DATE_FORMATS:
        try:
            return datetime.strptime(cleaned, fmt).date()
        except ValueError:
            continue
    raise ValueError(f"unparsable date {text!r}")


def record_id_of(
    day: date,
    category: Category,
    model_text: str | None,
    location_text: str | None,
    source_url: str | None,
) -> int:
    """Stable 64-bit id over the dedup key fields.

    SHA-256 based so the same row hashes identically across runs,
    platforms, and processes.
    """
    key = "\x1f".join([
        day.isoformat(),
        category.value,
        model_text or "",
        location_text or "",
        source_url or "",
    ])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def make_record(
    day: date,
    category: Category,
    status: Status,
    model_text: str | None = None,
    location_text: str | None = None,
    raion: str | None = None,
    oblast: str | None = None,
    source_url: str | None = None,
) -> LossRecord:
    return LossRecord(
        record_id=record_id_of(day, category, model_text, location_text, source_url),
        date=day,
        category=category,
        status=status,
        model_text=model_text,
        location_text=location_text,
        raion=raion,
        oblast=oblast,
        source_url=source_url,
    )


def _clean_cell(value: str | None) -> str | None:
    if value is None:
        return None
    stripped = value.strip()
    return stripped if stripped else None


def parse_records(
    csv_text: str,
    schema: dict[str, str] | None = None,
    corrections: dict[str, Category] | None = None,
    coverage: tuple[date, date] = DEFAULT_COVERAGE,
) -> tuple[list[LossRecord], IngestReport]:
    """Parse a loss-record CSV into validated, deduplicated records.

    ``schema`` maps the logical columns (date, type, model, status,
    location, raion, oblast, url) onto the file's header names; identity
    mapping by default. Missing optional columns are tolerated, a missing
    date or type column raises SchemaError. Rows with unparsable dates,
    out-of-coverage dates, or unknown statuses are recorded in the report
    and skipped without raising. ``corrections`` optionally re-labels
    categories by model text.
    """
    schema = dict(schema) if schema else {}
    for logical in schema:
        if logical not in LOGICAL_COLUMNS:
            raise SchemaError(f"unknown logical column {logical!r} in schema")
    colmap = {logical: schema.get(logical, logical) for logical in LOGICAL_COLUMNS}

    norm_corrections = {
        _normalize_token(text): cat for text, cat in (corrections or {}).items()
    }

    reader = csv.DictReader(io.StringIO(csv_text))
    header = reader.fieldnames or []
    for logical in MANDATORY_COLUMNS:
        if colmap[logical] not in header:
            raise SchemaError(f"mandatory column {colmap[logical]!r} (logical {logical!r}) missing from header")
    present = {logical: colmap[logical] for logical in LOGICAL_COLUMNS if colmap[logical] in header}

    report = IngestReport()
    records: list[LossRecord] = []
    seen_ids: set[int] = set()

    for line_no, row in enumerate(reader, start=2):
        report.rows_read += 1

        def cell(logical: str) -> str | None:
            name = present.get(logical)
            return _clean_cell(row.get(name)) if name else None

        raw_date = cell("date")
        if raw_date is None:
            report.unparsable_rows.append((line_no, "missing date"))
            continue
        try:
            day = parse_loss_date(raw_date)
        except ValueError as err:
            report.unparsable_rows.append((line_no, str(err)))
            continue
        if not coverage[0] <= day <= coverage[1]:
            report.unparsable_rows.append((line_no, f"date {day.isoformat()} outside coverage window"))
            continue

        status = parse_status(cell("status"))
        if status is None:
            report.unparsable_rows.append((line_no, f"unknown status {cell('status')!r}"))
            continue

        category = parse_category(cell("type"))
        model_text = cell("model")
        if model_text is not None:
            corrected = norm_corrections.get(_normalize_token(model_text))
            if corrected is not None and corrected != category:
                category = corrected
                report.category_corrections += 1

        record = make_record(
            day=day,
            category=category,
            status=status,
            model_text=model_text,
            location_text=cell("location"),
            raion=cell("raion"),
            oblast=cell("oblast"),
            source_url=cell("url"),
        )
        if record.record_id in seen_ids:
            report.duplicates_removed += 1
            continue
        seen_ids.add(record.record_id)
        records.append(record)
        report.rows_parsed += 1

    report.check()
    return records, report


def normalize_geo(records: list[LossRecord], index: GeoIndex) -> list[LossRecord]:
    """Fill blank raion/oblast from the geo index, preserving order.

    Records that already carry either level are left untouched. Unmatched
    non-blank locations either stay blank or, under policy "error", abort
    with the full list of offending strings.
    """
    unmatched: list[str] = []
    out: list[LossRecord] = []
    for record in records:
        if record.raion or record.oblast or not record.location_text:
            out.append(record)
            continue
        hit = index.lookup(record.location_text)
        if hit is None:
            unmatched.append(record.location_text)
            out.append(record)
        else:
            out.append(replace(record, raion=hit[0], oblast=hit[1]))
    if unmatched and index.unmatched_policy == "error":
        listing = ", ".join(repr(s) for s in sorted(set(unmatched)))
        raise SchemaError(f"locations not in geo index: {listing}")
    return out


# --------------------------------------------------------------------------
# Synthetic data generation


@dataclass(frozen=True)
class Regime:
    """Contiguous span of days with constant per-category mean daily losses."""

    start: date
    end: date  # inclusive
    means: dict[Category, float]

    def __post_init__(self):
        if self.start > self.end:
            raise SchemaError(f"regime start {self.start} after end {self.end}")
        for cat, mean in self.means.items():
            if mean < 0:
                raise SchemaError(f"negative mean {mean} for {cat.value} in regime starting {self.start}")


@dataclass(frozen=True)
class Profile:
    regimes: tuple[Regime, ...]

    def __post_init__(self):
        ordered = sorted(self.regimes, key=lambda r: r.start)
        for a, b in zip(ordered, ordered[1:]):
            if b.start <= a.end:
                raise SchemaError(f"regimes overlap: {a.start}..{a.end} and {b.start}..{b.end}")

    def span(self) -> tuple[date, date]:
        ordered = sorted(self.regimes, key=lambda r: r.start)
        return ordered[0].start, ordered[-1].end


def default_profile() -> Profile:
    """Three-phase default: 2022 surge, long plateau, taper from late 2024.

    Daily means are set so aggregate magnitudes sit in a plausible range
    for this domain (tens of losses per day early on, roughly two tanks
    per day late); they are illustrative, not calibrated to any dataset.
    """
    surge = {
        Category.TANK: 5.5, Category.IFV: 7.0, Category.APC: 3.5,
        Category.ARTILLERY: 2.0, Category.AIR_DEFENSE: 0.6, Category.AIRCRAFT: 0.25,
        Category.HELICOPTER: 0.2, Category.TRUCK: 6.0, Category.ENGINEERING: 0.4,
        Category.OTHER: 1.5,
    }
    plateau = {
        Category.TANK: 2.6, Category.IFV: 4.5, Category.APC: 2.0,
        Category.ARTILLERY: 2.5, Category.AIR_DEFENSE: 0.5, Category.AIRCRAFT: 0.1,
        Category.HELICOPTER: 0.08, Category.TRUCK: 4.0, Category.ENGINEERING: 0.35,
        Category.OTHER: 1.2,
    }
    taper = {
        Category.TANK: 2.2, Category.IFV: 3.0, Category.APC: 1.2,
        Category.ARTILLERY: 1.8, Category.AIR_DEFENSE: 0.4, Category.AIRCRAFT: 0.05,
        Category.HELICOPTER: 0.04, Category.TRUCK: 3.2, Category.ENGINEERING: 0.25,
        Category.OTHER: 0.9,
    }
    return Profile(regimes=(
        Regime(date(2022, 2, 24), date(2022, 12, 31), surge),
        Regime(date(2023, 1, 1), date(2024, 11, 30), plateau),
        Regime(date(2024, 12, 1), date(2025, 7, 31), taper),
    ))


def generate_synthetic(seed: int, profile: Profile | None = None) -> list[LossRecord]:
    """Draw a deterministic synthetic record list from a regime profile.

    Per-day per-category counts are Poisson with the regime mean. Draw
    order is fixed (regimes by start date, days in order, categories in
    enum order) from a single PCG64 stream, so the same seed always yields
    the same records byte for byte. Each record gets a unique synthetic
    source URL so that deduplication never collapses same-day losses.
    """
    profile = profile or default_profile()
    rng = np.random.default_rng(seed)
    records: list[LossRecord] = []
    for regime in sorted(profile.regimes, key=lambda r: r.start):
        day = regime.start
        while day <= regime.end:
            for cat in Category:
                mean = regime.means.get(cat, 0.0)
                count = int(rng.poisson(mean)) if mean > 0 else 0
                for i in range(count):
                    url = f"synth://{seed}/{day.isoformat()}/{cat.value}/{i}"
                    records.append(make_record(day, cat, Status.DESTROYED, source_url=url))
            day += timedelta(days=1)
    return records


# --------------------------------------------------------------------------
# File round-trips


def records_to_csv(records: list[LossRecord]) -> str:
    """Serialize records with the standard logical header (RFC 4180)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(LOGICAL_COLUMNS)
    for r in records:
        writer.writerow([
            r.date.isoformat(), r.category.value, r.model_text or "", r.status.value,
            r.location_text or "", r.raion or "", r.oblast or "", r.source_url or "",
        ])
    return out.getvalue()


def load_geo_index(csv_text: str, unmatched_policy: str = "leave_blank") -> GeoIndex:
    """Two-column CSV: location, "raion/oblast"."""
    entries: dict[str, tuple[str, str]] = {}
    for line_no, row in enumerate(csv.reader(io.StringIO(csv_text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2 or "/" not in row[1]:
            raise SchemaError(f"geo index line {line_no}: expected 'location,raion/oblast'")
        raion, _, oblast = row[1].partition("/")
        raion, oblast = raion.strip(), oblast.strip()
        if not raion or not oblast:
            raise SchemaError(f"geo index line {line_no}: blank raion or oblast")
        entries[_normalize_location(row[0])] = (raion, oblast)
    return GeoIndex(entries=entries, unmatched_policy=unmatched_policy)


def load_corrections(csv_text: str) -> dict[str, Category]:
    """Two-column CSV: model_text, category."""
    table: dict[str, Category] = {}
    for line_no, row in enumerate(csv.reader(io.StringIO(csv_text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise SchemaError(f"correction table line {line_no}: expected 'model_text,category'")
        table[row[0].strip()] = parse_category(row[1])
    return table


def load_profile(csv_text: str) -> Profile:
    """Regime profile CSV: start,end,category,mean_per_day (rows grouped by span)."""
    spans: dict[tuple[date, date], dict[Category, float]] = {}
    for line_no, row in enumerate(csv.reader(io.StringIO(csv_text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if row[0].strip().lower() == "start":
            continue
        if len(row) != 4:
            raise SchemaError(f"profile line {line_no}: expected 'start,end,category,mean_per_day'")
        try:
            start = parse_loss_date(row[0])
            end = parse_loss_date(row[1])
            mean = float(row[3])
        except ValueError as err:
            raise SchemaError(f"profile line {line_no}: {err}") from err
        cat = parse_category(row[2])
        spans.setdefault((start, end), {})[cat] = mean
    if not spans:
        raise SchemaError("profile file contains no regimes")
    regimes = tuple(Regime(start, end, means) for (start, end), means in sorted(spans.items()))
    return Profile(regimes=regimes)
