"""Ingestion schemas for encoder outputs and bond panels, the day calendar,
and bond-level dataset splits."""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass, field

import numpy as np


class SchemaError(ValueError):
    """Raised when an input file violates its declared schema."""


# Panel feature registry: 45 named numeric columns, in fixed order.
# Macro block (9), industry index (1), trading (1), firm financials (31),
# credit indicators (3).
FEATURE_NAMES = (
    "usdcnyc",
    "shibor_3m",
    "manufacturing_pmi",
    "prosperity_leading_index",
    "ppi_yoy",
    "gdp_yoy",
    "cpi_yoy",
    "afre_yoy",
    "govt_bond_yield",
    "sws_primary_industry_index",
    "trading_volume",
    "operating_revenue",
    "operating_costs",
    "total_profit",
    "current_assets",
    "non_current_assets",
    "total_assets",
    "current_liabilities",
    "non_current_liabilities",
    "total_liabilities",
    "total_shareholders_equity",
    "cash_flow_operations",
    "cash_flow_investment",
    "cash_flow_finance",
    "total_cash_flow",
    "current_ratio",
    "quick_ratio",
    "super_quick_ratio",
    "debt_to_asset_ratio",
    "equity_ratio",
    "tangible_net_worth_debt_ratio",
    "gross_profit_margin",
    "net_profit_margin",
    "return_on_assets",
    "operating_profit_margin",
    "avg_return_on_equity",
    "operating_cycle_days",
    "inventory_turnover",
    "accounts_receivable_turnover",
    "current_asset_turnover",
    "shareholders_equity_turnover",
    "total_asset_turnover",
    "remaining_credit_utilization",
    "credit_change_mom",
    "secured_credit_ratio",
)

SENTIMENT_FEATURE = "sentiment"

STREAMS = ("micro", "meso")
SPLITS = ("train", "valid", "test")


def _parse_date(value, where=""):
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError:
        raise SchemaError(f"{where}bad date {value!r}, want YYYY-MM-DD") from None


@dataclass(frozen=True)
class Calendar:
    """Dense inclusive day axis start..end with a day <-> index bijection."""

    start: dt.date
    end: dt.date

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"calendar start {self.start} after end {self.end}")

    def __len__(self):
        return (self.end - self.start).days + 1

    def __contains__(self, day: dt.date) -> bool:
        return self.start <= day <= self.end

    def index(self, day: dt.date) -> int:
        if day not in self:
            raise KeyError(f"{day} outside calendar {self.start}..{self.end}")
        return (day - self.start).days

    def day(self, index: int) -> dt.date:
        if not 0 <= index < len(self):
            raise IndexError(f"day index {index} outside 0..{len(self) - 1}")
        return self.start + dt.timedelta(days=index)

    def days(self):
        return [self.start + dt.timedelta(days=i) for i in range(len(self))]


def build_calendar(start, end) -> Calendar:
    """Inclusive calendar-day axis. Accepts dates or ISO strings."""
    return Calendar(_parse_date(start), _parse_date(end))


@dataclass(frozen=True)
class TextRecord:
    text_id: str
    date: dt.date
    stream: str
    mentioned_bonds: tuple = ()
    soft_label: tuple | None = None


@dataclass(frozen=True)
class TextCollection:
    stream: str
    records: tuple

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def labeled(self):
        return [r for r in self.records if r.soft_label is not None]


def _validate_soft_label(raw, where):
    if not isinstance(raw, (list, tuple)) or len(raw) != 3:
        raise SchemaError(f"{where}soft_label must be 3 probabilities")
    probs = []
    for p in raw:
        if not isinstance(p, (int, float)) or not 0.0 <= p <= 1.0:
            raise SchemaError(f"{where}soft_label component {p!r} outside [0,1]")
        probs.append(float(p))
    if abs(sum(probs) - 1.0) > 1e-9:
        raise SchemaError(f"{where}soft_label sums to {sum(probs)}, want 1")
    return tuple(probs)


def ingest_texts(path, stream: str, calendar: Calendar | None = None) -> TextCollection:
    """Read a texts JSONL file, validating every line; the whole file is
    rejected on the first malformed line (reported by line number)."""
    if stream not in STREAMS:
        raise ValueError(f"unknown stream {stream!r}")
    records = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path} line {lineno}: "
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{where}invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise SchemaError(f"{where}expected a JSON object")
            for key in ("text_id", "date", "stream"):
                if key not in obj:
                    raise SchemaError(f"{where}missing field {key!r}")
            text_id = str(obj["text_id"])
            if text_id in seen:
                raise SchemaError(f"{where}duplicate text_id {text_id!r}")
            seen.add(text_id)
            if obj["stream"] != stream:
                raise SchemaError(
                    f"{where}stream {obj['stream']!r} in a {stream} ingest"
                )
            date = _parse_date(obj["date"], where)
            if calendar is not None and date not in calendar:
                raise SchemaError(
                    f"{where}date {date} outside calendar "
                    f"{calendar.start}..{calendar.end}"
                )
            bonds = obj.get("mentioned_bonds", [])
            if not isinstance(bonds, list) or not all(isinstance(b, str) for b in bonds):
                raise SchemaError(f"{where}mentioned_bonds must be a list of ids")
            if stream == "micro" and len(bonds) < 1:
                raise SchemaError(f"{where}micro record mentions no bonds")
            if stream == "meso" and len(bonds) != 0:
                raise SchemaError(f"{where}meso record must not mention bonds")
            label = None
            if obj.get("soft_label") is not None:
                label = _validate_soft_label(obj["soft_label"], where)
            records.append(
                TextRecord(text_id, date, stream, tuple(bonds), label)
            )
    return TextCollection(stream=stream, records=tuple(records))


@dataclass(frozen=True)
class SplitAssignment:
    mapping: dict = field(default_factory=dict)

    def __getitem__(self, bond_id):
        return self.mapping[bond_id]

    def counts(self):
        return tuple(sum(1 for v in self.mapping.values() if v == s) for s in SPLITS)

    def bonds(self, split: str):
        return sorted(b for b, s in self.mapping.items() if s == split)

    def save_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bond_id", "split"])
            for bond_id in sorted(self.mapping):
                writer.writerow([bond_id, self.mapping[bond_id]])


def load_splits(path) -> SplitAssignment:
    mapping = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["bond_id", "split"]:
            raise SchemaError(f"{path}: bad splits header {header}")
        for row in reader:
            if len(row) != 2 or row[1] not in SPLITS:
                raise SchemaError(f"{path}: bad splits row {row}")
            if row[0] in mapping:
                raise SchemaError(f"{path}: duplicate bond {row[0]}")
            mapping[row[0]] = row[1]
    return SplitAssignment(mapping)


def _apportion(n: int, ratios) -> list:
    """Largest-remainder seat assignment; every part ends within one bond of
    its exact share. Remainder seats go to the largest fractional parts, ties
    resolved toward the later (evaluation) parts."""
    total = sum(ratios)
    exact = [n * r / total for r in ratios]
    sizes = [math.floor(e) for e in exact]
    order = sorted(
        range(len(ratios)),
        key=lambda i: (exact[i] - sizes[i], i),
        reverse=True,
    )
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split_bonds(bond_ids, ratios=(7, 1, 2), seed: int = 0) -> SplitAssignment:
    """Shuffle bonds uniformly (fixed seed) and partition train/valid/test."""
    bond_ids = list(bond_ids)
    if len(set(bond_ids)) != len(bond_ids):
        raise ValueError("duplicate bond ids")
    if len(ratios) != len(SPLITS):
        raise ValueError(f"want {len(SPLITS)} ratio parts, got {len(ratios)}")
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    if len(bond_ids) < len(ratios):
        raise ValueError(f"{len(bond_ids)} bonds cannot fill {len(ratios)} splits")
    sizes = _apportion(len(bond_ids), ratios)
    rng = np.random.default_rng(seed)
    shuffled = [bond_ids[i] for i in rng.permutation(len(bond_ids))]
    mapping = {}
    offset = 0
    for split, size in zip(SPLITS, sizes):
        for bond_id in shuffled[offset : offset + size]:
            mapping[bond_id] = split
        offset += size
    return SplitAssignment(mapping)


@dataclass
class BondPanel:
    bond_id: str
    dates: list
    features: np.ndarray  # (n_days, len(FEATURE_NAMES))
    spreads: np.ndarray  # (n_days,)
    industry_ids: tuple = ()

    def __post_init__(self):
        if len(self.dates) != self.features.shape[0] or len(self.dates) != len(
            self.spreads
        ):
            raise SchemaError(f"{self.bond_id}: row count mismatch")
        if self.features.shape[1] != len(FEATURE_NAMES):
            raise SchemaError(
                f"{self.bond_id}: {self.features.shape[1]} features, "
                f"want {len(FEATURE_NAMES)}"
            )
        if any(b > a for a, b in zip(self.dates[1:], self.dates)):
            raise SchemaError(f"{self.bond_id}: dates not sorted")
        if len(set(self.dates)) != len(self.dates):
            raise SchemaError(f"{self.bond_id}: duplicate dates")
        if not np.all(np.isfinite(self.spreads)):
            raise SchemaError(f"{self.bond_id}: non-finite credit spread")
        if not np.all(np.isfinite(self.features)):
            raise SchemaError(f"{self.bond_id}: non-finite feature value")

    def __len__(self):
        return len(self.dates)


def load_panels(path, industries_path=None) -> dict:
    """Read the per-bond-day panel CSV into BondPanel objects keyed by bond.

    The optional industries CSV (bond_id,industry_id; one row per membership)
    fills each panel's industry_ids.
    """
    expected = ["bond_id", "date"] + list(FEATURE_NAMES) + ["credit_spread"]
    rows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise SchemaError(
                f"{path}: header mismatch, got {len(header or [])} columns, "
                f"want {len(expected)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise SchemaError(f"{path} line {lineno}: {len(row)} columns")
            bond_id = row[0]
            date = _parse_date(row[1], f"{path} line {lineno}: ")
            try:
                values = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise SchemaError(f"{path} line {lineno}: {exc}") from None
            rows.setdefault(bond_id, []).append((date, values))

    memberships = {}
    if industries_path is not None:
        memberships = load_bond_industries(industries_path)

    panels = {}
    for bond_id, entries in rows.items():
        entries.sort(key=lambda e: e[0])
        dates = [e[0] for e in entries]
        data = np.array([e[1] for e in entries], dtype=np.float64)
        panels[bond_id] = BondPanel(
            bond_id=bond_id,
            dates=dates,
            features=data[:, :-1],
            spreads=data[:, -1],
            industry_ids=tuple(memberships.get(bond_id, ())),
        )
    return panels


def load_bond_industries(path) -> dict:
    """bond_id -> tuple of industry ids, from a two-column membership CSV."""
    memberships = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["bond_id", "industry_id"]:
            raise SchemaError(f"{path}: bad membership header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise SchemaError(f"{path} line {lineno}: want 2 columns")
            memberships.setdefault(row[0], [])
            if row[1] in memberships[row[0]]:
                raise SchemaError(f"{path} line {lineno}: duplicate membership")
            memberships[row[0]].append(row[1])
    return {b: tuple(ids) for b, ids in memberships.items()}
