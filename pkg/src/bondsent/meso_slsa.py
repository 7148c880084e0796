"""Industry-specific sentiment: Boolean industry-topic graph, topic recall
and propagation, per-industry daily sums, full-sample standardization, and
the bond-level industry average."""

from __future__ import annotations

import csv
import datetime as dt
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .corpus import Calendar, SchemaError, TextCollection, _parse_date
from .micro_absa import SentimentMatrix
from .vecstore import EmbeddingStore

POLARITIES = (-1, 0, 1)


@dataclass(frozen=True)
class KnowledgeGraph:
    industries: tuple
    topics: tuple
    g: np.ndarray  # (M, N) of {0, 1}

    def __post_init__(self):
        if len(set(self.industries)) != len(self.industries):
            raise SchemaError("duplicate industry names")
        if len(set(self.topics)) != len(self.topics):
            raise SchemaError("duplicate topic names")
        expected = (len(self.industries), len(self.topics))
        if self.g.shape != expected:
            raise SchemaError(f"graph shape {self.g.shape}, want {expected}")
        if not np.all(np.isin(self.g, (0, 1))):
            raise SchemaError("graph cells must be 0 or 1")

    def industry_index(self, industry) -> int:
        try:
            return self.industries.index(industry)
        except ValueError:
            raise KeyError(f"unknown industry {industry!r}") from None

    def topic_index(self, topic) -> int:
        try:
            return self.topics.index(topic)
        except ValueError:
            raise KeyError(f"unknown topic {topic!r}") from None

    def edge(self, industry, topic) -> int:
        return int(self.g[self.industry_index(industry), self.topic_index(topic)])


@dataclass(frozen=True)
class TopicIncrement:
    text_id: str
    topic_id: str
    similarity: float
    polarity: int


def load_graph(path) -> KnowledgeGraph:
    """Read the industry-by-topic CSV: header of topic names after a label
    column, then one 0/1 row per industry."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 2:
            raise SchemaError(f"{path}: missing topic header")
        topics = tuple(header[1:])
        industries, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SchemaError(f"{path} line {lineno}: {len(row)} columns")
            industries.append(row[0])
            cells = []
            for topic, cell in zip(topics, row[1:]):
                if cell not in ("0", "1"):
                    raise SchemaError(
                        f"{path} line {lineno}: non-Boolean cell {cell!r} "
                        f"under {topic!r}"
                    )
                cells.append(int(cell))
            rows.append(cells)
    return KnowledgeGraph(
        industries=tuple(industries),
        topics=topics,
        g=np.array(rows, dtype=np.int8).reshape(len(industries), len(topics)),
    )


def save_graph(path, graph: KnowledgeGraph):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["industry"] + list(graph.topics))
        for i, industry in enumerate(graph.industries):
            writer.writerow([industry] + [int(v) for v in graph.g[i]])


def load_topic_polarities(path) -> dict:
    """topic-polarities JSONL -> text_id -> (date, polarity)."""
    out = {}
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
            for key in ("text_id", "date", "polarity"):
                if key not in obj:
                    raise SchemaError(f"{where}missing field {key!r}")
            if obj["polarity"] not in POLARITIES:
                raise SchemaError(f"{where}polarity {obj['polarity']!r} not in -1/0/1")
            text_id = str(obj["text_id"])
            if text_id in out:
                raise SchemaError(f"{where}duplicate text_id {text_id!r}")
            out[text_id] = (_parse_date(obj["date"], where), int(obj["polarity"]))
    return out


def map_text(
    text_polarity: int,
    text_embedding,
    store: EmbeddingStore,
    graph: KnowledgeGraph | None = None,
    k: int = 5,
    text_id: str = "",
) -> list:
    """Recall the k most similar topics and attach the text's polarity to
    each; zero-polarity texts still produce increments (contributing 0)."""
    if text_polarity not in POLARITIES:
        raise ValueError(f"polarity {text_polarity!r} not in -1/0/1")
    matches = store.top_k(text_embedding, k)
    if graph is not None:
        for match in matches:
            if match.key not in graph.topics:
                raise KeyError(f"recalled topic {match.key!r} not in graph")
    return [
        TopicIncrement(
            text_id=text_id,
            topic_id=match.key,
            similarity=match.similarity,
            polarity=int(text_polarity),
        )
        for match in matches
    ]


def industry_day(graph: KnowledgeGraph, increments, industry) -> float:
    """Sum of similarity * polarity over a day's increments whose topic the
    graph links to the industry; no increments means 0."""
    m = graph.industry_index(industry)
    value = 0.0
    for inc in increments:
        value += inc.similarity * inc.polarity * float(graph.g[m, graph.topic_index(inc.topic_id)])
    return value


def build_beta_matrix(
    graph: KnowledgeGraph, increments_by_day: dict, calendar: Calendar
) -> SentimentMatrix:
    """Raw industry-by-day matrix; each cell is the industry_day sum."""
    topic_index = {t: i for i, t in enumerate(graph.topics)}
    values = np.zeros((len(graph.industries), len(calendar)))
    for day, increments in increments_by_day.items():
        k = calendar.index(day)
        for inc in increments:
            weight = inc.similarity * inc.polarity
            if weight != 0.0:
                values[:, k] += graph.g[:, topic_index[inc.topic_id]] * weight
    return SentimentMatrix(
        axis="beta",
        entities=tuple(graph.industries),
        calendar=calendar,
        values=values,
    )


def compute_beta(
    texts: TextCollection,
    polarities: dict,
    text_store: EmbeddingStore,
    topic_store: EmbeddingStore,
    graph: KnowledgeGraph,
    calendar: Calendar,
    k: int = 5,
) -> SentimentMatrix:
    """Full meso pipeline: per-text topic recall, propagation through the
    graph, and per-industry daily accumulation (pre-standardization)."""
    if texts.stream != "meso":
        raise ValueError("meso pipeline needs the meso stream")
    increments_by_day = {}
    for record in texts:
        if record.text_id not in polarities:
            raise SchemaError(f"no topic polarity for text {record.text_id!r}")
        date, polarity = polarities[record.text_id]
        if date != record.date:
            raise SchemaError(
                f"text {record.text_id!r}: polarity dated {date}, "
                f"record dated {record.date}"
            )
        increments = map_text(
            polarity,
            text_store.vector(record.text_id),
            topic_store,
            graph,
            k=k,
            text_id=record.text_id,
        )
        increments_by_day.setdefault(record.date, []).extend(increments)
    return build_beta_matrix(graph, increments_by_day, calendar)


def standardize_beta(matrix: SentimentMatrix) -> SentimentMatrix:
    """Z-score each industry row over the full sample (population std).
    Zero-variance rows become zeros and are reported as warnings."""
    if matrix.axis != "beta":
        raise ValueError("standardize_beta works on the industry axis")
    values = matrix.values.copy()
    for i, industry in enumerate(matrix.entities):
        row = values[i]
        std = row.std()
        if std == 0.0:
            warnings.warn(
                f"industry {industry!r} has zero sentiment variance; row zeroed",
                stacklevel=2,
            )
            values[i] = 0.0
        else:
            values[i] = (row - row.mean()) / std
    return SentimentMatrix(
        axis="beta",
        entities=matrix.entities,
        calendar=matrix.calendar,
        values=values,
    )


def bond_meso(industry_ids, beta: SentimentMatrix, day_index: int) -> float:
    """Mean of the bond's standardized industry values on one day."""
    return float(bond_meso_series(industry_ids, beta)[day_index])


def bond_meso_series(industry_ids, beta: SentimentMatrix) -> np.ndarray:
    """K-vector: mean over the bond's industries of the beta rows."""
    if beta.axis != "beta":
        raise ValueError("bond averaging works on the industry axis")
    if not industry_ids:
        raise ValueError("bond has no industry mapping")
    rows = [beta.values[beta.entities.index(m)] for m in industry_ids]
    return np.mean(rows, axis=0)
