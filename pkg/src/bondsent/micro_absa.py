"""Firm-specific sentiment: mean-max pooling over ingested token vectors,
a trainable soft-label head, per-text polarity, and daily aggregation into
the bond-by-day alpha matrix."""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .corpus import Calendar, SchemaError, TextCollection, build_calendar


@dataclass(frozen=True)
class TokenFeatureSet:
    text_id: str
    cls_vector: np.ndarray
    per_bond_tokens: dict  # bond_id -> (n_tokens, d) array


@dataclass(frozen=True)
class PerTextScore:
    text_id: str
    target_id: str
    date: dt.date
    value: float  # {-1, 0, +1} for per-text polarities


@dataclass
class SentimentMatrix:
    """Dense entity-by-day sentiment values on a shared calendar.

    axis "alpha" holds per-bond micro sentiment (each cell a mean of
    {-1,0,+1} values, so bounded), "beta" per-industry meso sentiment and
    "composite" per-bond sums (both unbounded)."""

    axis: str
    entities: tuple
    calendar: Calendar
    values: np.ndarray

    def __post_init__(self):
        if self.axis not in ("alpha", "beta", "composite"):
            raise ValueError(f"unknown axis {self.axis!r}")
        expected = (len(self.entities), len(self.calendar))
        if self.values.shape != expected:
            raise ValueError(f"matrix shape {self.values.shape}, want {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite sentiment value")
        if self.axis == "alpha" and np.any(np.abs(self.values) > 1.0 + 1e-12):
            raise ValueError("alpha entries must lie in [-1, 1]")
        if len(set(self.entities)) != len(self.entities):
            raise ValueError("duplicate entities")

    def row(self, entity) -> np.ndarray:
        return self.values[self.entities.index(entity)]


def save_matrix(path, matrix: SentimentMatrix):
    """CSV with one row per entity and one column per calendar day."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [matrix.axis] + [d.isoformat() for d in matrix.calendar.days()]
        )
        for entity, row in zip(matrix.entities, matrix.values):
            writer.writerow([entity] + [repr(float(v)) for v in row])


def load_matrix(path) -> SentimentMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 2:
            raise SchemaError(f"{path}: missing matrix header")
        axis = header[0]
        calendar = build_calendar(header[1], header[-1])
        if [d.isoformat() for d in calendar.days()] != header[1:]:
            raise SchemaError(f"{path}: header dates are not consecutive")
        entities, rows = [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SchemaError(f"{path} line {line_no}: wrong cell count")
            entities.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return SentimentMatrix(
        axis=axis,
        entities=tuple(entities),
        calendar=calendar,
        values=np.array(rows, dtype=np.float64),
    )


def mean_max_pool(cls_vector, tokens) -> np.ndarray:
    """[cls ; elementwise mean(tokens) ; elementwise max(tokens)], length 3d."""
    cls_vector = np.asarray(cls_vector, dtype=np.float64)
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 2 or tokens.shape[0] == 0:
        raise ValueError("tokens must be a nonempty stack of vectors")
    if cls_vector.ndim != 1 or tokens.shape[1] != cls_vector.shape[0]:
        raise ValueError(
            f"dimension mismatch: cls {cls_vector.shape}, tokens {tokens.shape}"
        )
    return np.concatenate([cls_vector, tokens.mean(axis=0), tokens.max(axis=0)])


@dataclass(frozen=True)
class AbsaConfig:
    input_dim: int
    hidden: int = 256
    lr: float = 1e-4
    weight_decay: float = 1e-7
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0


class AbsaHead:
    """One-hidden-layer MLP from pooled features to a probability triple
    (negative, neutral, positive), normalized by softmax."""

    def __init__(self, w1, b1, w2, b2):
        self.w1 = w1 if isinstance(w1, ad.Tensor) else ad.param(w1)
        self.b1 = b1 if isinstance(b1, ad.Tensor) else ad.param(b1)
        self.w2 = w2 if isinstance(w2, ad.Tensor) else ad.param(w2)
        self.b2 = b2 if isinstance(b2, ad.Tensor) else ad.param(b2)
        self.loss_history = []

    @classmethod
    def initialize(cls, cfg: AbsaConfig):
        rng = np.random.default_rng(cfg.seed)
        return cls(
            ad.param((cfg.input_dim, cfg.hidden), rng),
            ad.param(np.zeros(cfg.hidden)),
            ad.param((cfg.hidden, 3), rng),
            ad.param(np.zeros(3)),
        )

    @property
    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, x: ad.Tensor) -> ad.Tensor:
        hidden = ad.relu(ad.add(ad.matmul(x, self.w1), self.b1))
        return ad.softmax(ad.add(ad.matmul(hidden, self.w2), self.b2))

    def probabilities(self, pooled) -> np.ndarray:
        pooled = np.atleast_2d(np.asarray(pooled, dtype=np.float64))
        if pooled.shape[1] != self.w1.shape[0]:
            raise ValueError(
                f"pooled dim {pooled.shape[1]}, head expects {self.w1.shape[0]}"
            )
        return self.forward(ad.Tensor(pooled)).data

    def save(self, path):
        manifest = {
            "kind": "absa_head",
            "weights": {
                name: {"shape": list(t.shape), "data": t.data.ravel().tolist()}
                for name, t in zip(("w1", "b1", "w2", "b2"), self.params)
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        if manifest.get("kind") != "absa_head":
            raise SchemaError(f"{path}: not a head manifest")
        arrays = {}
        for name in ("w1", "b1", "w2", "b2"):
            entry = manifest["weights"][name]
            arrays[name] = np.array(entry["data"], dtype=np.float64).reshape(
                entry["shape"]
            )
        return cls(arrays["w1"], arrays["b1"], arrays["w2"], arrays["b2"])


def train_head(labeled, cfg: AbsaConfig) -> AbsaHead:
    """Fit the head by MSE against soft labels with Adam; deterministic for
    a fixed seed. labeled items are (TokenFeatureSet, bond_id, soft_label)."""
    if not labeled:
        raise ValueError("empty training set")
    pooled, targets = [], []
    for feature_set, bond_id, soft_label in labeled:
        tokens = feature_set.per_bond_tokens.get(bond_id)
        if tokens is None:
            raise KeyError(f"{feature_set.text_id}: no tokens for bond {bond_id}")
        pooled.append(mean_max_pool(feature_set.cls_vector, tokens))
        targets.append(soft_label)
    x = np.asarray(pooled, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.shape[1] != cfg.input_dim:
        raise ValueError(f"pooled dim {x.shape[1]}, config says {cfg.input_dim}")

    head = AbsaHead.initialize(cfg)
    optim = ad.Adam(head.params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed + 1)
    n = x.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            probs = head.forward(ad.Tensor(x[batch]))
            loss = ad.mse(probs, ad.Tensor(y[batch]))
            optim.zero_grad()
            ad.backward(loss)
            optim.step()
            epoch_loss += loss.item() * len(batch)
        head.loss_history.append(epoch_loss / n)
    return head


def score_text(head: AbsaHead, pooled, mode: str = "argmax") -> float:
    """Map head probabilities to a polarity. argmax mode returns {-1,0,+1}
    with ties resolved toward neutral; expected mode returns p_pos - p_neg."""
    probs = head.probabilities(pooled)[0]
    if not np.all(np.isfinite(probs)):
        raise FloatingPointError("non-finite head output")
    p_neg, p_neu, p_pos = probs
    if mode == "expected":
        return float(p_pos - p_neg)
    if mode != "argmax":
        raise ValueError(f"unknown scoring mode {mode!r}")
    if p_neu >= p_neg and p_neu >= p_pos:
        return 0.0
    if p_neg > p_pos:
        return -1.0
    if p_pos > p_neg:
        return 1.0
    return 0.0  # negative/positive dead heat


def score_micro_texts(
    head: AbsaHead,
    texts: TextCollection,
    feature_sets: dict,
    mode: str = "argmax",
) -> list:
    """Score every (text, mentioned bond) pair that has token features."""
    if texts.stream != "micro":
        raise ValueError("micro scoring needs the micro stream")
    scores = []
    for record in texts:
        features = feature_sets.get(record.text_id)
        if features is None:
            continue
        for bond_id in record.mentioned_bonds:
            tokens = features.per_bond_tokens.get(bond_id)
            if tokens is None:
                continue
            pooled = mean_max_pool(features.cls_vector, tokens)
            scores.append(
                PerTextScore(
                    text_id=record.text_id,
                    target_id=bond_id,
                    date=record.date,
                    value=score_text(head, pooled, mode=mode),
                )
            )
    return scores


def daily_micro(scores) -> float:
    """Mean per-text value for one bond-day; no texts means 0."""
    values = [s.value if isinstance(s, PerTextScore) else float(s) for s in scores]
    if not values:
        return 0.0
    result = float(np.mean(values))
    if abs(result) > 1.0 + 1e-12:
        raise ValueError(f"bond-day mean {result} outside [-1, 1]")
    return result


def build_alpha_matrix(scores, bonds, calendar: Calendar) -> SentimentMatrix:
    """Bond-by-day matrix of daily mean polarities; days without texts are 0."""
    bonds = tuple(bonds)
    index = {b: i for i, b in enumerate(bonds)}
    buckets = {}
    for score in scores:
        if score.target_id not in index:
            raise KeyError(f"unknown bond {score.target_id!r}")
        key = (index[score.target_id], calendar.index(score.date))
        buckets.setdefault(key, []).append(score.value)
    values = np.zeros((len(bonds), len(calendar)))
    for (i, k), cell in buckets.items():
        values[i, k] = daily_micro(cell)
    return SentimentMatrix(
        axis="alpha", entities=bonds, calendar=calendar, values=values
    )


def load_token_features(path, texts: TextCollection | None = None) -> dict:
    """Read token-features JSONL into TokenFeatureSet objects keyed by text.

    When the text collection is supplied, every bond key must be among that
    text's mentioned bonds."""
    mentioned = None
    if texts is not None:
        mentioned = {r.text_id: set(r.mentioned_bonds) for r in texts}
    features = {}
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
            for key in ("text_id", "cls", "bonds"):
                if key not in obj:
                    raise SchemaError(f"{where}missing field {key!r}")
            text_id = str(obj["text_id"])
            if text_id in features:
                raise SchemaError(f"{where}duplicate text_id {text_id!r}")
            cls_vector = np.asarray(obj["cls"], dtype=np.float64)
            if cls_vector.ndim != 1 or cls_vector.size == 0:
                raise SchemaError(f"{where}cls must be a nonempty vector")
            d = cls_vector.shape[0]
            per_bond = {}
            for bond_id, stack in obj["bonds"].items():
                if mentioned is not None and bond_id not in mentioned.get(
                    text_id, set()
                ):
                    raise SchemaError(
                        f"{where}bond {bond_id!r} not mentioned by {text_id!r}"
                    )
                tokens = np.asarray(stack, dtype=np.float64)
                if tokens.ndim != 2 or tokens.shape[0] == 0 or tokens.shape[1] != d:
                    raise SchemaError(
                        f"{where}token stack for {bond_id!r} must be (n, {d})"
                    )
                per_bond[bond_id] = tokens
            features[text_id] = TokenFeatureSet(
                text_id=text_id, cls_vector=cls_vector, per_bond_tokens=per_bond
            )
    return features
