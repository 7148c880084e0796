"""Synthetic corpus and panel generator with a planted, lagged
sentiment-to-spread effect, so the headline forecasting claim is testable
at desk scale against a recorded ground truth."""

from __future__ import annotations

import datetime as dt
import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import FEATURE_NAMES
from .meso_slsa import KnowledgeGraph, save_graph
from .vecstore import save_store

SPREAD_PHI = 0.95  # autoregressive coefficient of the spread dynamics
LATENT_PHI = 0.9  # persistence of the latent sentiment processes
BURN_IN = 100


@dataclass(frozen=True)
class SynthConfig:
    n_bonds: int = 40
    n_days: int = 500
    n_industries: int = 8
    n_topics: int = 24
    embedding_dim: int = 16
    text_rate: float = 1.0  # micro texts per bond-day (Poisson mean)
    meso_text_rate: float = 0.5  # meso texts per industry-day
    effect_size: float = 0.15  # coefficient of lagged latent sentiment
    effect_lag: int = 2
    noise_std: float = 0.05
    obs_noise: float = 0.4  # noise on the latent value before quantizing
    dead_zone: float = 0.2  # half-width of the neutral polarity band
    label_fraction: float = 0.35
    start_date: str = "2019-01-01"
    seed: int = 0

    def __post_init__(self):
        counts = (
            self.n_bonds, self.n_days, self.n_industries,
            self.n_topics, self.embedding_dim,
        )
        if any(c < 1 for c in counts):
            raise ValueError("all counts must be >= 1")
        if min(self.noise_std, self.obs_noise, self.dead_zone) < 0:
            raise ValueError("noise levels must be >= 0")
        if self.effect_lag < 0:
            raise ValueError("effect_lag must be >= 0")
        if not 0 <= self.label_fraction <= 1:
            raise ValueError("label_fraction must lie in [0, 1]")


def _ar1(rng, phi: float, n: int, size) -> np.ndarray:
    """Unit-variance stationary AR(1) paths of length n (after burn-in)."""
    innov_std = np.sqrt(1.0 - phi * phi)
    x = rng.normal(0.0, 1.0, size=size)
    out = np.empty(size + (n,))
    for t in range(BURN_IN + n):
        x = phi * x + rng.normal(0.0, innov_std, size=size)
        if t >= BURN_IN:
            out[..., t - BURN_IN] = x
    return out


def _quantize(value: float, rng, obs_noise: float, dead: float) -> int:
    noisy = value + rng.normal(0.0, obs_noise)
    if noisy > dead:
        return 1
    if noisy < -dead:
        return -1
    return 0


def _soft_label(polarity: int) -> list:
    if polarity == -1:
        return [0.86, 0.10, 0.04]
    if polarity == 0:
        return [0.07, 0.86, 0.07]
    return [0.04, 0.10, 0.86]


def generate(cfg: SynthConfig, out_dir) -> dict:
    """Write every pipeline input file plus a ground-truth manifest into
    out_dir; byte-identical across reruns with the same config."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    start = dt.date.fromisoformat(cfg.start_date)
    days = [start + dt.timedelta(days=k) for k in range(cfg.n_days)]

    bonds = [f"B{i:04d}" for i in range(cfg.n_bonds)]
    industries = [f"IND{m:02d}" for m in range(cfg.n_industries)]
    topics = [f"TOP{n:03d}" for n in range(cfg.n_topics)]

    # Boolean industry-topic graph: a few topics per industry, and every
    # orphaned topic adopted so propagation reaches the whole registry
    g = np.zeros((cfg.n_industries, cfg.n_topics), dtype=np.int8)
    for m in range(cfg.n_industries):
        n_links = 2 + rng.binomial(max(cfg.n_topics - 2, 0), 0.08)
        linked = rng.choice(cfg.n_topics, size=min(n_links, cfg.n_topics), replace=False)
        g[m, linked] = 1
    for n in range(cfg.n_topics):
        if not g[:, n].any():
            g[rng.integers(cfg.n_industries), n] = 1
    graph = KnowledgeGraph(tuple(industries), tuple(topics), g)

    topic_vectors = rng.normal(size=(cfg.n_topics, cfg.embedding_dim))
    topic_vectors /= np.linalg.norm(topic_vectors, axis=1, keepdims=True)

    # 1 or 2 industry memberships per bond
    memberships = [
        sorted(rng.choice(cfg.n_industries, size=rng.integers(1, 3), replace=False))
        for _ in range(cfg.n_bonds)
    ]

    # latent sentiment: industry paths plus a firm-specific path
    u = _ar1(rng, LATENT_PHI, cfg.n_days, (cfg.n_industries,))
    v = _ar1(rng, LATENT_PHI, cfg.n_days, (cfg.n_bonds,))
    z = np.empty((cfg.n_bonds, cfg.n_days))
    for i in range(cfg.n_bonds):
        z[i] = (u[memberships[i]].mean(axis=0) + v[i]) / np.sqrt(2.0)

    # spread: level + AR(1) deviations whose innovations carry the lagged
    # sentiment effect
    mu = rng.uniform(6.0, 8.0, size=cfg.n_bonds)
    spreads = np.empty((cfg.n_bonds, cfg.n_days))
    s = np.zeros(cfg.n_bonds)
    for k in range(cfg.n_days):
        lagged = k - cfg.effect_lag
        drive = z[:, lagged] if lagged >= 0 else np.zeros(cfg.n_bonds)
        s = SPREAD_PHI * s + cfg.effect_size * drive + rng.normal(
            0.0, cfg.noise_std, size=cfg.n_bonds
        )
        spreads[:, k] = mu + s

    # panel features: persistent noise series, deliberately uninformative of
    # the spread innovations (the planted signal flows through texts only);
    # macro columns are shared across bonds, firm columns are per bond
    n_macro = 11
    macro = _ar1(rng, 0.8, cfg.n_days, (n_macro,))
    firm = _ar1(rng, 0.8, cfg.n_days, (cfg.n_bonds, len(FEATURE_NAMES) - n_macro))
    scales = rng.uniform(0.5, 4.0, size=len(FEATURE_NAMES))
    offsets = rng.uniform(-2.0, 6.0, size=len(FEATURE_NAMES))

    # micro texts: per bond-day Poisson counts, polarity quantized from the
    # bond's latent path; anchor clusters make the head's task separable
    anchors = rng.normal(0.0, 1.0, size=(3, cfg.embedding_dim))
    micro_texts, token_features = [], []
    counter = 0
    for k, day in enumerate(days):
        for i, bond in enumerate(bonds):
            for _ in range(rng.poisson(cfg.text_rate)):
                polarity = _quantize(z[i, k], rng, cfg.obs_noise, cfg.dead_zone)
                text_id = f"mtx{counter:06d}"
                counter += 1
                record = {
                    "text_id": text_id,
                    "date": day.isoformat(),
                    "stream": "micro",
                    "mentioned_bonds": [bond],
                }
                if rng.random() < cfg.label_fraction:
                    record["soft_label"] = _soft_label(polarity)
                micro_texts.append(record)
                anchor = anchors[polarity + 1]
                cls_vec = anchor + rng.normal(0.0, 0.3, size=cfg.embedding_dim)
                n_tokens = int(rng.integers(2, 6))
                stack = anchor + rng.normal(
                    0.0, 0.3, size=(n_tokens, cfg.embedding_dim)
                )
                token_features.append(
                    {
                        "text_id": text_id,
                        "cls": [float(x) for x in cls_vec],
                        "bonds": {bond: [[float(x) for x in row] for row in stack]},
                    }
                )

    # meso texts: per industry-day Poisson counts on the industry's linked
    # topics, polarity quantized from the industry path
    meso_texts, topic_polarities, text_embeddings = [], [], []
    counter = 0
    for k, day in enumerate(days):
        for m in range(cfg.n_industries):
            linked = np.flatnonzero(g[m])
            for _ in range(rng.poisson(cfg.meso_text_rate)):
                polarity = _quantize(u[m, k], rng, cfg.obs_noise, cfg.dead_zone)
                topic = int(linked[rng.integers(linked.size)])
                text_id = f"stx{counter:06d}"
                counter += 1
                meso_texts.append(
                    {
                        "text_id": text_id,
                        "date": day.isoformat(),
                        "stream": "meso",
                        "mentioned_bonds": [],
                    }
                )
                topic_polarities.append(
                    {"text_id": text_id, "date": day.isoformat(), "polarity": polarity}
                )
                vec = topic_vectors[topic] + rng.normal(
                    0.0, 0.25, size=cfg.embedding_dim
                )
                vec /= np.linalg.norm(vec)
                text_embeddings.append((text_id, vec))

    paths = {
        "texts_micro": os.path.join(out_dir, "texts_micro.jsonl"),
        "texts_meso": os.path.join(out_dir, "texts_meso.jsonl"),
        "token_features": os.path.join(out_dir, "token_features.jsonl"),
        "topic_polarities": os.path.join(out_dir, "topic_polarities.jsonl"),
        "embeddings_texts": os.path.join(out_dir, "embeddings_texts.jsonl"),
        "embeddings_topics": os.path.join(out_dir, "embeddings_topics.jsonl"),
        "graph": os.path.join(out_dir, "graph.csv"),
        "panel": os.path.join(out_dir, "panel.csv"),
        "bond_industries": os.path.join(out_dir, "bond_industries.csv"),
        "ground_truth": os.path.join(out_dir, "ground_truth.json"),
    }

    def write_jsonl(path, records):
        with open(path, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record) + "\n")

    write_jsonl(paths["texts_micro"], micro_texts)
    write_jsonl(paths["texts_meso"], meso_texts)
    write_jsonl(paths["token_features"], token_features)
    write_jsonl(paths["topic_polarities"], topic_polarities)
    save_store(
        paths["embeddings_texts"],
        [t for t, _ in text_embeddings],
        np.array([v for _, v in text_embeddings]).reshape(
            len(text_embeddings), cfg.embedding_dim
        ),
    )
    save_store(paths["embeddings_topics"], topics, topic_vectors)
    save_graph(paths["graph"], graph)

    with open(paths["panel"], "w", encoding="utf-8") as fh:
        fh.write(",".join(["bond_id", "date"] + list(FEATURE_NAMES) + ["credit_spread"]) + "\n")
        for i, bond in enumerate(bonds):
            for k, day in enumerate(days):
                values = np.concatenate([macro[:, k], firm[i, :, k]])
                values = values * scales + offsets
                cells = [bond, day.isoformat()]
                cells += [repr(float(x)) for x in values]
                cells.append(repr(float(spreads[i, k])))
                fh.write(",".join(cells) + "\n")

    with open(paths["bond_industries"], "w", encoding="utf-8") as fh:
        fh.write("bond_id,industry_id\n")
        for i, bond in enumerate(bonds):
            for m in memberships[i]:
                fh.write(f"{bond},{industries[m]}\n")

    manifest = {
        "config": asdict(cfg),
        "spread_phi": SPREAD_PHI,
        "latent_phi": LATENT_PHI,
        "bonds": bonds,
        "industries": industries,
        "topics": topics,
        "memberships": [[industries[m] for m in ms] for ms in memberships],
        "spread_level": [float(x) for x in mu],
        "latent_bond": [[float(x) for x in row] for row in z],
        "latent_industry": [[float(x) for x in row] for row in u],
    }
    with open(paths["ground_truth"], "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)

    return paths
