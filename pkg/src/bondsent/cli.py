"""Command-line pipeline driver: one subcommand per stage plus an
end-to-end backtest, all file-mediated so a manual stage sequence and the
orchestrated run produce identical artifacts."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import sys
from dataclasses import fields

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import click
import numpy as np

from . import __version__, composite, corpus, forecast, meso_slsa, micro_absa, stats, synth, vecstore

ENV_PREFIX = "BONDSENT"
LOCK_NAME = ".bondsent.lock"


class CliError(Exception):
    pass


def _load_config(path):
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


class Settings:
    """Resolved key/value settings for one subcommand.

    Precedence: command line, then BONDSENT_<SECTION>_<KEY> environment
    variables, then the TOML config section, then the default."""

    def __init__(self, config, section):
        self.config = config
        self.section = section
        self.resolved = {}

    def get(self, key, cli_value, default=None, cast=None):
        value, source = default, "default"
        table = self.config.get(self.section, {})
        if key in table:
            value, source = table[key], "config"
        env_name = f"{ENV_PREFIX}_{self.section}_{key}".upper().replace("-", "_")
        if env_name in os.environ:
            value, source = os.environ[env_name], "env"
            if cast is not None:
                value = cast(value)
        if cli_value is not None:
            value, source = cli_value, "cli"
        if cast is not None and value is not None and source != "env":
            value = cast(value)
        self.resolved[key] = value
        return value


def _config_hash(resolved):
    canon = json.dumps(resolved, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _write_manifest(out_dir, command, resolved):
    manifest = {
        "command": command,
        "config_hash": _config_hash(resolved),
        "seed": resolved.get("seed"),
        "settings": {k: resolved[k] for k in sorted(resolved)},
        "versions": {
            "bondsent": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    path = os.path.join(out_dir, f"manifest_{command.replace('-', '_')}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True, default=str)
    return path


class _Lock:
    """One run at a time per output directory."""

    def __init__(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        self.path = os.path.join(out_dir, LOCK_NAME)

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise CliError(
                f"output directory is locked by another run ({self.path}); "
                "remove the file if that run is dead"
            ) from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        try:
            os.remove(self.path)
        except FileNotFoundError:
            pass
        return False


def _fail(exc):
    payload = {"error": type(exc).__name__, "message": str(exc)}
    click.echo(json.dumps(payload), err=True)
    sys.exit(1)


def _guarded(fn):
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SystemExit:
            raise
        except Exception as exc:  # noqa: BLE001 - uniform CLI error contract
            _fail(exc)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _calendar(s, start_cli, end_cli):
    start = s.get("calendar_start", start_cli)
    end = s.get("calendar_end", end_cli)
    if start is None or end is None:
        raise CliError("calendar_start and calendar_end are required")
    return corpus.build_calendar(start, end)


@click.group()
def main():
    """Composite bond-sentiment pipeline."""


config_option = click.option("--config", type=click.Path(exists=True), default=None,
                             help="TOML config file.")
out_dir_option = click.option("--out-dir", default=".", show_default=True)
seed_option = click.option("--seed", type=int, default=None)


@main.command("synth")
@config_option
@out_dir_option
@seed_option
@click.option("--n-bonds", type=int, default=None)
@click.option("--n-days", type=int, default=None)
@click.option("--n-industries", type=int, default=None)
@click.option("--n-topics", type=int, default=None)
@click.option("--embedding-dim", type=int, default=None)
@click.option("--effect-size", type=float, default=None)
@click.option("--effect-lag", type=int, default=None)
@click.option("--noise-std", type=float, default=None)
@click.option("--obs-noise", type=float, default=None)
@click.option("--dead-zone", type=float, default=None)
@click.option("--text-rate", type=float, default=None)
@click.option("--meso-text-rate", type=float, default=None)
@click.option("--label-fraction", type=float, default=None)
@click.option("--start-date", default=None)
@_guarded
def synth_cmd(config, out_dir, seed, n_bonds, n_days, n_industries, n_topics,
              embedding_dim, effect_size, effect_lag, noise_std, obs_noise,
              dead_zone, text_rate, meso_text_rate, label_fraction, start_date):
    """Generate a synthetic corpus, panel and ground-truth manifest."""
    s = Settings(_load_config(config), "synth")
    cli_values = {
        "seed": seed, "n_bonds": n_bonds, "n_days": n_days,
        "n_industries": n_industries, "n_topics": n_topics,
        "embedding_dim": embedding_dim, "effect_size": effect_size,
        "effect_lag": effect_lag, "noise_std": noise_std,
        "obs_noise": obs_noise, "dead_zone": dead_zone,
        "text_rate": text_rate, "meso_text_rate": meso_text_rate,
        "label_fraction": label_fraction, "start_date": start_date,
    }
    kwargs = {}
    for f in fields(synth.SynthConfig):
        cast = type(f.default)
        kwargs[f.name] = s.get(f.name, cli_values.get(f.name), f.default, cast)
    with _Lock(out_dir):
        paths = synth.generate(synth.SynthConfig(**kwargs), out_dir)
        _write_manifest(out_dir, "synth", s.resolved)
    click.echo(json.dumps({"written": sorted(paths)}))


@main.command("ingest")
@config_option
@out_dir_option
@click.option("--texts", type=click.Path(exists=True), required=True)
@click.option("--stream", type=click.Choice(list(corpus.STREAMS)), required=True)
@click.option("--calendar-start", default=None)
@click.option("--calendar-end", default=None)
@_guarded
def ingest_cmd(config, out_dir, texts, stream, calendar_start, calendar_end):
    """Validate a texts file and write an ingest summary."""
    s = Settings(_load_config(config), "ingest")
    start = s.get("calendar_start", calendar_start)
    end = s.get("calendar_end", calendar_end)
    calendar = None
    if start is not None and end is not None:
        calendar = corpus.build_calendar(start, end)
    s.resolved.update({"texts": texts, "stream": stream})
    with _Lock(out_dir):
        collection = corpus.ingest_texts(texts, stream, calendar=calendar)
        dates = [r.date for r in collection.records]
        summary = {
            "stream": stream,
            "texts": len(collection.records),
            "labeled": len(collection.labeled()),
            "first_date": min(dates).isoformat() if dates else None,
            "last_date": max(dates).isoformat() if dates else None,
        }
        with open(os.path.join(out_dir, f"ingest_{stream}.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(summary, fh, indent=1)
        _write_manifest(out_dir, "ingest", s.resolved)
    click.echo(json.dumps(summary))


def _stage_train_absa(s, out_dir):
    texts = corpus.ingest_texts(s.resolved["texts_micro"], "micro")
    features = micro_absa.load_token_features(
        s.resolved["token_features"], texts=texts
    )
    labeled = [
        (features[r.text_id], bond, r.soft_label)
        for r in texts.labeled()
        for bond in r.mentioned_bonds
    ]
    if not labeled:
        raise CliError("no labeled micro texts to train on")
    sample = next(iter(features.values()))
    cfg = micro_absa.AbsaConfig(
        input_dim=3 * sample.cls_vector.shape[0],
        hidden=s.resolved["hidden"],
        lr=s.resolved["lr"],
        weight_decay=s.resolved["weight_decay"],
        epochs=s.resolved["epochs"],
        batch_size=s.resolved["batch_size"],
        seed=s.resolved["seed"],
    )
    head = micro_absa.train_head(labeled, cfg)
    path = os.path.join(out_dir, "absa_head.json")
    head.save(path)
    return path, head.loss_history


def _absa_settings(s, config_values):
    s.get("texts_micro", config_values.get("texts_micro"))
    s.get("token_features", config_values.get("token_features"))
    s.get("hidden", config_values.get("hidden"), 256, int)
    s.get("lr", config_values.get("lr"), 1e-4, float)
    s.get("weight_decay", config_values.get("weight_decay"), 1e-7, float)
    s.get("epochs", config_values.get("epochs"), 50, int)
    s.get("batch_size", config_values.get("batch_size"), 32, int)
    s.get("seed", config_values.get("seed"), 0, int)
    for key in ("texts_micro", "token_features"):
        if s.resolved[key] is None:
            raise CliError(f"{key} is required")


@main.command("train-absa")
@config_option
@out_dir_option
@seed_option
@click.option("--texts-micro", type=click.Path(exists=True), default=None)
@click.option("--token-features", type=click.Path(exists=True), default=None)
@click.option("--hidden", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@_guarded
def train_absa_cmd(config, out_dir, seed, texts_micro, token_features, hidden,
                   lr, epochs, batch_size):
    """Fit the firm-sentiment head on the labeled micro subset."""
    s = Settings(_load_config(config), "absa")
    _absa_settings(s, {
        "texts_micro": texts_micro, "token_features": token_features,
        "hidden": hidden, "lr": lr, "epochs": epochs,
        "batch_size": batch_size, "seed": seed,
    })
    with _Lock(out_dir):
        path, losses = _stage_train_absa(s, out_dir)
        _write_manifest(out_dir, "train-absa", s.resolved)
    click.echo(json.dumps({"head": path, "final_loss": losses[-1]}))


def _stage_score_micro(s, out_dir, calendar, head_path=None):
    texts = corpus.ingest_texts(s.resolved["texts_micro"], "micro", calendar=calendar)
    features = micro_absa.load_token_features(
        s.resolved["token_features"], texts=texts
    )
    head = micro_absa.AbsaHead.load(head_path or s.resolved["head"])
    panels = corpus.load_panels(s.resolved["panel"])
    scores = micro_absa.score_micro_texts(head, texts, features)
    alpha = micro_absa.build_alpha_matrix(scores, sorted(panels), calendar)
    path = os.path.join(out_dir, "alpha.csv")
    micro_absa.save_matrix(path, alpha)
    return path


@main.command("score-micro")
@config_option
@out_dir_option
@click.option("--texts-micro", type=click.Path(exists=True), default=None)
@click.option("--token-features", type=click.Path(exists=True), default=None)
@click.option("--head", type=click.Path(exists=True), default=None)
@click.option("--panel", type=click.Path(exists=True), default=None)
@click.option("--calendar-start", default=None)
@click.option("--calendar-end", default=None)
@_guarded
def score_micro_cmd(config, out_dir, texts_micro, token_features, head, panel,
                    calendar_start, calendar_end):
    """Score every micro text and write the bond-by-day alpha matrix."""
    s = Settings(_load_config(config), "score_micro")
    calendar = _calendar(s, calendar_start, calendar_end)
    for key, value in (("texts_micro", texts_micro),
                       ("token_features", token_features),
                       ("head", head), ("panel", panel)):
        if s.get(key, value) is None:
            raise CliError(f"{key} is required")
    with _Lock(out_dir):
        path = _stage_score_micro(s, out_dir, calendar)
        _write_manifest(out_dir, "score-micro", s.resolved)
    click.echo(json.dumps({"alpha": path}))


def _stage_score_meso(s, out_dir, calendar):
    texts = corpus.ingest_texts(s.resolved["texts_meso"], "meso", calendar=calendar)
    polarities = meso_slsa.load_topic_polarities(s.resolved["topic_polarities"])
    text_store = vecstore.load_store(s.resolved["text_embeddings"])
    topic_store = vecstore.load_store(s.resolved["topic_embeddings"])
    graph = meso_slsa.load_graph(s.resolved["graph"])
    beta = meso_slsa.compute_beta(
        texts, polarities, text_store, topic_store, graph, calendar,
        k=s.resolved["top_k"],
    )
    beta_std = meso_slsa.standardize_beta(beta)
    path = os.path.join(out_dir, "beta.csv")
    micro_absa.save_matrix(path, beta_std)
    return path


@main.command("score-meso")
@config_option
@out_dir_option
@click.option("--texts-meso", type=click.Path(exists=True), default=None)
@click.option("--topic-polarities", type=click.Path(exists=True), default=None)
@click.option("--text-embeddings", type=click.Path(exists=True), default=None)
@click.option("--topic-embeddings", type=click.Path(exists=True), default=None)
@click.option("--graph", type=click.Path(exists=True), default=None)
@click.option("--top-k", type=int, default=None)
@click.option("--calendar-start", default=None)
@click.option("--calendar-end", default=None)
@_guarded
def score_meso_cmd(config, out_dir, texts_meso, topic_polarities, text_embeddings,
                   topic_embeddings, graph, top_k, calendar_start, calendar_end):
    """Propagate topic polarities through the graph into the standardized
    industry-by-day beta matrix."""
    s = Settings(_load_config(config), "score_meso")
    calendar = _calendar(s, calendar_start, calendar_end)
    for key, value in (("texts_meso", texts_meso),
                       ("topic_polarities", topic_polarities),
                       ("text_embeddings", text_embeddings),
                       ("topic_embeddings", topic_embeddings),
                       ("graph", graph)):
        if s.get(key, value) is None:
            raise CliError(f"{key} is required")
    s.get("top_k", top_k, 5, int)
    with _Lock(out_dir):
        path = _stage_score_meso(s, out_dir, calendar)
        _write_manifest(out_dir, "score-meso", s.resolved)
    click.echo(json.dumps({"beta": path}))


def _wavelet_spec(s, cli_values):
    return composite.WaveletSpec(
        family=s.get("family", cli_values.get("family"), "db4_8tap"),
        level=s.get("level", cli_values.get("level"), 6, int),
        mode=s.get("mode", cli_values.get("mode"), "full_sample"),
        boundary=s.get("boundary", cli_values.get("boundary"), "symmetric"),
        window=s.get("window", cli_values.get("window"), 128, int),
        shrink=s.get("shrink", cli_values.get("shrink"), "zero"),
    )


def _stage_compose(s, out_dir, spec, alpha_path=None, beta_path=None):
    alpha = micro_absa.load_matrix(alpha_path or s.resolved["alpha"])
    beta = micro_absa.load_matrix(beta_path or s.resolved["beta"])
    panels = corpus.load_panels(
        s.resolved["panel"], industries_path=s.resolved["industries"]
    )
    comps = composite.build_composite(alpha, beta, panels, spec)
    path = os.path.join(out_dir, "composite.csv")
    composite.save_composite(path, comps, alpha.calendar)
    return path


@main.command("compose")
@config_option
@out_dir_option
@click.option("--alpha", type=click.Path(exists=True), default=None)
@click.option("--beta", type=click.Path(exists=True), default=None)
@click.option("--panel", type=click.Path(exists=True), default=None)
@click.option("--industries", type=click.Path(exists=True), default=None)
@click.option("--family", default=None)
@click.option("--level", type=int, default=None)
@click.option("--mode", type=click.Choice(list(composite.MODES)), default=None)
@click.option("--boundary", type=click.Choice(list(composite.BOUNDARIES)), default=None)
@click.option("--window", type=int, default=None)
@click.option("--shrink", type=click.Choice(list(composite.SHRINKS)), default=None)
@_guarded
def compose_cmd(config, out_dir, alpha, beta, panel, industries, family, level,
                mode, boundary, window, shrink):
    """Sum firm and industry sentiment per bond and smooth the result."""
    s = Settings(_load_config(config), "compose")
    for key, value in (("alpha", alpha), ("beta", beta), ("panel", panel),
                       ("industries", industries)):
        if s.get(key, value) is None:
            raise CliError(f"{key} is required")
    spec = _wavelet_spec(s, {"family": family, "level": level, "mode": mode,
                             "boundary": boundary, "window": window,
                             "shrink": shrink})
    with _Lock(out_dir):
        path = _stage_compose(s, out_dir, spec)
        _write_manifest(out_dir, "compose", s.resolved)
    click.echo(json.dumps({"composite": path}))


def _forecast_config(s, cli_values):
    return forecast.ForecastConfig(
        T=s.get("t", cli_values.get("t"), 21, int),
        q=s.get("q", cli_values.get("q"), 2, int),
        d_model=s.get("d_model", cli_values.get("d_model"), 64, int),
        layers=s.get("layers", cli_values.get("layers"), 5, int),
        heads=s.get("heads", cli_values.get("heads"), 4, int),
        ff=s.get("ff", cli_values.get("ff"), 128, int),
        lr=s.get("lr", cli_values.get("lr"), 1e-4, float),
        weight_decay=s.get("weight_decay", cli_values.get("weight_decay"), 1e-7, float),
        momentum=s.get("momentum", cli_values.get("momentum"), 0.9, float),
        epochs=s.get("epochs", cli_values.get("epochs"), 50, int),
        batch_size=s.get("batch_size", cli_values.get("batch_size"), 64, int),
        seed=s.get("seed", cli_values.get("seed"), 0, int),
        pool=s.get("pool", cli_values.get("pool"), "last"),
        include_target_history=s.get(
            "include_target_history", cli_values.get("include_target_history"),
            True, bool,
        ),
    )


def _sentiment_block(bond_id, comps, alpha, beta, panels, spec, separate):
    """Per-bond sentiment columns: the summed composite, or the two levels
    smoothed separately when the ablation keeps them apart."""
    if not separate:
        return comps[bond_id].smoothed
    alpha_row = alpha.row(bond_id)
    meso_row = meso_slsa.bond_meso_series(panels[bond_id].industry_ids, beta)
    return np.stack(
        [composite.smooth(alpha_row, spec), composite.smooth(meso_row, spec)],
        axis=1,
    )


def _split_windows(panels, splits, fcfg, with_sentiment, sentiment_for):
    sets = {name: [] for name in corpus.SPLITS}
    for bond_id in sorted(panels):
        block = sentiment_for(bond_id) if with_sentiment else None
        windows = forecast.build_windows(
            panels[bond_id], fcfg.T, fcfg.q,
            with_sentiment=with_sentiment, composite=block,
            include_target_history=fcfg.include_target_history,
        )
        sets[splits.mapping[bond_id]].extend(windows)
    return sets


def _train_and_eval(sets, fcfg):
    train, valid, test, _ = forecast.standardize_windows(
        sets["train"], sets["valid"], sets["test"]
    )
    model = forecast.train_forecaster(train, fcfg, valid_samples=valid)
    windows, targets = forecast.stack_windows(test)
    preds = model.predict_batch(windows)
    mae, mape = forecast.evaluate(preds, targets)
    report = forecast.EvalReport(mae=mae, mape=mape, n_test=len(test))
    errors = np.abs(preds - targets)
    return model, report, errors, test


def _save_errors(path, samples, errors):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bond_id", "target_date", "abs_error"])
        for sample, err in zip(samples, errors):
            writer.writerow(
                [sample.bond_id, sample.target_date.isoformat(), repr(float(err))]
            )


def _load_errors(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        return np.array([float(row[2]) for row in reader])


def _stage_backtest(s, out_dir, calendar, spec, fcfg, run_with, run_without,
                    separate, n_permutations, head_path):
    panels = corpus.load_panels(
        s.resolved["panel"], industries_path=s.resolved["industries"]
    )
    splits = corpus.split_bonds(sorted(panels), seed=s.resolved["splits_seed"])
    splits.save_csv(os.path.join(out_dir, "splits.csv"))

    alpha_path = _stage_score_micro(s, out_dir, calendar, head_path=head_path)
    beta_path = _stage_score_meso(s, out_dir, calendar)
    composite_path = _stage_compose(s, out_dir, spec,
                                    alpha_path=alpha_path, beta_path=beta_path)
    alpha = micro_absa.load_matrix(alpha_path)
    beta = micro_absa.load_matrix(beta_path)
    series = composite.load_composite(composite_path)
    comps = {
        b: composite.CompositeSeries(b, raw, smoothed, spec)
        for b, (raw, smoothed) in series.items()
    }

    report = {
        "T": fcfg.T, "q": fcfg.q,
        "smoothing_mode": spec.mode,
        "separate_features": separate,
        "splits": {name: len(splits.bonds(name)) for name in corpus.SPLITS},
        "window_counts": None,
        "baseline": None, "with_sentiment": None,
        "delta_mae_pct": None, "delta_mape_pct": None, "p_value": None,
    }

    def sentiment_for(bond_id):
        return _sentiment_block(bond_id, comps, alpha, beta, panels, spec, separate)

    err_base = err_sent = None
    if run_without:
        sets = _split_windows(panels, splits, fcfg, False, sentiment_for)
        report["window_counts"] = {k: len(v) for k, v in sets.items()}
        model, eval_report, err_base, test = _train_and_eval(sets, fcfg)
        model.save(os.path.join(out_dir, "forecaster_baseline.json"))
        _save_errors(os.path.join(out_dir, "errors_baseline.csv"), test, err_base)
        report["baseline"] = {"mae": eval_report.mae, "mape": eval_report.mape,
                              "n_test": eval_report.n_test}
    if run_with:
        sets = _split_windows(panels, splits, fcfg, True, sentiment_for)
        report["window_counts"] = {k: len(v) for k, v in sets.items()}
        model, eval_report, err_sent, test = _train_and_eval(sets, fcfg)
        model.save(os.path.join(out_dir, "forecaster_sentiment.json"))
        _save_errors(os.path.join(out_dir, "errors_sentiment.csv"), test, err_sent)
        report["with_sentiment"] = {"mae": eval_report.mae, "mape": eval_report.mape,
                                    "n_test": eval_report.n_test}

    if err_base is not None and err_sent is not None:
        base = forecast.EvalReport(**report["baseline"])
        sent = forecast.EvalReport(**report["with_sentiment"])
        d_mae, d_mape = forecast.delta_report(base, sent)
        report["delta_mae_pct"] = d_mae
        report["delta_mape_pct"] = d_mape
        report["p_value"] = stats.permutation_test(
            err_base, err_sent,
            stats.PermutationConfig(n_permutations=n_permutations,
                                    seed=s.resolved["splits_seed"]),
        )

    path = os.path.join(out_dir, "backtest_report.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
    return path, report


@main.command("backtest")
@config_option
@out_dir_option
@seed_option
@click.option("--texts-micro", type=click.Path(exists=True), default=None)
@click.option("--token-features", type=click.Path(exists=True), default=None)
@click.option("--texts-meso", type=click.Path(exists=True), default=None)
@click.option("--topic-polarities", type=click.Path(exists=True), default=None)
@click.option("--text-embeddings", type=click.Path(exists=True), default=None)
@click.option("--topic-embeddings", type=click.Path(exists=True), default=None)
@click.option("--graph", type=click.Path(exists=True), default=None)
@click.option("--panel", type=click.Path(exists=True), default=None)
@click.option("--industries", type=click.Path(exists=True), default=None)
@click.option("--head", type=click.Path(exists=True), default=None,
              help="Reuse a trained head instead of fitting one here.")
@click.option("--calendar-start", default=None)
@click.option("--calendar-end", default=None)
@click.option("--with-sentiment", "with_s", is_flag=True, default=False)
@click.option("--without-sentiment", "without_s", is_flag=True, default=False)
@click.option("--separate-features", is_flag=True, default=False)
@click.option("--mode", type=click.Choice(list(composite.MODES)), default=None)
@click.option("--level", type=int, default=None)
@click.option("--t", type=int, default=None)
@click.option("--q", type=int, default=None)
@click.option("--layers", type=int, default=None)
@click.option("--d-model", type=int, default=None)
@click.option("--heads", type=int, default=None)
@click.option("--ff", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--n-permutations", type=int, default=None)
@click.option("--top-k", type=int, default=None)
@_guarded
def backtest_cmd(config, out_dir, seed, texts_micro, token_features, texts_meso,
                 topic_polarities, text_embeddings, topic_embeddings, graph,
                 panel, industries, head, calendar_start, calendar_end, with_s,
                 without_s, separate_features, mode, level, t, q, layers,
                 d_model, heads, ff, epochs, batch_size, n_permutations, top_k):
    """Run the pipeline end to end and compare forecasts with and without
    the composite sentiment feature."""
    raw_config = _load_config(config)
    s = Settings(raw_config, "backtest")
    calendar = _calendar(s, calendar_start, calendar_end)
    for key, value in (("texts_micro", texts_micro),
                       ("token_features", token_features),
                       ("texts_meso", texts_meso),
                       ("topic_polarities", topic_polarities),
                       ("text_embeddings", text_embeddings),
                       ("topic_embeddings", topic_embeddings),
                       ("graph", graph), ("panel", panel),
                       ("industries", industries)):
        if s.get(key, value) is None:
            raise CliError(f"{key} is required")
    s.get("top_k", top_k, 5, int)
    s.get("splits_seed", seed, 0, int)
    n_perm = s.get("n_permutations", n_permutations, 10000, int)
    separate = s.get("separate_features", separate_features or None, False, bool)
    spec = _wavelet_spec(s, {"mode": mode, "level": level})
    fcfg = _forecast_config(s, {
        "t": t, "q": q, "layers": layers, "d_model": d_model, "heads": heads,
        "ff": ff, "epochs": epochs, "batch_size": batch_size, "seed": seed,
    })
    if not with_s and not without_s:
        with_s = without_s = True
    with _Lock(out_dir):
        head_path = s.get("head", head)
        if head_path is None:
            absa = Settings(raw_config, "absa")
            _absa_settings(absa, {
                "texts_micro": s.resolved["texts_micro"],
                "token_features": s.resolved["token_features"],
                "seed": s.resolved["splits_seed"],
            })
            head_path, _ = _stage_train_absa(absa, out_dir)
        path, report = _stage_backtest(
            s, out_dir, calendar, spec, fcfg, with_s, without_s, separate,
            n_perm, head_path
        )
        _write_manifest(out_dir, "backtest", s.resolved)
    click.echo(json.dumps(report))


@main.command("perm-test")
@config_option
@out_dir_option
@seed_option
@click.option("--errors-a", type=click.Path(exists=True), required=True)
@click.option("--errors-b", type=click.Path(exists=True), required=True)
@click.option("--n-permutations", type=int, default=None)
@_guarded
def perm_test_cmd(config, out_dir, seed, errors_a, errors_b, n_permutations):
    """Paired sign-flip significance test on two saved error columns."""
    s = Settings(_load_config(config), "perm_test")
    s.resolved.update({"errors_a": errors_a, "errors_b": errors_b})
    cfg = stats.PermutationConfig(
        n_permutations=s.get("n_permutations", n_permutations, 10000, int),
        seed=s.get("seed", seed, 0, int),
    )
    a, b = _load_errors(errors_a), _load_errors(errors_b)
    with _Lock(out_dir):
        p = stats.permutation_test(a, b, cfg)
        result = {
            "observed": float(abs(a.mean() - b.mean())),
            "p_value": p,
            "n_pairs": int(len(a)),
            "n_permutations": cfg.n_permutations,
        }
        with open(os.path.join(out_dir, "perm_test.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(result, fh, indent=1)
        _write_manifest(out_dir, "perm-test", s.resolved)
    click.echo(json.dumps(result))


@main.command("importance")
@config_option
@out_dir_option
@seed_option
@click.option("--model", "model_path", type=click.Path(exists=True), default=None)
@click.option("--panel", type=click.Path(exists=True), default=None)
@click.option("--industries", type=click.Path(exists=True), default=None)
@click.option("--composite", "composite_path", type=click.Path(exists=True), default=None)
@click.option("--splits", type=click.Path(exists=True), default=None)
@click.option("--feature", default=None, help="Window column name or index.")
@click.option("--n-repeats", type=int, default=None)
@_guarded
def importance_cmd(config, out_dir, seed, model_path, panel, industries,
                   composite_path, splits, feature, n_repeats):
    """Permutation importance of one window column on the test split."""
    s = Settings(_load_config(config), "importance")
    for key, value in (("model", model_path), ("panel", panel),
                       ("composite", composite_path), ("splits", splits)):
        if s.get(key, value) is None:
            raise CliError(f"{key} is required")
    s.get("industries", industries)
    feature = s.get("feature", feature, forecast.SENTIMENT_FEATURE)
    repeats = s.get("n_repeats", n_repeats, 5, int)
    seed = s.get("seed", seed, 0, int)

    model = forecast.Forecaster.load(s.resolved["model"])
    fcfg = model.cfg
    panels = corpus.load_panels(s.resolved["panel"],
                                industries_path=s.resolved["industries"])
    series = composite.load_composite(s.resolved["composite"])
    assignment = corpus.load_splits(s.resolved["splits"])

    with_sentiment = model.input_dim > len(corpus.FEATURE_NAMES) + int(
        fcfg.include_target_history
    )
    columns = forecast.feature_columns(with_sentiment, fcfg.include_target_history)
    if model.input_dim != len(columns):
        raise CliError(
            f"model expects {model.input_dim} window columns but the standard "
            f"layout has {len(columns)}; importance only supports models "
            "trained on the summed composite"
        )
    try:
        feature_index = int(feature)
    except ValueError:
        if feature not in columns:
            raise CliError(f"unknown feature {feature!r}; "
                           f"window columns: {', '.join(columns)}") from None
        feature_index = columns.index(feature)

    sets = {name: [] for name in corpus.SPLITS}
    for bond_id in sorted(panels):
        block = series[bond_id][1] if with_sentiment else None
        sets[assignment.mapping[bond_id]].extend(
            forecast.build_windows(
                panels[bond_id], fcfg.T, fcfg.q,
                with_sentiment=with_sentiment, composite=block,
                include_target_history=fcfg.include_target_history,
            )
        )
    train, test, _ = forecast.standardize_windows(sets["train"], sets["test"])
    windows, targets = forecast.stack_windows(test)
    with _Lock(out_dir):
        degradation = stats.permutation_importance(
            model, windows, targets, feature_index,
            n_repeats=repeats, seed=seed,
        )
        result = {
            "feature": columns[feature_index] if feature_index < len(columns) else feature_index,
            "feature_index": feature_index,
            "mae_degradation": degradation,
            "n_repeats": repeats,
            "n_test": int(len(test)),
        }
        with open(os.path.join(out_dir, "importance.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(result, fh, indent=1)
        _write_manifest(out_dir, "importance", s.resolved)
    click.echo(json.dumps(result))


def _plot_report(out_dir, composite_path, panel_path):
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    series = composite.load_composite(composite_path)
    bond_id = sorted(series)[0]
    raw, smoothed = series[bond_id]

    fig, ax = plt.subplots(figsize=(9, 4))
    ax.plot(raw, lw=0.7, alpha=0.6, label="raw composite")
    ax.plot(smoothed, lw=1.5, label="smoothed composite")
    ax.set_xlabel("day")
    ax.set_ylabel("sentiment")
    ax.set_title(f"composite sentiment, {bond_id}")
    ax.legend()
    composite_svg = os.path.join(out_dir, "composite_series.svg")
    fig.savefig(composite_svg, metadata={"Date": None})
    plt.close(fig)

    paths = [composite_svg]
    if panel_path:
        panels = corpus.load_panels(panel_path)
        panel = panels[bond_id]
        fig, ax = plt.subplots(figsize=(9, 4))
        ax.plot(smoothed, lw=1.2, label="smoothed composite")
        ax2 = ax.twinx()
        ax2.plot(panel.spreads, lw=1.2, color="tab:red", label="credit spread")
        ax.set_xlabel("day")
        ax.set_ylabel("sentiment")
        ax2.set_ylabel("spread")
        ax.set_title(f"sentiment vs spread, {bond_id}")
        spread_svg = os.path.join(out_dir, "sentiment_vs_spread.svg")
        fig.savefig(spread_svg, metadata={"Date": None})
        plt.close(fig)
        paths.append(spread_svg)
    return paths


@main.command("report")
@config_option
@out_dir_option
@click.option("--backtest-report", type=click.Path(exists=True), required=True)
@click.option("--plots", is_flag=True, default=False)
@click.option("--composite", "composite_path", type=click.Path(exists=True), default=None)
@click.option("--panel", type=click.Path(exists=True), default=None)
@_guarded
def report_cmd(config, out_dir, backtest_report, plots, composite_path, panel):
    """Print the with/without comparison table from a backtest report."""
    with open(backtest_report, encoding="utf-8") as fh:
        data = json.load(fh)
    base, sent = data.get("baseline"), data.get("with_sentiment")
    lines = [f"T={data.get('T')} q={data.get('q')} "
             f"smoothing={data.get('smoothing_mode')} "
             f"separate_features={data.get('separate_features')}"]
    for name, row in (("baseline", base), ("with_sentiment", sent)):
        if row:
            lines.append(
                f"{name:>16}: MAE {row['mae']:.4f}  MAPE {100 * row['mape']:.4f}%"
                f"  n_test {row.get('n_test')}"
            )
    if base and sent:
        d_mae, d_mape = forecast.delta_report(
            forecast.EvalReport(**base), forecast.EvalReport(**sent)
        )
        lines.append(f"delta MAE {d_mae:.4f}%  delta MAPE {d_mape:.4f}%")
        if data.get("p_value") is not None:
            lines.append(f"permutation p-value {data['p_value']:.6f}")
    click.echo("\n".join(lines))
    if plots:
        if composite_path is None:
            raise CliError("--plots needs --composite")
        for path in _plot_report(out_dir, composite_path, panel):
            click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
