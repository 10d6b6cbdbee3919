"""Command line driver: ``censurv ingest | train | eval | explain``.

Exit codes
----------
0  success
2  invalid input: bad config, malformed CSV, dataset validation failure
3  training diverged
4  model family incompatible with the dataset's context kind
5  metric could not be computed (no events, no labelled patients, empty split)
6  explanation unavailable for this model family
7  unknown patient id

Data goes to stdout, logs to stderr.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from .core import load_dataset, save_dataset, validate_dataset
from .crf import explanation_csv, survival_curve_csv
from .errors import IngestError, SurvivalError
from .metrics import evaluate, kfold_eval, reports_csv
from .models import ModelSpec, explain, fit, load_artifact, predict_survival, save_artifact
from .pipelines import (IngestConfig, SyntheticSpec, gen_synthetic, ingest_physionet,
                        ingest_support2, split_dataset)
from .svg import curve_svg, heatmap_svg

CONFIG_SECTIONS = {"seed", "synthetic", "ingest", "model", "train", "eval", "explain"}
TRAIN_KEYS = {"valid_fraction"}
EVAL_KEYS = {"kfold"}
EXPLAIN_KEYS = {"top_k", "svg"}

EXIT_INPUT, EXIT_DIVERGED, EXIT_CONTEXT, EXIT_METRIC, EXIT_EXPLAIN, EXIT_PATIENT = 2, 3, 4, 5, 6, 7


class CliFailure(click.ClickException):
    def __init__(self, message, exit_code):
        super().__init__(message)
        self.exit_code = exit_code


def _err(msg, quiet=False):
    if not quiet:
        click.echo(msg, err=True)


def _parse_value(text):
    value = yaml.safe_load(text)
    if isinstance(value, str):
        # YAML 1.1 reads exponent floats without a dot (1e-3) as strings
        try:
            return float(value)
        except ValueError:
            pass
    return value


def load_config(path, overrides=()) -> dict:
    """Read a YAML run configuration, apply ``section.key=value`` overrides, validate keys."""
    cfg = {}
    if path:
        try:
            cfg = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise CliFailure(f"cannot read config {path}: {exc}", EXIT_INPUT)
        if not isinstance(cfg, dict):
            raise CliFailure(f"config {path} must be a mapping", EXIT_INPUT)
    for item in overrides:
        if "=" not in item:
            raise CliFailure(f"--set expects section.key=value, got {item!r}", EXIT_INPUT)
        key, value = item.split("=", 1)
        parsed = _parse_value(value)
        if "." in key:
            section, sub = key.split(".", 1)
            cfg.setdefault(section, {})[sub] = parsed
        else:
            cfg[key] = parsed
    unknown = set(cfg) - CONFIG_SECTIONS
    if unknown:
        raise CliFailure(f"unknown config sections: {', '.join(sorted(unknown))}", EXIT_INPUT)
    for section, keys in (("train", TRAIN_KEYS), ("eval", EVAL_KEYS), ("explain", EXPLAIN_KEYS)):
        bad = set(cfg.get(section) or {}) - keys
        if bad:
            raise CliFailure(f"unknown keys in [{section}]: {', '.join(sorted(bad))}", EXIT_INPUT)
    return cfg


def _model_spec(cfg, family=None, seed=None) -> ModelSpec:
    d = dict(cfg.get("model") or {})
    if family:
        d["family"] = family
    if seed is not None:
        d["seed"] = seed
    elif "seed" in cfg and "seed" not in d:
        d["seed"] = cfg["seed"]
    try:
        return ModelSpec.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise CliFailure(f"invalid model spec: {exc}", EXIT_INPUT)


def _summary(d) -> str:
    n = len(d)
    events = int(d.events().sum()) if n else 0
    lines = {
        "records": n,
        "events": events,
        "censoring_rate": round(1 - events / n, 6) if n else 0.0,
        "grid": d.grid.describe(),
        "context_kind": d.context_kind,
        "attributes": d.d_x,
        "context_variables": d.d_c,
    }
    return "\n".join(f"{k}: {v}" for k, v in lines.items())


def _load_dataset(path):
    try:
        return load_dataset(path)
    except (OSError, ValueError, KeyError, SurvivalError) as exc:
        raise CliFailure(f"cannot load dataset {path}: {exc}", EXIT_INPUT)


@click.group()
@click.version_option(package_name="censurv")
def main():
    """Discrete-time survival models with per-patient explanations."""


def common(f):
    f = click.option("--quiet", is_flag=True, help="Suppress log output on stderr.")(f)
    f = click.option("--seed", type=int, default=None, help="Random seed (overrides config).")(f)
    f = click.option("--set", "overrides", multiple=True, metavar="SECTION.KEY=VALUE",
                     help="Override a config value; may be repeated.")(f)
    f = click.option("--config", type=click.Path(dir_okay=False), default=None,
                     help="YAML run configuration.")(f)
    return f


@main.command()
@click.argument("source", type=click.Choice(["support2", "physionet", "synthetic"]))
@click.option("--in", "in_path", type=click.Path(), default=None,
              help="CSV table (support2) or directory of record files (physionet).")
@click.option("--outcomes", type=click.Path(), default=None, help="Outcomes table (physionet).")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output dataset file.")
@click.option("--split", is_flag=True, help="Also write .train/.valid/.test files.")
@common
def ingest(source, in_path, outcomes, out, split, config, overrides, seed, quiet):
    """Build a dataset file from raw data or the synthetic generator."""
    cfg = load_config(config, overrides)
    if seed is None and "seed" in cfg:
        seed = int(cfg["seed"])
    try:
        if source == "synthetic":
            sd = dict(cfg.get("synthetic") or {})
            if seed is not None:
                sd["seed"] = seed
            sspec = SyntheticSpec.from_dict(sd)
            data, _ = gen_synthetic(sspec)
            sizes = tuple((cfg.get("ingest") or {}).get("split_sizes", IngestConfig().split_sizes))
            split_seed = sspec.seed
        else:
            idict = dict(cfg.get("ingest") or {})
            if seed is not None:
                idict["seed"] = seed
            icfg = IngestConfig.from_dict(idict, source)
            if not in_path:
                raise CliFailure("--in is required for this source", EXIT_INPUT)
            if source == "support2":
                data = ingest_support2(in_path, icfg)
            else:
                if not outcomes:
                    raise CliFailure("--outcomes is required for physionet", EXIT_INPUT)
                data = ingest_physionet(in_path, outcomes, icfg)
            sizes, split_seed = icfg.split_sizes, icfg.seed
    except IngestError as exc:
        raise CliFailure(str(exc), EXIT_INPUT)
    except (TypeError, ValueError, OSError) as exc:
        raise CliFailure(f"ingest failed: {exc}", EXIT_INPUT)
    violations = validate_dataset(data)
    if violations:
        raise CliFailure("dataset validation failed: " + "; ".join(map(str, violations[:5])), EXIT_INPUT)
    save_dataset(data, out)
    if split:
        stem = Path(out)
        for name, part in zip(("train", "valid", "test"), split_dataset(data, sizes, split_seed)):
            save_dataset(part, stem.with_name(f"{stem.stem}.{name}{stem.suffix}"))
    click.echo(_summary(data))


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--valid", "valid_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Validation dataset; default is a seeded 10% hold-out of --data.")
@click.option("--family", type=click.Choice(["cox", "aalen", "crf", "mlp-crf", "lstm-crf", "mlp-cen", "lstm-cen"]),
              default=None)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output artifact file.")
@click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None,
              help="Training log file (default: <out>.log).")
@common
def train(data, valid_path, family, out, log_path, config, overrides, seed, quiet):
    """Fit a model and write its artifact."""
    cfg = load_config(config, overrides)
    spec = _model_spec(cfg, family, seed)
    ds = _load_dataset(data)
    if valid_path:
        tr, va = ds, _load_dataset(valid_path)
    else:
        frac = float((cfg.get("train") or {}).get("valid_fraction", 0.1))
        perm = np.random.default_rng(spec.seed).permutation(len(ds))
        n_valid = int(round(frac * len(ds))) if len(ds) > 1 else 0
        tr, va = ds.subset(perm[n_valid:]), ds.subset(perm[:n_valid])
    lines = []

    def log_fn(epoch, tl, vl):
        line = f"epoch {epoch} train_loss {tl:.6f} valid_loss {vl:.6f}"
        lines.append(line)
        _err(line, quiet)

    try:
        artifact = fit(spec, tr, va, log_fn=log_fn)
    except SurvivalError as exc:
        codes = {"DIVERGED": EXIT_DIVERGED, "INCOMPATIBLE_CONTEXT": EXIT_CONTEXT}
        raise CliFailure(str(exc), codes.get(exc.code, EXIT_INPUT))
    save_artifact(artifact, out)
    if not lines:
        lines.append(f"fitted {spec.family} in closed form: {json.dumps(artifact.metadata, sort_keys=True)}")
        _err(lines[-1], quiet)
    Path(log_path or f"{out}.log").write_text("\n".join(lines) + "\n", encoding="utf-8")


@main.command("eval")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--artifact", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--kfold", type=int, default=None, help="Retrain with k-fold cross-validation.")
@click.option("--family", type=click.Choice(["cox", "aalen", "crf", "mlp-crf", "lstm-crf", "mlp-cen", "lstm-cen"]),
              default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Also write the CSV here.")
@common
def eval_cmd(data, artifact, kfold, family, out, config, overrides, seed, quiet):
    """Report Acc@25/50/75 and RAE as CSV."""
    cfg = load_config(config, overrides)
    kfold = kfold or (cfg.get("eval") or {}).get("kfold")
    ds = _load_dataset(data)
    try:
        if kfold:
            spec = _model_spec(cfg, family, seed)
            mean, folds = kfold_eval(spec, ds, k=int(kfold), seed=spec.seed,
                                     log_fn=lambda r: _err(f"{r.split}: acc50 {r.acc50:.2f}", quiet))
            text = reports_csv(folds + [mean])
        else:
            if not artifact:
                raise CliFailure("either --artifact or --kfold is required", EXIT_INPUT)
            model = load_artifact(artifact)
            text = reports_csv([evaluate(model, ds, split=Path(data).stem)])
    except CliFailure:
        raise
    except SurvivalError as exc:
        code = EXIT_CONTEXT if exc.code == "INCOMPATIBLE_CONTEXT" else \
            EXIT_DIVERGED if exc.code == "DIVERGED" else EXIT_METRIC
        raise CliFailure(str(exc), code)
    click.echo(text, nl=False)
    if out:
        Path(out).write_text(text, encoding="utf-8")


@main.command("explain")
@click.option("--artifact", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--patient", required=True, help="Record id.")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory.")
@click.option("--top-k", type=int, default=None, help="Keep the k attributes with largest mean |weight|.")
@click.option("--svg", is_flag=True, default=None, help="Also write SVG renderings.")
@common
def explain_cmd(artifact, data, patient, out, top_k, svg, config, overrides, seed, quiet):
    """Write a patient's explanation weights and survival curve."""
    cfg = load_config(config, overrides)
    ecfg = cfg.get("explain") or {}
    top_k = top_k if top_k is not None else ecfg.get("top_k")
    svg = svg if svg is not None else bool(ecfg.get("svg", False))
    model = load_artifact(artifact)
    ds = _load_dataset(data)
    try:
        record = ds.record(patient)
    except KeyError:
        raise CliFailure(f"unknown patient {patient!r}", EXIT_PATIENT)
    try:
        expl = explain(model, record)
        curve = predict_survival(model, record)
    except SurvivalError as exc:
        raise CliFailure(str(exc), EXIT_EXPLAIN if exc.code == "EXPLANATION_UNAVAILABLE" else EXIT_INPUT)
    names = list(model.attribute_names)
    rows = list(range(expl.d_x))
    if top_k is not None:
        importance = np.mean(np.abs(expl.thetas), axis=0)
        rows = sorted(np.argsort(-importance, kind="stable")[:int(top_k)].tolist(),
                      key=lambda i: -importance[i])
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = str(patient)
    (outdir / f"{stem}_explanation.csv").write_text(explanation_csv(expl, names, rows), encoding="utf-8")
    (outdir / f"{stem}_survival.csv").write_text(survival_curve_csv(curve, model.grid), encoding="utf-8")
    if svg:
        (outdir / f"{stem}_explanation.svg").write_text(
            heatmap_svg(expl.thetas[:, rows].T, [names[i] for i in rows], title=f"patient {stem}"),
            encoding="utf-8")
        (outdir / f"{stem}_survival.svg").write_text(
            curve_svg(model.grid.boundaries, curve, title=f"patient {stem}"), encoding="utf-8")
    click.echo(f"scope: {expl.scope}\nrows: {len(rows)}\nintervals: {expl.m}\nout: {outdir}")


if __name__ == "__main__":
    sys.exit(main())
