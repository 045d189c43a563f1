"""Command-line pipeline: oracle training, model training, sampling,
evaluation and sweep reporting."""

import csv
import hashlib
import json
import os
import re

import click
import numpy as np

from . import checkpoint as ckpt
from .data import (ConditionVocab, DatasetSpec, LabeledExample, build_target_set,
                   generate_nontarget, load_mnist_split)
from .errors import FairDiffusionError
from .metrics import (GroupDistribution, MetricsReport, fairness_discrepancy,
                      frechet_distance, group_entropy_report, inception_score,
                      statistical_parity_difference, unrecognizable_proportion)
from .model import DebiasingDiffusion, history_to_csv
from .oracle import DigitOracle
from .validation import check_alpha

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

DEFAULTS = {
    "mnist_dir": "data/mnist",
    "scenario": "spd",
    "d1": 3,
    "d2": 0,
    "n1": 80,
    "n2": 20,
    "nontarget_count": 100,
    "alpha": 0.0,
    "epochs": 30,
    "batch_size": 8,
    "learning_rate": 1e-3,
    "num_steps": 200,
    "beta_start": 1e-4,
    "beta_end": 0.02,
    "hidden_width": 256,
    "time_width": 32,
    "cond_width": 16,
    "seed": 0,
    "samples_per_condition": 0,  # 0 = scenario default (500 spd / 1000 fd)
    "group_size": 50,
    "t_eval": 0,  # 0 = half the schedule
    "eval_seed": 0,
    "is_splits": 10,
    "oracle_epochs": 12,
    "oracle_batch_size": 128,
    "oracle_learning_rate": 1e-3,
    "oracle_max_shift": 2,
}


def resolve_config(config_path, overrides):
    """defaults < config file < explicit flags; unknown keys rejected."""
    resolved = dict(DEFAULTS)
    if config_path:
        with open(config_path) as f:
            loaded = json.load(f)
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise click.ClickException(f"unknown config keys: {sorted(unknown)}")
        resolved.update(loaded)
    for key, value in overrides.items():
        if value is not None:
            resolved[key] = value
    return resolved


def config_fingerprint(resolved):
    blob = json.dumps(resolved, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def mnist_paths(mnist_dir, split):
    out = []
    for part in (f"{split}_images", f"{split}_labels"):
        stem = os.path.join(mnist_dir, MNIST_FILES[part])
        if os.path.exists(stem + ".gz"):
            out.append(stem + ".gz")
        elif os.path.exists(stem):
            out.append(stem)
        else:
            raise click.ClickException(f"missing MNIST file {stem}[.gz]; run scripts/fetch_mnist.py")
    return out


def slugify(name):
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")


def build_training_set(cfg):
    spec = DatasetSpec(d1=int(cfg["d1"]), d2=int(cfg["d2"]), n1=int(cfg["n1"]), n2=int(cfg["n2"]),
                       scenario=cfg["scenario"], nontarget_count=int(cfg["nontarget_count"]),
                       seed=int(cfg["seed"]))
    vocab = ConditionVocab(embed_width=int(cfg["cond_width"]))
    images, labels = load_mnist_split(*mnist_paths(cfg["mnist_dir"], "train"))
    target = build_target_set(spec, images, labels, vocab)
    nontarget = generate_nontarget(spec.nontarget_count,
                                   np.random.SeedSequence(spec.seed, spawn_key=(1,)), vocab)
    return spec, target + nontarget


def _atomic_json(path, payload):
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def _atomic_bytes(path, data):
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


@click.group()
def main():
    """Fairness-aware diffusion training and evaluation on digit data."""


@main.command("oracle-train")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--mnist-dir", type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int)
@click.option("--epochs", "oracle_epochs", type=int)
def cmd_oracle_train(config_path, mnist_dir, out, seed, oracle_epochs):
    """Train the evaluation classifier and record its held-out accuracy."""
    cfg = resolve_config(config_path, {"mnist_dir": mnist_dir, "seed": seed,
                                       "oracle_epochs": oracle_epochs})
    train_x, train_y = load_mnist_split(*mnist_paths(cfg["mnist_dir"], "train"))
    test_x, test_y = load_mnist_split(*mnist_paths(cfg["mnist_dir"], "test"))
    oracle = DigitOracle(epochs=int(cfg["oracle_epochs"]), batch_size=int(cfg["oracle_batch_size"]),
                         learning_rate=float(cfg["oracle_learning_rate"]),
                         max_shift=int(cfg["oracle_max_shift"]), seed=int(cfg["seed"]))
    oracle.fit(train_x, train_y)
    accuracy = float(np.mean(oracle.predict(test_x) == test_y))
    extra = {"accuracy": accuracy, "test_size": int(test_y.size)}
    if accuracy < 0.985:
        extra["warning"] = f"held-out accuracy {accuracy:.4f} below target 0.985"
    ckpt.save_oracle(oracle, out, extra_meta=extra)
    click.echo(f"oracle accuracy {accuracy:.4f} on {test_y.size} held-out images -> {out}")


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--mnist-dir", type=click.Path())
@click.option("--alpha", type=float)
@click.option("--seed", type=int)
@click.option("--scenario", type=click.Choice(["fd", "spd"]))
@click.option("--d1", type=int)
@click.option("--d2", type=int)
@click.option("--epochs", type=int)
@click.option("--batch-size", type=int)
def cmd_train(config_path, out, mnist_dir, alpha, seed, scenario, d1, d2, epochs, batch_size):
    """Train the debiasing diffusion model and write a checkpoint + history."""
    cfg = resolve_config(config_path, {"mnist_dir": mnist_dir, "alpha": alpha, "seed": seed,
                                       "scenario": scenario, "d1": d1, "d2": d2,
                                       "epochs": epochs, "batch_size": batch_size})
    try:
        check_alpha(cfg["alpha"])
    except FairDiffusionError as exc:
        raise click.ClickException(str(exc))
    try:
        spec, dataset = build_training_set(cfg)
        model = DebiasingDiffusion(
            alpha=float(cfg["alpha"]), epochs=int(cfg["epochs"]), batch_size=int(cfg["batch_size"]),
            learning_rate=float(cfg["learning_rate"]), num_steps=int(cfg["num_steps"]),
            beta_start=float(cfg["beta_start"]), beta_end=float(cfg["beta_end"]),
            hidden_width=int(cfg["hidden_width"]), time_width=int(cfg["time_width"]),
            cond_width=int(cfg["cond_width"]), seed=int(cfg["seed"]))
        model.fit(dataset)
        ckpt.save_ddm(model, out, extra_meta={"dataset": {
            "d1": spec.d1, "d2": spec.d2, "n1": spec.n1, "n2": spec.n2,
            "scenario": spec.scenario, "nontarget_count": spec.nontarget_count,
            "seed": spec.seed}})
    except FairDiffusionError as exc:
        raise click.ClickException(str(exc))
    history_to_csv(model.history_, os.path.join(out, "history.csv"))
    last = model.history_[-1] if model.history_ else None
    if last is not None:
        ind = "n/a" if last.indicator_loss is None else f"{last.indicator_loss:.6f}"
        click.echo(f"final losses: diffusion {last.diffusion_loss:.6f}, "
                   f"indicator {ind}, combined {last.combined_loss:.6f}")
    click.echo(f"checkpoint -> {out} ({len(model.history_)} steps)")


@main.command("sample")
@click.option("--checkpoint", "checkpoint_dir", required=True, type=click.Path(exists=True))
@click.option("--condition", required=True)
@click.option("-n", "--num", "n", required=True, type=int)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def cmd_sample(checkpoint_dir, condition, n, seed, out):
    """Generate images for one condition; writes a PNG grid and a raw dump."""
    try:
        model = ckpt.load_ddm(checkpoint_dir)
        images = model.sample(condition, n, seed)
    except FairDiffusionError as exc:
        raise click.ClickException(str(exc))
    os.makedirs(out, exist_ok=True)
    stem = os.path.join(out, f"samples_{slugify(condition)}_seed{seed}")
    buffer = _npy_bytes(images.astype(np.float32))
    _atomic_bytes(stem + ".npy", buffer)
    _atomic_bytes(stem + ".png", _grid_png_bytes(images))
    click.echo(f"wrote {stem}.npy and {stem}.png")


def _npy_bytes(arr):
    import io

    buf = io.BytesIO()
    np.save(buf, arr)
    return buf.getvalue()


def _grid_png_bytes(images):
    """Single grid of ceil(sqrt(n)) columns, row-major, black padding."""
    import io

    from PIL import Image

    n = images.shape[0]
    cols = int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    side = images.shape[1]
    canvas = np.zeros((rows * side, cols * side), dtype=np.uint8)
    as_bytes = np.clip(np.rint((images + 1.0) * 127.5), 0, 255).astype(np.uint8)
    for i in range(n):
        r, c = divmod(i, cols)
        canvas[r * side:(r + 1) * side, c * side:(c + 1) * side] = as_bytes[i]
    buf = io.BytesIO()
    Image.fromarray(canvas, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def _load_sample_dumps(samples_dir):
    found = {}
    for name in sorted(os.listdir(samples_dir)):
        match = re.fullmatch(r"samples_([a-z0-9-]+)_seed(\d+)\.npy", name)
        if match:
            found[match.group(1)] = np.load(os.path.join(samples_dir, name))
    if not found:
        raise click.ClickException(f"no sample dumps (samples_<condition>_seed<k>.npy) in {samples_dir}")
    return found


@main.command("eval")
@click.option("--checkpoint", "checkpoint_dir", required=True, type=click.Path(exists=True))
@click.option("--oracle", "oracle_dir", required=True, type=click.Path(exists=True))
@click.option("--samples", "samples_dir", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--mnist-dir", type=click.Path())
@click.option("--eval-seed", type=int)
@click.option("--t-eval", type=int)
@click.option("--group-size", type=int)
@click.option("--reference-samples", type=click.Path(exists=True),
              help="Optional .npy of images replacing the target set as the feature-distance reference.")
def cmd_eval(checkpoint_dir, oracle_dir, samples_dir, out, config_path, mnist_dir,
             eval_seed, t_eval, group_size, reference_samples):
    """Compute the full metric suite for dumped samples; writes JSON + CSV row."""
    cfg = resolve_config(config_path, {"mnist_dir": mnist_dir, "eval_seed": eval_seed,
                                       "t_eval": t_eval, "group_size": group_size})
    try:
        model = ckpt.load_ddm(checkpoint_dir)
        _, meta = ckpt.load_checkpoint(checkpoint_dir)
        oracle, _ = ckpt.load_oracle(oracle_dir)
        report, row = _evaluate(model, meta, oracle, samples_dir, cfg, reference_samples)
    except FairDiffusionError as exc:
        raise click.ClickException(str(exc))
    _atomic_json(out, report.to_dict())
    csv_path = os.path.splitext(out)[0] + ".csv"
    tmp = csv_path + ".tmp"
    with open(tmp, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(row))
        writer.writeheader()
        writer.writerow(row)
    os.replace(tmp, csv_path)
    click.echo(f"report -> {out} (sweep row -> {csv_path})")


def _evaluate(model, meta, oracle, samples_dir, cfg, reference_samples):
    dataset = meta.get("dataset")
    if not dataset:
        raise click.ClickException("checkpoint carries no dataset record; cannot evaluate")
    scenario = dataset["scenario"]
    d1, d2 = int(dataset["d1"]), int(dataset["d2"])
    vocab = model.vocab_
    dumps = _load_sample_dumps(samples_dir)

    if scenario == "spd":
        wanted = {slugify(vocab.names[vocab.digit_id(d)]): d for d in (d1, d2)}
    else:
        wanted = {slugify(vocab.names[vocab.neutral_id]): None}
    if set(dumps) != set(wanted):
        raise click.ClickException(
            f"scenario/sample mismatch: {scenario} evaluation expects dumps for {sorted(wanted)}, found {sorted(dumps)}")

    flat = {slug: arr.reshape(arr.shape[0], -1) for slug, arr in dumps.items()}
    probs = {slug: oracle.predict_proba(x) for slug, x in flat.items()}
    preds = {slug: np.argmax(p, axis=1) for slug, p in probs.items()}

    fd_value = None
    spd_value = None
    if scenario == "spd":
        rates = {}
        intended_all, preds_all = [], []
        for slug, digit in wanted.items():
            rates[digit] = float(np.mean(preds[slug] == digit))
            intended_all.append(np.full(preds[slug].size, digit))
            preds_all.append(preds[slug])
        spd_value = statistical_parity_difference(rates[d1], rates[d2])
        unrecognizable = unrecognizable_proportion(np.concatenate(preds_all), np.concatenate(intended_all))
    else:
        neutral = next(iter(preds.values()))
        count1 = int(np.sum(neutral == d1))
        count2 = int(np.sum(neutral == d2))
        if count1 + count2 == 0:
            raise click.ClickException(f"no generated sample was classified as digit {d1} or {d2}")
        observed = np.array([count1, count2], dtype=np.float64) / (count1 + count2)
        fd_value = fairness_discrepancy(GroupDistribution(labels=(d1, d2), observed=observed))
        unrecognizable = float(np.mean((neutral != d1) & (neutral != d2)))

    if reference_samples:
        ref_images = np.load(reference_samples)
        ref_flat = ref_images.reshape(ref_images.shape[0], -1)
    else:
        spec = DatasetSpec(d1=d1, d2=d2, n1=int(dataset["n1"]), n2=int(dataset["n2"]),
                           scenario=scenario, nontarget_count=int(dataset["nontarget_count"]),
                           seed=int(dataset["seed"]))
        images, labels = load_mnist_split(*mnist_paths(cfg["mnist_dir"], "train"))
        target = build_target_set(spec, images, labels, vocab)
        ref_flat = np.stack([ex.image.reshape(-1) for ex in target])
    gen_flat = np.concatenate(list(flat.values()))
    frechet = frechet_distance(oracle.transform(ref_flat), oracle.transform(gen_flat))
    is_mean, is_std = inception_score(np.concatenate(list(probs.values())), n_splits=int(cfg["is_splits"]))

    test_images, test_labels = load_mnist_split(*mnist_paths(cfg["mnist_dir"], "test"))
    rng = np.random.default_rng(int(cfg["eval_seed"]))
    groups = {}
    for digit in (d1, d2):
        pool = np.flatnonzero(test_labels == digit)
        chosen = rng.choice(pool, size=min(int(cfg["group_size"]), pool.size), replace=False)
        cid = vocab.neutral_id if scenario == "fd" else vocab.digit_id(digit)
        groups[str(digit)] = [LabeledExample(image=test_images[i], y=1, condition_id=cid,
                                             source_class=digit) for i in chosen]
    t_eval = int(cfg["t_eval"]) or None
    entropy_report = group_entropy_report(model.denoiser_, model.indicator_, vocab,
                                          model.schedule_, groups, t_eval=t_eval,
                                          seed=int(cfg["eval_seed"]))

    fingerprint = config_fingerprint({**cfg, "model": meta.get("config", {}), "dataset": dataset})
    report = MetricsReport(
        scenario=scenario,
        fd=fd_value,
        spd=spd_value,
        frechet=frechet,
        is_mean=is_mean,
        is_std=is_std,
        unrecognizable=unrecognizable,
        per_group_entropy=entropy_report.mean_entropy,
        pearson=entropy_report.pearson,
        sample_counts={slug: int(arr.shape[0]) for slug, arr in dumps.items()},
        config_fingerprint=fingerprint,
    )
    model_cfg = meta.get("config", {})
    row = {
        "scenario": scenario, "d1": d1, "d2": d2,
        "alpha": model_cfg.get("alpha"), "seed": model_cfg.get("seed"),
        "fd": _fmt(fd_value), "spd": _fmt(spd_value), "frechet": repr(frechet),
        "is_mean": repr(is_mean), "is_std": repr(is_std),
        "unrecognizable": repr(unrecognizable),
        "entropy_d1": repr(entropy_report.mean_entropy[str(d1)]),
        "entropy_d2": repr(entropy_report.mean_entropy[str(d2)]),
        "pearson": _fmt(entropy_report.pearson),
        "fingerprint": fingerprint,
    }
    return report, row


def _fmt(value):
    return "" if value is None else repr(value)


@main.command("report")
@click.argument("sweep_csvs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def cmd_report(sweep_csvs, out):
    """Aggregate sweep rows into per-alpha median tables and bar charts."""
    rows = []
    for path in sweep_csvs:
        with open(path, newline="") as f:
            for lineno, row in enumerate(csv.DictReader(f), start=2):
                try:
                    rows.append({
                        "scenario": row["scenario"], "d1": int(row["d1"]), "d2": int(row["d2"]),
                        "alpha": float(row["alpha"]), "seed": int(row["seed"]),
                        "metric": float(row["fd"] if row["scenario"] == "fd" else row["spd"]),
                        "unrecognizable": float(row["unrecognizable"]),
                    })
                except (KeyError, ValueError) as exc:
                    raise click.ClickException(f"{path}: bad sweep row at line {lineno}: {exc}")
    if not rows:
        raise click.ClickException("no sweep rows found")
    os.makedirs(out, exist_ok=True)

    grouped = {}
    for row in rows:
        grouped.setdefault((row["scenario"], row["d1"], row["d2"]), {}).setdefault(row["alpha"], []).append(row)
    table_path = os.path.join(out, "summary.csv")
    tmp = table_path + ".tmp"
    with open(tmp, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["scenario", "d1", "d2", "alpha", "runs", "metric_median",
                         "metric_min", "metric_max", "unrecognizable_median"])
        for (scenario, d1, d2), by_alpha in sorted(grouped.items()):
            for alpha in sorted(by_alpha):
                vals = [r["metric"] for r in by_alpha[alpha]]
                unrec = [r["unrecognizable"] for r in by_alpha[alpha]]
                writer.writerow([scenario, d1, d2, alpha, len(vals),
                                 repr(float(np.median(vals))), repr(min(vals)), repr(max(vals)),
                                 repr(float(np.median(unrec)))])
    os.replace(tmp, table_path)

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    for (scenario, d1, d2), by_alpha in sorted(grouped.items()):
        alphas = sorted(by_alpha)
        medians = [float(np.median([r["metric"] for r in by_alpha[a]])) for a in alphas]
        lows = [min(r["metric"] for r in by_alpha[a]) for a in alphas]
        highs = [max(r["metric"] for r in by_alpha[a]) for a in alphas]
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        x = np.arange(len(alphas))
        err = np.vstack([np.asarray(medians) - np.asarray(lows),
                         np.asarray(highs) - np.asarray(medians)])
        ax.bar(x.tolist(), medians, yerr=err, capsize=4, color="#4878cf")
        ax.set_xticks(x, [str(a) for a in alphas])
        ax.set_xlabel("alpha")
        ax.set_ylabel("FD" if scenario == "fd" else "SPD")
        ax.set_title(f"{scenario.upper()} for digits ({d1}, {d2})")
        fig.tight_layout()
        fig_path = os.path.join(out, f"{scenario}_{d1}{d2}.png")
        fig.savefig(fig_path + ".tmp.png", dpi=150)
        plt.close(fig)
        os.replace(fig_path + ".tmp.png", fig_path)
    click.echo(f"summary -> {table_path}")


if __name__ == "__main__":
    main()
