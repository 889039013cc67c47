"""Command-line front end.

Subcommands cover the full workflow: synthesize a dataset, train the model
stack, explain single instances, benchmark methods against each other,
sweep the distance weight, rank attribute interactions, and augment a
training set with counterfactuals.

Options resolve in three layers: a command-line flag wins, then the named
section of an INI file passed via --config, then the built-in default.

Exit codes: 0 success, 1 usage or input error, 2 internal invariant
violation, 3 partial result (outputs were written but incomplete).
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import os
import sys
import warnings

import numpy as np

from . import __version__
from .applications import (
    attribute_interaction_ranking,
    augment_with_counterfactuals,
    mean_attribute_ranking,
    retrain_comparison,
)
from .datasets import SynthSpec, generate, load_dataset, save_dataset
from .engine import (
    PerturbConfig,
    latent_descent,
    read_results_jsonl,
    write_pgm,
    write_results_jsonl,
)
from .errors import (
    ConfigurationError,
    DimensionError,
    FormatError,
    InvariantViolation,
    NumericalError,
    PartialResultWarning,
    TrainingError,
)
from .metrics import alpha_sweep, build_methods, run_benchmark, sweep_to_json
from .models import (
    GenerativeConfig,
    TrainConfig,
    load_discriminator,
    load_generative,
    load_target,
    save_discriminator,
    save_generative,
    save_manifest,
    save_target,
    load_manifest,
    train_discriminator,
    train_generative,
    train_target,
)

_USER_ERRORS = (
    ConfigurationError,
    DimensionError,
    FormatError,
    NumericalError,
    TrainingError,
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    KeyError,
    json.JSONDecodeError,
)


class Options:
    """Flag > config-file section > builtin default resolution."""

    def __init__(self, args, section):
        self.args = vars(args)
        self.file = {}
        path = self.args.get("config")
        if path:
            cp = configparser.ConfigParser()
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
            if cp.has_section(section):
                self.file = dict(cp[section])

    def get(self, key, builtin=None, cast=str):
        value = self.args.get(key)
        if value is not None:
            return value
        raw = self.file.get(key.replace("_", "-"))
        if raw is not None:
            if cast is bool:
                return raw.strip().lower() in ("1", "true", "yes", "on")
            return cast(raw)
        return builtin


def _int_list(text):
    return tuple(int(v) for v in str(text).split(",") if v != "")


def _float_list(text):
    return tuple(float(v) for v in str(text).split(",") if v != "")


def _perturb_from(opts):
    profile = opts.get("profile", "text")
    if profile not in ("text", "image"):
        raise ConfigurationError(f"profile must be text or image, got {profile!r}")
    cfg = PerturbConfig.image_defaults() if profile == "image" else PerturbConfig.text_defaults()
    for key, attr, cast in (
        ("alpha", "distance_weight", float),
        ("code_step", "code_step", float),
        ("attr_step", "attr_step", float),
        ("decay", "step_decay", float),
        ("max_iters", "max_iters", int),
    ):
        value = opts.get(key, cast=cast)
        if value is not None:
            setattr(cfg, attr, cast(value))
    if opts.get("freeze_attributes", False, bool):
        cfg.optimize_attributes = False
    desired = opts.get("desired", cast=int)
    if desired is not None:
        cfg.desired = int(desired)
    cfg.validate()
    return cfg


def _load_stack(manifest_path):
    manifest = load_manifest(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))

    def resolve(key):
        p = manifest[key]
        return p if os.path.isabs(p) else os.path.join(base, p)

    dataset = load_dataset(resolve("dataset"))
    target = load_target(resolve("target"))
    disc = load_discriminator(resolve("discriminator"))
    gen = load_generative(resolve("generative"))
    return dataset, target, disc, gen, manifest


def _query_instance(opts, dataset, disc):
    """Resolve the instance to explain: dataset row or external JSON file."""
    qi = opts.get("query_index", cast=int)
    path = opts.get("instance_file")
    if (qi is None) == (path is None):
        raise ConfigurationError("give exactly one of --query-index or --instance-file")
    if qi is not None:
        qi = int(qi)
        if not 0 <= qi < len(dataset.instances):
            raise ConfigurationError(f"query index {qi} out of range")
        return dataset.instances[qi], dataset.attributes[qi], qi
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if "instance" not in payload:
        raise ConfigurationError(f"{path} is missing the 'instance' field")
    x0 = np.asarray(payload["instance"], dtype=np.float64)
    if "attributes" in payload:
        a0 = np.asarray(payload["attributes"], dtype=np.float64)
    else:
        a0 = disc.predict(x0)
    return x0, a0, -1


def _desired_for(target, x0, cfg):
    if cfg.desired is not None:
        return cfg.desired
    if target.network.output_dim != 2:
        raise ConfigurationError("--desired is required beyond two classes")
    return 1 - int(np.argmax(target.predict_proba(x0)))


def cmd_gen_data(args):
    opts = Options(args, "gen-data")
    # Defaults reproduce the stock benchmark dataset (metrics.benchmark_recipe).
    generator = opts.get("generator", "blobs")
    spec = SynthSpec(
        generator=generator,
        n_features=int(opts.get("features", 32, int)),
        n_attributes=int(opts.get("attributes", 4, int)),
        n_samples=int(opts.get("samples", 6000, int)),
        seed=int(opts.get("seed", 7, int)),
        n_classes=int(opts.get("classes", 2, int)),
        noise=float(opts.get("noise", 0.4, float)),
        shift=float(opts.get("shift", 2.0, float)),
        margin=float(opts.get("margin", 1.0, float)),
        n_styles=int(opts.get("styles", 4, int)),
        style_leak=float(opts.get("style_leak", 0.0, float)),
        # The echo channel only exists for blobs, so glyphs default to none.
        label_echo=float(opts.get("label_echo", 0.9 if generator == "blobs" else 0.0, float)),
        label_attributes=_int_list(opts.get("label_attributes", "0,1")),
        attribute_prob=float(opts.get("attribute_prob", 0.5, float)),
        train_frac=float(opts.get("train_frac", 5000 / 6000, float)),
        dev_frac=float(opts.get("dev_frac", 250 / 6000, float)),
    )
    ds = generate(spec)
    out = opts.get("out", "dataset.lcfc")
    save_dataset(out, ds)
    n_train, n_dev, n_test = spec.split_sizes()
    balance = float(ds.labels[:, 1].mean()) if spec.n_classes == 2 else None
    print(f"wrote {out}: {spec.n_samples} x {spec.n_features} ({spec.generator})")
    print(f"split train/dev/test = {n_train}/{n_dev}/{n_test}")
    if balance is not None:
        print(f"class-1 fraction {balance:.3f}")
    return 0


def cmd_train(args):
    opts = Options(args, "train")
    data_path = opts.get("data")
    if data_path is None:
        raise ConfigurationError("--data is required")
    dataset = load_dataset(data_path)
    out_dir = opts.get("out_dir", "artifacts")
    os.makedirs(out_dir, exist_ok=True)
    seed = int(opts.get("seed", 0, int))
    hidden = _int_list(opts.get("hidden", "32"))
    activation = opts.get("activation", "tanh")
    lr = float(opts.get("lr", 1e-3, float))
    tcfg = TrainConfig(
        epochs=int(opts.get("epochs", 40, int)),
        batch_size=int(opts.get("batch_size", 128, int)),
        learning_rate=lr,
        hidden_dims=hidden,
        hidden_activation=activation,
        seed=seed,
    )
    target = train_target(dataset, tcfg)
    disc = train_discriminator(dataset, dataclasses.replace(tcfg, seed=seed + 1))
    gcfg = GenerativeConfig(
        latent_dim=int(opts.get("latent", 8, int)),
        epochs=int(opts.get("gen_epochs", 60, int)),
        batch_size=int(opts.get("batch_size", 128, int)),
        learning_rate=float(opts.get("gen_lr", lr, float)),
        hidden_dims=hidden,
        hidden_activation=activation,
        output_activation=opts.get("output_activation", "identity"),
        disc_weight=float(opts.get("disc_weight", 1.0, float)),
        seed=seed + 2,
    )
    gen = train_generative(dataset, disc, gcfg)
    paths = {
        "dataset": os.path.relpath(os.path.abspath(data_path), os.path.abspath(out_dir)),
        "target": "target.lcfc",
        "discriminator": "discriminator.lcfc",
        "generative": "generative.lcfc",
    }
    save_target(os.path.join(out_dir, paths["target"]), target)
    save_discriminator(os.path.join(out_dir, paths["discriminator"]), disc)
    save_generative(os.path.join(out_dir, paths["generative"]), gen)
    manifest = dict(paths)
    manifest["seed"] = seed
    manifest["train"] = {
        "epochs": tcfg.epochs,
        "batch_size": tcfg.batch_size,
        "learning_rate": tcfg.learning_rate,
        "hidden_dims": list(hidden),
        "hidden_activation": activation,
        "latent_dim": gcfg.latent_dim,
        "gen_epochs": gcfg.epochs,
        "gen_learning_rate": gcfg.learning_rate,
        "disc_weight": gcfg.disc_weight,
        "output_activation": gcfg.output_activation,
    }
    manifest["perturb_profiles"] = {
        name: {
            "distance_weight": c.distance_weight,
            "code_step": c.code_step,
            "attr_step": c.attr_step,
            "step_decay": c.step_decay,
            "max_iters": c.max_iters,
        }
        for name, c in (
            ("text", PerturbConfig.text_defaults()),
            ("image", PerturbConfig.image_defaults()),
        )
    }
    save_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    print(f"classifier accuracy train/dev/test = "
          f"{target.train_accuracy:.3f}/{target.dev_accuracy:.3f}/{target.test_accuracy:.3f}")
    acc = ", ".join(f"{a:.3f}" for a in disc.attribute_accuracy)
    print(f"discriminator per-attribute dev accuracy = [{acc}]")
    print(f"autoencoder recon {gen.final_recon_error:.4f}, "
          f"attribute consistency {gen.attribute_consistency:.3f}")
    print(f"wrote {os.path.join(out_dir, 'manifest.json')}")
    return 0


def cmd_explain(args):
    opts = Options(args, "explain")
    manifest_path = opts.get("manifest")
    if manifest_path is None:
        raise ConfigurationError("--manifest is required")
    dataset, target, disc, gen, _ = _load_stack(manifest_path)
    x0, a0, qi = _query_instance(opts, dataset, disc)
    cfg = _perturb_from(opts)
    cfg.desired = _desired_for(target, x0, cfg)
    result = latent_descent(target, gen, x0, a0, cfg, query_index=qi)
    print(f"prediction {int(np.argmax(target.predict_proba(x0)))} -> "
          f"desired {result.desired_class}: "
          f"{'flipped' if result.flipped else 'not flipped'} "
          f"after {result.iterations} iterations")
    print(f"final loss {result.loss_trace[-1][0]:.6f}, "
          f"wall time {result.wall_time_micros} us")
    deltas = result.latent.attributes - result.origin.attributes
    for j, d in enumerate(deltas):
        print(f"attribute {j}: {result.origin.attributes[j]:+.3f} -> "
              f"{result.latent.attributes[j]:+.3f} (moved {d:+.3f})")
    out = opts.get("out")
    if out:
        write_results_jsonl(out, [result])
        print(f"wrote {out}")
    pgm = opts.get("pgm")
    if pgm:
        write_pgm(f"{pgm}-before.pgm", x0)
        write_pgm(f"{pgm}-after.pgm", result.sample)
        print(f"wrote {pgm}-before.pgm and {pgm}-after.pgm")
    return 0


def cmd_bench(args):
    opts = Options(args, "bench")
    manifest_path = opts.get("manifest")
    if manifest_path is None:
        raise ConfigurationError("--manifest is required")
    dataset, target, _, gen, _ = _load_stack(manifest_path)
    cfg = _perturb_from(opts)
    methods = build_methods(cfg, epsilon=float(opts.get("epsilon", 3.0, float)))
    report = run_benchmark(
        dataset,
        target,
        gen,
        methods,
        n_queries=int(opts.get("queries", 500, int)),
        seed=int(opts.get("seed", 0, int)),
        desired_class=opts.get("desired_class", cast=int),
        jobs=int(opts.get("jobs", 1, int)),
    )
    include_timing = opts.get("include_timing", True, bool)
    print(report.to_csv(include_timing=include_timing), end="")
    out = opts.get("out")
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json(include_timing=include_timing))
        print(f"wrote {out}")
    csv_path = opts.get("csv")
    if csv_path:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv(include_timing=include_timing))
        print(f"wrote {csv_path}")
    return 0


def cmd_sweep(args):
    opts = Options(args, "sweep")
    manifest_path = opts.get("manifest")
    if manifest_path is None:
        raise ConfigurationError("--manifest is required")
    dataset, target, _, gen, _ = _load_stack(manifest_path)
    cfg = _perturb_from(opts)
    weights = _float_list(opts.get("weights", "0,0.4,0.8,1.5,3.0"))
    points = alpha_sweep(
        dataset,
        target,
        gen,
        cfg,
        weights,
        n_queries=int(opts.get("queries", 100, int)),
        seed=int(opts.get("seed", 0, int)),
        jobs=int(opts.get("jobs", 1, int)),
    )
    print("distance_weight,flipping_ratio,mean_latent_perturbation")
    for p in points:
        print(f"{p.distance_weight!r},{p.flipping_ratio!r},{p.mean_latent_perturbation!r}")
    out = opts.get("out")
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(sweep_to_json(points))
        print(f"wrote {out}")
    return 0


def cmd_rank(args):
    opts = Options(args, "rank")
    names_opt = opts.get("names")
    names = [n.strip() for n in names_opt.split(",")] if names_opt else None
    exclude = _int_list(opts.get("exclude", ""))
    results_path = opts.get("results")
    if results_path is not None:
        results = read_results_jsonl(results_path)
        if not results:
            raise ConfigurationError(f"{results_path} holds no result records")
        if len(results) == 1:
            ranking = attribute_interaction_ranking(results[0], names=names, exclude=exclude)
        else:
            ranking = mean_attribute_ranking(results, names=names, exclude=exclude)
    else:
        manifest_path = opts.get("manifest")
        if manifest_path is None:
            raise ConfigurationError("give --results or --manifest")
        dataset, target, disc, gen, _ = _load_stack(manifest_path)
        cfg = _perturb_from(opts)
        n_queries = opts.get("queries", cast=int)
        if n_queries is not None:
            from .metrics import _select_queries

            rows, desired = _select_queries(
                dataset,
                target,
                int(n_queries),
                int(opts.get("seed", 0, int)),
                cfg.desired,
            )
            results = []
            for row, des in zip(rows, desired):
                c = dataclasses.replace(cfg, desired=int(des))
                results.append(
                    latent_descent(
                        target,
                        gen,
                        dataset.instances[row],
                        dataset.attributes[row],
                        c,
                        query_index=int(row),
                    )
                )
            ranking = mean_attribute_ranking(results, names=names, exclude=exclude)
        else:
            x0, a0, qi = _query_instance(opts, dataset, disc)
            cfg.desired = _desired_for(target, x0, cfg)
            result = latent_descent(target, gen, x0, a0, cfg, query_index=qi)
            ranking = attribute_interaction_ranking(result, names=names, exclude=exclude)
    print("attribute,score")
    for entry in ranking:
        print(f"{entry.name},{entry.score!r}")
    out = opts.get("out")
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write("attribute,score\n")
            for entry in ranking:
                fh.write(f"{entry.name},{entry.score!r}\n")
        print(f"wrote {out}")
    return 0


def cmd_augment(args):
    opts = Options(args, "augment")
    manifest_path = opts.get("manifest")
    if manifest_path is None:
        raise ConfigurationError("--manifest is required")
    dataset, target, _, gen, manifest = _load_stack(manifest_path)
    cfg = _perturb_from(opts)
    n_aug = int(opts.get("count", 100, int))
    seed = int(opts.get("seed", 0, int))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        augmented = augment_with_counterfactuals(dataset, target, gen, n_aug, cfg, seed=seed)
    partial = any(issubclass(w.category, PartialResultWarning) for w in caught)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = opts.get("out", "augmented.lcfc")
    save_dataset(out, augmented)
    added = augmented.metadata.get("augmented_tail", 0)
    print(f"wrote {out}: {added} counterfactual rows appended")
    n_compare = opts.get("compare", cast=int)
    if n_compare is not None:
        train_opts = manifest.get("train", {})
        tcfg = TrainConfig(
            epochs=int(train_opts.get("epochs", 40)),
            batch_size=int(train_opts.get("batch_size", 128)),
            learning_rate=float(train_opts.get("learning_rate", 1e-3)),
            hidden_dims=tuple(train_opts.get("hidden_dims", (32,))),
            hidden_activation=train_opts.get("hidden_activation", "tanh"),
        )
        comp = retrain_comparison(
            dataset, augmented, tcfg, seeds=list(range(int(n_compare)))
        )
        print(f"base test accuracy      {comp.base_mean:.4f} +/- {comp.base_std:.4f}")
        print(f"augmented test accuracy {comp.augmented_mean:.4f} +/- {comp.augmented_std:.4f}")
    return 3 if partial else 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="latentcf",
        description="Counterfactual explanations via search in an attribute-informed latent space.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, helptext):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="INI file with a [%s] section" % name)
        p.set_defaults(func=func)
        return p

    p = add("gen-data", cmd_gen_data, "synthesize an attributed dataset")
    p.add_argument("--out")
    p.add_argument("--generator", choices=("blobs", "glyphs"))
    p.add_argument("--features", type=int)
    p.add_argument("--attributes", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--shift", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--styles", type=int)
    p.add_argument("--style-leak", type=float)
    p.add_argument("--label-echo", type=float)
    p.add_argument("--label-attributes")
    p.add_argument("--attribute-prob", type=float)
    p.add_argument("--train-frac", type=float)
    p.add_argument("--dev-frac", type=float)

    p = add("train", cmd_train, "train classifier, discriminator, and autoencoder")
    p.add_argument("--data")
    p.add_argument("--out-dir")
    p.add_argument("--epochs", type=int)
    p.add_argument("--gen-epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--gen-lr", type=float)
    p.add_argument("--hidden")
    p.add_argument("--activation")
    p.add_argument("--latent", type=int)
    p.add_argument("--disc-weight", type=float)
    p.add_argument("--output-activation", choices=("identity", "sigmoid"))
    p.add_argument("--seed", type=int)

    def add_perturb(p):
        p.add_argument("--profile", choices=("text", "image"))
        p.add_argument("--alpha", type=float)
        p.add_argument("--code-step", type=float)
        p.add_argument("--attr-step", type=float)
        p.add_argument("--decay", type=float)
        p.add_argument("--max-iters", type=int)
        p.add_argument("--desired", type=int)
        p.add_argument("--freeze-attributes", action=argparse.BooleanOptionalAction, default=None)

    p = add("explain", cmd_explain, "search for a counterfactual of one instance")
    p.add_argument("--manifest")
    p.add_argument("--query-index", type=int)
    p.add_argument("--instance-file")
    p.add_argument("--out")
    p.add_argument("--pgm")
    add_perturb(p)

    p = add("bench", cmd_bench, "compare methods on a shared query set")
    p.add_argument("--manifest")
    p.add_argument("--queries", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--desired-class", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out")
    p.add_argument("--csv")
    p.add_argument("--include-timing", action=argparse.BooleanOptionalAction, default=None)
    add_perturb(p)

    p = add("sweep", cmd_sweep, "trace the distance-weight trade-off")
    p.add_argument("--manifest")
    p.add_argument("--weights")
    p.add_argument("--queries", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out")
    add_perturb(p)

    p = add("rank", cmd_rank, "rank attributes by how far a search moved them")
    p.add_argument("--results")
    p.add_argument("--manifest")
    p.add_argument("--query-index", type=int)
    p.add_argument("--instance-file")
    p.add_argument("--queries", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--names")
    p.add_argument("--exclude")
    p.add_argument("--out")
    add_perturb(p)

    p = add("augment", cmd_augment, "append counterfactual rows to the train split")
    p.add_argument("--manifest")
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--compare", type=int)
    add_perturb(p)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
