"""
ViBE - Command-line entry point

    python -m cli <subcommand> [options]

Subcommands: gen-data, cluster, train, eval, recommend, explain, verify.
Exit codes: 0 ok, 1 usage or configuration error, 2 data, checkpoint or
missing-file error, 3 numeric failure (or a failed verify check).
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

sys.path.insert(0, str(Path(__file__).parent.parent))

from cli.config import ConfigError, RunConfig, config_hash, load_config
from cli.verify import format_results, run_checks
from models.records import BodyRecord, Catalog, DataQualityError
from models.vibe import ViBEModel
from numkit import NumericError
from pipelines.body_typing import (
    SplitError, build_split, cluster_bodies, dataset_statistics, load_clustering,
    propagate_labels, save_clustering, save_split, type_histogram, wearer_histogram
)
from pipelines.catalog_io import load_bodies, load_catalog, oracle_path_for, save_catalog, write_atomic
from pipelines.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from pipelines.evaluation import judged_pair_auc, load_judgments, load_preferences, preference_auc
from pipelines.experiment import METHODS, ExperimentPipeline, model_scorer, train_method
from pipelines.explain import explain_report, format_report, rank_garments, report_key_values
from pipelines.synthetic import generate_synthetic
from pipelines.triplets import SamplingError
from reports.charts import auc_bar_chart, specificity_chart, write_chart
from reports.formatters import (
    format_dataset_statistics, format_recommendations, format_scenario_table, specificity_table
)

logger = logging.getLogger('ViBE_CLI')

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    """Raised instead of argparse's own exit so usage errors map to exit code 1"""
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def configure_logging(output_dir: str, verbose: bool = False):
    """Stream handler on stderr plus a log file in the output directory"""
    Path(output_dir).mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(Path(output_dir) / 'vibe.log'),
            logging.StreamHandler(sys.stderr)
        ],
        force=True
    )


# Shared loading

def _catalog(args, config: RunConfig) -> Catalog:
    path = Path(args.catalog or config.paths.catalog)
    oracle = oracle_path_for(path)
    return load_catalog(path, oracle if oracle.exists() else None)


def _typing(args, config: RunConfig, catalog: Catalog):
    """Clustering from file when present, else fitted here; plus propagated labels"""
    path = Path(getattr(args, 'clustering', None) or config.paths.clustering)
    if path.exists():
        clustering = load_clustering(path)
    else:
        logger.info(f"No clustering at {path}; clustering the catalog bodies")
        clustering = cluster_bodies(
            catalog, k=config.clustering.k, seed=config.clustering.seed,
            max_iter=config.clustering.max_iter, restarts=config.clustering.restarts,
        )
    return clustering, propagate_labels(catalog, clustering)


def _target_bodies(args, catalog: Catalog) -> List[BodyRecord]:
    if args.bodies:
        return load_bodies(args.bodies)
    if args.body_id:
        return [catalog.body(b) for b in args.body_id]
    raise UsageError("give --bodies FILE or at least one --body-id")


# Subcommands

def cmd_gen_data(args, config: RunConfig) -> int:
    overrides = {}
    if args.seed is not None:
        overrides['seed'] = args.seed
    if args.garments is not None:
        overrides['num_garments'] = args.garments
    if args.category:
        overrides['category'] = args.category
        overrides['num_attributes'] = None
    spec = replace(config.synthetic, **overrides)
    if args.noise_free:
        spec = replace(spec, body_noise=0.0, attribute_noise_flip_rate=0.0, visual_noise=0.0)
    catalog = generate_synthetic(spec)

    path = Path(args.out or config.paths.catalog)
    save_catalog(catalog, path)
    print(f"Generated {len(catalog.bodies)} bodies, {len(catalog.garments)} garments, "
          f"{len(catalog.positives)} observed positives -> {path}")
    print("\nGarments by number of distinct wearers:")
    print(wearer_histogram(catalog).to_string())
    return EXIT_OK


def cmd_cluster(args, config: RunConfig) -> int:
    catalog = _catalog(args, config)
    clustering = cluster_bodies(
        catalog,
        k=args.k or config.clustering.k,
        seed=config.clustering.seed if args.seed is None else args.seed,
        max_iter=config.clustering.max_iter,
        restarts=config.clustering.restarts,
    )
    path = Path(args.out or config.paths.clustering)
    save_clustering(clustering, path)

    labels = propagate_labels(catalog, clustering)
    split = build_split(
        catalog, labels, clustering, config.split.body_holdout, config.split.garment_holdout, seed=config.run.seed
    )
    print(f"Clustered {len(catalog.bodies)} bodies into {clustering.k} types (WCSS {clustering.inertia:.4f}) -> {path}")
    print(f"Type sizes: {clustering.sizes()}")
    print(f"\nDataset statistics (split seed {config.run.seed}):")
    print(format_dataset_statistics(dataset_statistics(split, labels, clustering)))
    print("Garments by number of body types after propagation:")
    print(type_histogram(labels, [g.garment_id for g in catalog.garments]).to_string())
    return EXIT_OK


def cmd_train(args, config: RunConfig) -> int:
    method = args.method or config.run.method
    method_config = config.method_config(method)
    seed = config.run.seed if args.seed is None else args.seed
    method_config = replace(method_config, seed=seed)

    catalog = _catalog(args, config)
    clustering, labels = _typing(args, config, catalog)
    split = build_split(
        catalog, labels, clustering, config.split.body_holdout, config.split.garment_holdout, seed=seed
    )
    model, trajectory = train_method(method, method_config, catalog, split, labels, clustering)

    path = Path(args.out or config.paths.checkpoint)
    save_checkpoint(path, model, method, method_config.as_dict(), config_hash(config))
    write_atomic(path.with_suffix('.loss.csv'), trajectory.to_csv(index=False, float_format='%.10g'))
    save_split(split, path.with_suffix('.split'))
    print(f"Trained {method} (seed {seed}): final loss {trajectory['loss'].iloc[-1]:.6f} -> {path}")
    return EXIT_OK


def cmd_eval(args, config: RunConfig) -> int:
    if args.checkpoint:
        return _eval_checkpoint(args, config)

    catalog = _catalog(args, config)
    clustering, labels = _typing(args, config, catalog)
    methods = args.methods or list(config.eval.methods)
    pipeline = ExperimentPipeline(
        catalog,
        methods=methods,
        configs=config.method_configs(),
        num_types=clustering.k,
        runs=args.runs or config.eval.runs,
        seed=config.run.seed,
        quantiles=config.eval.quantiles if args.specificity else None,
        body_holdout=config.split.body_holdout,
        garment_holdout=config.split.garment_holdout,
        jobs=args.jobs or config.eval.jobs,
        metrics_path=args.metrics or config.paths.metrics,
        db_path=args.db or config.paths.db or None,
        config_hash=config_hash(config),
        catalog_name=Path(args.catalog or config.paths.catalog).name,
    )
    pipeline.clustering = clustering
    pipeline.run()

    print(format_scenario_table(pipeline.reports))
    if args.specificity:
        print("Specificity (scenario iii):")
        print(specificity_table(pipeline.reports).to_string(float_format=lambda v: f"{v:.4f}"))
    if args.charts:
        write_chart(auc_bar_chart(pipeline.reports), Path(args.charts) / 'auc_by_scenario.html')
        if args.specificity:
            write_chart(specificity_chart(pipeline.reports), Path(args.charts) / 'specificity.html')
    return EXIT_OK


def _eval_checkpoint(args, config: RunConfig) -> int:
    if not (args.preferences or args.judgments):
        raise UsageError("--checkpoint needs --preferences and/or --judgments")
    checkpoint = load_checkpoint(args.checkpoint)
    catalog = _catalog(args, config)
    scorer = model_scorer(checkpoint.model, catalog)
    lines = [f"config_hash={checkpoint.config_hash}", f"method={checkpoint.method}"]
    if args.preferences:
        pairs = load_preferences(args.preferences)
        lines.append(f"preference_auc={preference_auc(scorer, pairs, catalog)!r}")
        lines.append(f"preference_pairs={len(pairs)}")
    if args.judgments:
        judgments = load_judgments(args.judgments)
        lines.append(f"judged_pair_auc={judged_pair_auc(scorer, judgments, catalog)!r}")
        lines.append(f"judged_pairs={len(judgments)}")
    text = '\n'.join(lines) + '\n'
    if args.metrics:
        write_atomic(args.metrics, text)
    print(text, end='')
    return EXIT_OK


def cmd_recommend(args, config: RunConfig) -> int:
    checkpoint = load_checkpoint(args.checkpoint or config.paths.checkpoint)
    catalog = _catalog(args, config)
    bodies = _target_bodies(args, catalog)
    garment_ids = [g.garment_id for g in catalog.garments]
    # unseen bodies resolve through their own table
    body_catalog = Catalog(bodies, catalog.garments, frozenset(), catalog.attribute_vocabulary)
    scorer = model_scorer(checkpoint.model, body_catalog)
    for body in bodies:
        scores = scorer([body.body_id] * len(garment_ids), garment_ids)
        best, worst = rank_garments(scores, garment_ids, args.top_k)
        print(format_recommendations(body.body_id, best, worst))
    return EXIT_OK


def cmd_explain(args, config: RunConfig) -> int:
    checkpoint = load_checkpoint(args.checkpoint or config.paths.checkpoint)
    if not isinstance(checkpoint.model, ViBEModel):
        raise CheckpointError(f"explain needs an embedding checkpoint, got '{checkpoint.method}'")
    catalog = _catalog(args, config)
    m = config.explain.m if args.m is None else args.m
    top_k = config.explain.top_k if args.top_k is None else args.top_k
    for body in _target_bodies(args, catalog):
        report = explain_report(checkpoint.model, body, catalog, m=m, top_k=top_k, ridge=config.explain.ridge)
        print(report_key_values(report) if args.key_values else format_report(report))
    return EXIT_OK


def cmd_verify(args, config: RunConfig) -> int:
    results = run_checks(full=args.full, seed=config.run.seed)
    print(format_results(results), end='')
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog='vibe', description='Body-aware clothing recommendation')
    parser.add_argument('--config', help='INI config file (default: $VIBE_CONFIG, else built-in defaults)')
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', required=True, parser_class=ArgumentParser)

    gen = sub.add_parser('gen-data', help='write a synthetic catalog and its oracle')
    gen.add_argument('--out', help='catalog path (oracle goes to <out>.oracle)')
    gen.add_argument('--seed', type=int)
    gen.add_argument('--garments', type=int)
    gen.add_argument('--category', choices=['dress', 'top'])
    gen.add_argument('--noise-free', action='store_true')
    gen.set_defaults(handler=cmd_gen_data)

    cluster = sub.add_parser('cluster', help='cluster bodies into types')
    cluster.add_argument('--catalog')
    cluster.add_argument('--out')
    cluster.add_argument('--k', type=int)
    cluster.add_argument('--seed', type=int)
    cluster.set_defaults(handler=cmd_cluster)

    train = sub.add_parser('train', help='train one method and write a checkpoint')
    train.add_argument('--method', choices=METHODS)
    train.add_argument('--catalog')
    train.add_argument('--clustering')
    train.add_argument('--out', help='checkpoint path')
    train.add_argument('--seed', type=int)
    train.set_defaults(handler=cmd_train)

    evaluate = sub.add_parser('eval', help='cold-start scenario evaluation, or pair files against a checkpoint')
    evaluate.add_argument('--catalog')
    evaluate.add_argument('--clustering')
    evaluate.add_argument('--methods', nargs='+', choices=METHODS)
    evaluate.add_argument('--runs', type=int)
    evaluate.add_argument('--jobs', type=int)
    evaluate.add_argument('--specificity', action='store_true', help='also compute versatility quantile curves')
    evaluate.add_argument('--metrics', help='key=value metrics output')
    evaluate.add_argument('--db', help='SQLAlchemy URL of the results warehouse')
    evaluate.add_argument('--charts', help='directory for HTML charts')
    evaluate.add_argument('--checkpoint')
    evaluate.add_argument('--preferences', help='body_id preferred_id rejected_id lines')
    evaluate.add_argument('--judgments', help='body_id garment_id 0|1 lines')
    evaluate.set_defaults(handler=cmd_eval)

    for name, handler, help_text in (
        ('recommend', cmd_recommend, 'most and least suitable garments for bodies'),
        ('explain', cmd_explain, 'most and least suitable attributes for bodies'),
    ):
        command = sub.add_parser(name, help=help_text)
        command.add_argument('--checkpoint')
        command.add_argument('--catalog')
        command.add_argument('--bodies', help='body file (bodies need not be in the catalog)')
        command.add_argument('--body-id', action='append', help='catalog body id (repeatable)')
        command.add_argument('--top-k', type=int, default=10 if name == 'recommend' else None)
        if name == 'explain':
            command.add_argument('--m', type=int)
            command.add_argument('--key-values', action='store_true')
        command.set_defaults(handler=handler)

    verify = sub.add_parser('verify', help='run the built-in oracle checks')
    verify.add_argument('--full', action='store_true', help='also run the planted-oracle experiments')
    verify.set_defaults(handler=cmd_verify)
    return parser


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        config = load_config(args.config)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA

    configure_logging(config.paths.output_dir, args.verbose)
    try:
        return args.handler(args, config)
    except (UsageError, ConfigError) as e:
        logger.error(str(e))
        return EXIT_USAGE
    except NumericError as e:
        logger.error(f"Numeric failure: {e}")
        return EXIT_NUMERIC
    except (FileNotFoundError, DataQualityError, CheckpointError, SplitError, SamplingError) as e:
        logger.error(str(e))
        return EXIT_DATA


def main():
    sys.exit(run_command())


if __name__ == '__main__':
    main()
