"""Command line entry point.

Subcommands cover the full workflow: generate a synthetic dataset, train and
evaluate embedding variants, train the learned re-ranker, run single logged
sessions, benchmark the candidate strategies, and serve the HTTP API.  Every
flag can also come from a JSON config file (``--config``, keyed by
subcommand); explicit flags win.  Artifacts embed their resolved
configuration and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .data import (
    AttributeSchema,
    Dataset,
    benchmark_schema,
    generate_synthetic,
    load_dataset,
    sample_query_target_pairs,
    sample_triplets_per_attribute,
    save_dataset,
)
from .dqn import DqnConfig, load_qnet, save_qnet, train_dqn
from .eer import fit_platt, load_platt, save_platt
from .embedding import (
    EmbeddingConfig,
    load_model,
    per_attribute_satisfaction,
    satisfaction_rate,
    save_model,
    train,
)
from .errors import AttrSearchError
from .index import SearchIndex
from .session import (
    STRATEGIES,
    benchmark,
    run_session,
    save_benchmark_report,
    save_session_logs,
)


def _load_config_section(path: str | None, section: str) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    part = doc.get(section, {})
    if not isinstance(part, dict):
        raise AttrSearchError(f"config section {section!r} must be an object")
    return part


class _Resolver:
    """flag > config file > env var > default."""

    def __init__(self, args: argparse.Namespace, section: str):
        self.args = args
        self.config = _load_config_section(getattr(args, "config", None), section)

    def get(self, key: str, default=None, env: str | None = None, cast=None):
        value = getattr(self.args, key, None)
        if value is None:
            value = self.config.get(key)
        if value is None and env:
            value = os.environ.get(env)
        if value is None:
            return default
        return cast(value) if cast else value


def _parse_schema(text: str) -> AttributeSchema:
    """'name:v1,v2;name2:v1,v2' -> schema."""
    attrs = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        name, _, values = chunk.partition(":")
        attrs.append((name.strip(), tuple(v.strip() for v in values.split(",") if v.strip())))
    return AttributeSchema(tuple(attrs))


def _database(dataset: Dataset, split: str) -> Dataset:
    return dataset if split == "all" else dataset.subset(split)


def _load_artifacts(res: _Resolver, need_platt: bool, need_qnet: bool):
    data_path = res.get("data", env="ATTRSEARCH_DATA")
    ckpt_path = res.get("ckpt", env="ATTRSEARCH_CKPT")
    if not data_path or not ckpt_path:
        raise AttrSearchError("--data and --ckpt are required")
    dataset = load_dataset(data_path)
    model, _ = load_model(ckpt_path)
    platt = None
    platt_path = res.get("platt", env="ATTRSEARCH_PLATT") or f"{ckpt_path}.platt.json"
    if os.path.exists(platt_path):
        platt = load_platt(platt_path)
    elif need_platt:
        raise AttrSearchError(f"no Platt calibration at {platt_path}; run train-emb first")
    qnet = None
    qnet_path = res.get("qnet", env="ATTRSEARCH_QNET")
    if qnet_path:
        qnet, _, _ = load_qnet(qnet_path)
    elif need_qnet:
        raise AttrSearchError("--qnet is required for the dqn strategy")
    return dataset, model, platt, qnet


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen_data(args) -> int:
    res = _Resolver(args, "gen-data")
    schema_text = res.get("attributes")
    schema = _parse_schema(schema_text) if schema_text else benchmark_schema()
    splits = res.get("splits", "0.7,0.1,0.2")
    fractions = tuple(float(x) for x in str(splits).split(","))
    params = {
        "n_items": res.get("n_items", 2000, cast=int),
        "dim": res.get("dim", 32, cast=int),
        "noise_sigma": res.get("noise", 0.25, cast=float),
        "seed": res.get("seed", 0, cast=int),
        "label_density": res.get("label_density", 1.0, cast=float),
        "split_fractions": fractions,
    }
    dataset = generate_synthetic(schema, **params)
    save_dataset(dataset, args.out)
    meta = {
        "schema": [[n, list(v)] for n, v in schema.attributes],
        **{k: (list(v) if isinstance(v, tuple) else v) for k, v in params.items()},
    }
    with open(f"{args.out}.meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")
    counts = {s: sum(1 for it in dataset if it.split == s) for s in ("train", "val", "test")}
    print(f"wrote {len(dataset)} items to {args.out} (splits: {counts})")
    return 0


def _embedding_config(res: _Resolver) -> EmbeddingConfig:
    variant = res.get("variant", "full")
    builders = {
        "baseline": EmbeddingConfig.baseline,
        "constrained": EmbeddingConfig.constrained,
        "full": EmbeddingConfig.full,
    }
    if variant not in builders:
        raise AttrSearchError(f"unknown variant {variant!r}")
    overrides = {}
    for key, cast in [
        ("e_dim", int), ("h", float), ("lambda1", float), ("lambda2", float),
        ("epochs", int), ("batch_size", int), ("lr", float), ("momentum", float),
        ("lr_decay_every", int), ("lr_decay_factor", float), ("seed", int),
    ]:
        value = res.get(key, cast=cast)
        if value is not None:
            overrides[key] = value
    eta = res.get("eta", cast=float)
    if eta is not None and variant == "full":
        overrides["eta"] = eta
    return builders[variant](**overrides)


def _cmd_train_emb(args) -> int:
    res = _Resolver(args, "train-emb")
    data_path = res.get("data", env="ATTRSEARCH_DATA")
    if not data_path:
        raise AttrSearchError("--data is required")
    dataset = load_dataset(data_path)
    config = _embedding_config(res)
    n_train = res.get("train_triplets_per_attr", 5000, cast=int)
    n_val = res.get("val_triplets_per_attr", 1000, cast=int)
    train_split = dataset.subset("train")
    val_split = dataset.subset("val")
    triplets = sample_triplets_per_attribute(train_split, n_train, config.seed)
    val_triplets = sample_triplets_per_attribute(val_split, n_val, config.seed + 1)
    model, log = train(dataset=dataset, triplets=triplets, config=config,
                       val_triplets=val_triplets)
    save_model(model, args.out, log=log)
    print(f"{config.variant_name}: best val satisfaction "
          f"{log['best_val_satisfaction']:.4f} at epoch {log['selected_epoch']}")
    if not res.get("no_platt", False):
        platt = fit_platt(model, train_split,
                          n_pairs=res.get("platt_pairs", 10000, cast=int),
                          seed=config.seed)
        save_platt(platt, f"{args.out}.platt.json")
        print(f"calibration written to {args.out}.platt.json")
    print(f"checkpoint written to {args.out}")
    return 0


def _cmd_eval_emb(args) -> int:
    res = _Resolver(args, "eval-emb")
    data_path = res.get("data", env="ATTRSEARCH_DATA")
    if not data_path:
        raise AttrSearchError("--data is required")
    dataset = load_dataset(data_path)
    split = res.get("split", "test")
    part = _database(dataset, split)
    n = res.get("triplets_per_attr", 1000, cast=int)
    seed = res.get("seed", 0, cast=int)
    triplets = sample_triplets_per_attribute(part, n, seed)
    names = list(part.schema.names)
    header = f"{'variant':<14}" + "".join(f"{n:>12}" for n in names) + f"{'overall':>12}"
    print(header)
    for ckpt in args.ckpt:
        model, _ = load_model(ckpt)
        rates = per_attribute_satisfaction(model, part, triplets)
        overall = satisfaction_rate(model, part, triplets)
        row = f"{model.config.variant_name:<14}"
        row += "".join(f"{rates[a]:>12.4f}" for a in names)
        row += f"{overall:>12.4f}"
        print(row)
    return 0


def _cmd_train_dqn(args) -> int:
    res = _Resolver(args, "train-dqn")
    dataset, model, _, _ = _load_artifacts(res, need_platt=False, need_qnet=False)
    db = _database(dataset, res.get("db_split", "train"))
    index = SearchIndex(model, db)
    config = DqnConfig(
        k_cand=res.get("k_cand", 4, cast=int),
        gamma=res.get("gamma", 0.999, cast=float),
        batch_size=res.get("batch_size", 2048, cast=int),
        replay_capacity=res.get("replay", 20000, cast=int),
        eps_start=res.get("eps_start", 0.9, cast=float),
        eps_end=res.get("eps_end", 0.05, cast=float),
        eps_tau=res.get("eps_tau", 2000.0, cast=float),
        lr=res.get("lr", 0.01, cast=float),
        momentum=res.get("momentum", 0.9, cast=float),
        target_sync=res.get("target_sync", 500, cast=int),
        episodes=res.get("episodes", 500, cast=int),
        max_steps=res.get("max_steps", 50, cast=int),
        seed=res.get("seed", 0, cast=int),
    )
    pairs = sample_query_target_pairs(db, res.get("pairs_per_attr", 500, cast=int), config.seed)
    net, log = train_dqn(index, pairs, config)
    meta = {
        "e_dim": model.config.e_dim,
        "n_attributes": model.schema.n_attributes,
        "schema_digest": model.schema.digest(),
        "db_split": res.get("db_split", "train"),
    }
    save_qnet(net, args.out, config=config, log=log, meta=meta)
    episodes = log["episodes"]
    tail = episodes[-50:] if len(episodes) >= 50 else episodes
    mean_tail = np.mean([e["steps"] for e in tail]) if tail else float("nan")
    print(f"trained {len(episodes)} episodes ({log['opt_steps']} optimization steps); "
          f"mean steps over last {len(tail)}: {mean_tail:.2f}")
    print(f"q-network written to {args.out}")
    return 0


def _cmd_simulate(args) -> int:
    res = _Resolver(args, "simulate")
    strategy = res.get("strategy", "fcs")
    dataset, model, platt, qnet = _load_artifacts(
        res, need_platt=strategy == "eer", need_qnet=strategy == "dqn")
    db = _database(dataset, res.get("db_split", "test"))
    index = SearchIndex(model, db)
    seed = res.get("seed", 0, cast=int)
    query = res.get("query", "random")
    target = res.get("target", "random")
    if query == "random" or target == "random":
        pairs = sample_query_target_pairs(db, 1, seed)
        rng = np.random.default_rng(seed)
        pair = pairs[int(rng.integers(len(pairs)))]
    else:
        from .data import QueryTargetPair
        pair = QueryTargetPair(query=query, target=target, shared_attribute="")
    steps, curve, log = run_session(
        index, pair, strategy,
        max_steps=res.get("max_steps", 50, cast=int),
        k_cand=res.get("k_cand", 4, cast=int),
        platt=platt, qnet=qnet)
    print(f"strategy={strategy} query={pair.query} target={pair.target} "
          f"steps={steps} status={log['status']}")
    print("rank curve: " + " ".join(str(r) for r in curve))
    if args.log:
        save_session_logs([log], args.log)
        print(f"session log written to {args.log}")
    return 0


def _cmd_bench(args) -> int:
    res = _Resolver(args, "bench")
    strategies = [s.strip() for s in res.get("strategies", "nn,fcs,eer,dqn").split(",") if s.strip()]
    dataset, model, platt, qnet = _load_artifacts(
        res, need_platt="eer" in strategies, need_qnet="dqn" in strategies)
    db = _database(dataset, res.get("db_split", "test"))
    index = SearchIndex(model, db)
    seed = res.get("seed", 0, cast=int)
    pairs = sample_query_target_pairs(db, res.get("pairs_per_attr", 125, cast=int), seed)
    report, logs = benchmark(
        index, pairs, strategies,
        max_steps=res.get("max_steps", 50, cast=int),
        k_cand=res.get("k_cand", 4, cast=int),
        platt=platt, qnet=qnet, seed=seed)
    print(f"{'strategy':<10}{'mean steps':>12}{'std':>10}{'found':>9}")
    for name in strategies:
        row = report["strategies"][name]
        print(f"{name:<10}{row['mean_steps']:>12.3f}{row['std_steps']:>10.3f}"
              f"{row['found_rate']:>9.3f}")
    if args.report:
        save_benchmark_report(report, args.report)
        print(f"report written to {args.report}")
    if args.logs_dir:
        os.makedirs(args.logs_dir, exist_ok=True)
        for name in strategies:
            path = os.path.join(args.logs_dir, f"sessions-{name}.jsonl")
            save_session_logs(logs[name], path)
        print(f"session logs written to {args.logs_dir}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import Engine, create_app

    res = _Resolver(args, "serve")
    default_strategy = res.get("default_strategy", "fcs", env="ATTRSEARCH_STRATEGY")
    dataset, model, platt, qnet = _load_artifacts(
        res, need_platt=default_strategy == "eer", need_qnet=default_strategy == "dqn")
    db = _database(dataset, res.get("db_split", "test"))
    index = SearchIndex(model, db)
    engine = Engine(
        index, platt=platt, qnet=qnet,
        state_dir=res.get("state_dir", env="ATTRSEARCH_STATE_DIR"),
        default_strategy=default_strategy,
        k_cand=res.get("k_cand", 4, cast=int),
        max_steps=res.get("max_steps", 50, cast=int),
    )
    app = create_app(engine, ui_dir=res.get("ui", env="ATTRSEARCH_UI"))
    host = res.get("host", "127.0.0.1", env="ATTRSEARCH_HOST")
    port = res.get("port", 8000, env="ATTRSEARCH_PORT", cast=int)
    print(f"serving on http://{host}:{port} (strategies: {engine.available_strategies()})")
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attrsearch",
        description="attribute-guided interactive search: train, simulate, benchmark, serve",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file keyed by subcommand")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("gen-data", help="generate a synthetic labeled dataset")
    add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n-items", dest="n_items", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--attributes", help="schema as 'name:v1,v2;name2:v1,v2'")
    p.add_argument("--label-density", dest="label_density", type=float)
    p.add_argument("--splits", help="train,val,test fractions")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train-emb", help="train one embedding variant")
    add_common(p)
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=["baseline", "constrained", "full"])
    p.add_argument("--e-dim", dest="e_dim", type=int)
    p.add_argument("--h", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--lr-decay-every", dest="lr_decay_every", type=int)
    p.add_argument("--lr-decay-factor", dest="lr_decay_factor", type=float)
    p.add_argument("--train-triplets-per-attr", dest="train_triplets_per_attr", type=int)
    p.add_argument("--val-triplets-per-attr", dest="val_triplets_per_attr", type=int)
    p.add_argument("--platt-pairs", dest="platt_pairs", type=int)
    p.add_argument("--no-platt", dest="no_platt", action="store_true", default=None)
    p.set_defaults(func=_cmd_train_emb)

    p = sub.add_parser("eval-emb", help="triplet satisfaction per attribute")
    add_common(p)
    p.add_argument("--data")
    p.add_argument("--ckpt", action="append", required=True,
                   help="checkpoint path (repeatable for ablation rows)")
    p.add_argument("--split", choices=["train", "val", "test", "all"])
    p.add_argument("--triplets-per-attr", dest="triplets_per_attr", type=int)
    p.set_defaults(func=_cmd_eval_emb)

    p = sub.add_parser("train-dqn", help="train the learned re-ranker")
    add_common(p)
    p.add_argument("--data")
    p.add_argument("--ckpt")
    p.add_argument("--out", required=True)
    p.add_argument("--episodes", type=int)
    p.add_argument("--pairs-per-attr", dest="pairs_per_attr", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--replay", type=int)
    p.add_argument("--eps-start", dest="eps_start", type=float)
    p.add_argument("--eps-end", dest="eps_end", type=float)
    p.add_argument("--eps-tau", dest="eps_tau", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--target-sync", dest="target_sync", type=int)
    p.add_argument("--k-cand", dest="k_cand", type=int)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--db-split", dest="db_split", choices=["train", "val", "test", "all"])
    p.set_defaults(func=_cmd_train_dqn)

    p = sub.add_parser("simulate", help="run one simulated session")
    add_common(p)
    p.add_argument("--data")
    p.add_argument("--ckpt")
    p.add_argument("--strategy", choices=list(STRATEGIES))
    p.add_argument("--query")
    p.add_argument("--target")
    p.add_argument("--platt")
    p.add_argument("--qnet")
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--k-cand", dest="k_cand", type=int)
    p.add_argument("--db-split", dest="db_split", choices=["train", "val", "test", "all"])
    p.add_argument("--log", help="write the session record as JSONL")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("bench", help="benchmark strategies over shared pairs")
    add_common(p)
    p.add_argument("--data")
    p.add_argument("--ckpt")
    p.add_argument("--strategies")
    p.add_argument("--platt")
    p.add_argument("--qnet")
    p.add_argument("--pairs-per-attr", dest="pairs_per_attr", type=int)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--k-cand", dest="k_cand", type=int)
    p.add_argument("--db-split", dest="db_split", choices=["train", "val", "test", "all"])
    p.add_argument("--report", help="write the benchmark report JSON here")
    p.add_argument("--logs-dir", dest="logs_dir", help="write per-strategy session logs here")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("serve", help="run the HTTP service")
    add_common(p)
    p.add_argument("--data")
    p.add_argument("--ckpt")
    p.add_argument("--platt")
    p.add_argument("--qnet")
    p.add_argument("--state-dir", dest="state_dir")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--default-strategy", dest="default_strategy", choices=list(STRATEGIES))
    p.add_argument("--k-cand", dest="k_cand", type=int)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--db-split", dest="db_split", choices=["train", "val", "test", "all"])
    p.add_argument("--ui", help="directory with built UI assets to serve at /")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AttrSearchError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
