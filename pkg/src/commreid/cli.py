"""Command-line front end: ``commreid <command> [flags]``.

Every command accepts ``--config FILE.json`` whose keys are flag names
(``learning_rate`` or ``learning-rate``); flags given on the command line
win. Reports go to standard output as JSON unless ``--out`` is given.
All randomness derives from ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .analysis import cluster_words, community_similarity, embedding_drift, top_tweets, write_drift_tsv
from .classifier import CommunityClassifier
from .corpus import SPLITS, load_corpus, save_corpus
from .embedding import EmbeddingMatrix, embed_users
from .eval import CommunitySpec, EmbeddingTable, leave_one_out
from .exceptions import CommReidError
from .index import RetrievalIndex
from .reid import TrainConfig, initial_matrix, train_reid
from .synth import CommunityConfig, SynthConfig, benchmark_config, generate
from .vocab import Vocabulary, build_vocabulary

log = logging.getLogger("commreid")

# flags that must end up set, from the command line or the config file
REQUIRED = {
    "synth": ["out_dir"],
    "build-vocab": ["corpus", "out"],
    "train-embeddings": ["corpus", "vocab", "out"],
    "embed-users": ["corpus", "vocab", "embeddings", "out"],
    "build-index": ["user_embeddings", "out"],
    "fit": ["user_embeddings", "query", "out"],
    "retrieve": ["index"],
    "evaluate": ["user_embeddings", "community"],
    "analyze-drift": ["embeddings", "init", "vocab"],
    "analyze-communities": ["user_embeddings", "community"],
    "top-tweets": ["classifier", "corpus", "vocab", "embeddings"],
}


# -- file helpers ----------------------------------------------------------

def write_user_embeddings(path, user_ids, X, splits) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for uid, vec, split in zip(user_ids, X, splits):
            rec = {"user_id": uid, "split": split, "vector": [float(v) for v in vec]}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_user_embeddings(path, splits=None):
    """``(user_ids, X, split_tags)`` from a user-embedding JSONL file."""
    ids, vecs, tags = [], [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if splits and rec.get("split") not in splits:
                continue
            ids.append(rec["user_id"])
            vecs.append(rec["vector"])
            tags.append(rec.get("split"))
    if not vecs:
        return ids, np.empty((0, 0)), tags
    return ids, np.asarray(vecs, dtype=np.float64), tags


def _emit(obj, out=None) -> None:
    text = json.dumps(obj, indent=2, ensure_ascii=False, sort_keys=False) + "\n"
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- commands --------------------------------------------------------------

def cmd_synth(args):
    if args.benchmark:
        cfg = benchmark_config(args.seed)
    else:
        comms = []
        for spec in args.community or []:
            name, _, size = spec.partition(":")
            comms.append(CommunityConfig(name, int(size), args.topic_words, args.topic_mix))
        cfg = SynthConfig(
            vocab_size=args.vocab_size,
            n_background_users=args.n_background,
            communities=comms,
            posts_per_user=args.posts_per_user,
            tokens_per_post=args.tokens_per_post,
            seed=args.seed,
            n_interests=args.n_interests,
            interest_word_count=args.interest_words,
            interest_mix=args.interest_mix,
        )
    corpus, specs = generate(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    save_corpus(corpus, os.path.join(args.out_dir, "corpus.jsonl"))
    paths = []
    for spec in specs:
        p = os.path.join(args.out_dir, f"community_{spec.name}.json")
        spec.save(p)
        paths.append(p)
    with open(os.path.join(args.out_dir, "synth_config.json"), "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2)
        fh.write("\n")
    _emit({"users": len(corpus), "communities": paths})


def cmd_build_vocab(args):
    corpus = load_corpus(args.corpus)
    docs = [d for d in corpus if not args.split or d.split in args.split]
    vocab = build_vocabulary(docs, args.min_count, args.max_size, args.delta, args.theta)
    vocab.save(args.out)
    log.info("vocabulary: %d entries, %d bigrams", len(vocab), len(vocab.accepted_bigrams))


def cmd_train_embeddings(args):
    corpus = load_corpus(args.corpus)
    vocab = Vocabulary.load(args.vocab)
    cfg = TrainConfig(
        dim=args.dim,
        sample_size=args.sample_size,
        steps=args.steps,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=args.seed,
        init=args.init,
        epoch_size=args.epoch_size,
    )
    init = initial_matrix(cfg, vocab)
    if args.save_init:
        init.save(args.save_init)
    E, report = train_reid(corpus, cfg, vocab, init=init)
    E.save(args.out)
    log.info("trained %d triplets in %.1fs", cfg.steps, report.wall_time)
    if args.report:
        _emit(report.to_dict(include_time=False), args.report)


def cmd_embed_users(args):
    corpus = load_corpus(args.corpus)
    vocab = Vocabulary.load(args.vocab)
    E = EmbeddingMatrix.load(args.embeddings)
    if E.vocab_hash != vocab.fingerprint():
        log.warning("embedding matrix was trained against a different vocabulary")
    docs = [d for d in corpus if not args.split or d.split in args.split]
    ids, X, skipped = embed_users(docs, vocab, E, args.max_posts)
    if skipped:
        log.warning("skipped %d users without in-vocabulary tokens", len(skipped))
    write_user_embeddings(args.out, ids, X, [corpus[u].split for u in ids])


def cmd_build_index(args):
    ids, X, _ = read_user_embeddings(args.user_embeddings, args.split)
    index = RetrievalIndex(n_tables=args.tables, n_bits=args.bits, random_state=args.seed)
    index.fit(X, ids)
    index.save(args.out)


def _fit_query(user_embeddings, query_path, neg_split, lam):
    ids, X, tags = read_user_embeddings(user_embeddings)
    table = EmbeddingTable(ids, X)
    spec = CommunitySpec.load(query_path)
    members = set(spec.member_ids)
    neg = [u for u, t in zip(ids, tags) if t == neg_split and u not in members]
    pos = table.rows(spec.member_ids)
    Xtr = np.vstack([pos, table.rows(neg)])
    y = np.r_[np.ones(len(pos)), np.zeros(len(neg))]
    return CommunityClassifier(lam=lam).fit(Xtr, y), spec


def cmd_fit(args):
    clf, _ = _fit_query(args.user_embeddings, args.query, args.neg_split, args.lam)
    clf.save(args.out)


def cmd_retrieve(args):
    index = RetrievalIndex.load(args.index)
    exclude = set()
    if args.classifier:
        clf = CommunityClassifier.load(args.classifier)
    elif args.query and args.user_embeddings:
        clf, spec = _fit_query(args.user_embeddings, args.query, args.neg_split, args.lam)
        if not args.include_query:
            exclude = set(spec.member_ids)
    else:
        raise UsageError("retrieve needs --classifier, or --query with --user-embeddings")
    result = index.query(clf.coef_, args.k + len(exclude), args.mode)
    hits = [r for r in result.to_list() if r["user_id"] not in exclude][: args.k]
    _emit({"mode": args.mode, "results": hits}, args.out)


def cmd_evaluate(args):
    ids, X, tags = read_user_embeddings(args.user_embeddings)
    table = EmbeddingTable(ids, X)
    specs = [CommunitySpec.load(p) for p in args.community]
    members = {m for s in specs for m in s.member_ids}
    neg = [u for u, t in zip(ids, tags) if t == args.neg_split and u not in members]
    test = [u for u, t in zip(ids, tags) if t == args.test_split and u not in members]
    reports = [leave_one_out(s, table, neg, test, args.lam) for s in specs]
    _emit(
        {
            "communities": [r.to_dict() for r in reports],
            "mean_auc": float(np.mean([r.mean_auc for r in reports])),
            "mean_inv_mrr": float(np.mean([r.inv_mrr for r in reports])),
        },
        args.out,
    )


def cmd_analyze_drift(args):
    vocab = Vocabulary.load(args.vocab)
    final = EmbeddingMatrix.load(args.embeddings)
    init = EmbeddingMatrix.load(args.init)
    entries = embedding_drift(final, init, args.top_n, vocab.tokens)
    if args.tsv:
        write_drift_tsv(entries, args.tsv)
    out = {"drift": [{"token": e.token, "distance": e.distance} for e in entries]}
    if args.clusters:
        rows = final.rows[[vocab.index[e.token] for e in entries]]
        clusters = cluster_words(rows, args.clusters, [e.token for e in entries], args.linkage)
        out["clusters"] = [{"medoid": c.medoid, "members": list(c.members)} for c in clusters]
    _emit(out, args.out)


def cmd_analyze_communities(args):
    ids, X, _ = read_user_embeddings(args.user_embeddings)
    table = EmbeddingTable(ids, X)
    specs = [CommunitySpec.load(p) for p in args.community]
    _emit(community_similarity([(s.name, table.rows(s.member_ids)) for s in specs]), args.out)


def cmd_top_tweets(args):
    clf = CommunityClassifier.load(args.classifier)
    corpus = load_corpus(args.corpus)
    vocab = Vocabulary.load(args.vocab)
    E = EmbeddingMatrix.load(args.embeddings)
    users = list(args.user or [])
    if args.query:
        users += CommunitySpec.load(args.query).member_ids
    if not users:
        raise UsageError("top-tweets needs --user or --query")
    out = {}
    for uid in users:
        if uid not in corpus:
            raise UsageError(f"unknown user {uid!r}")
        out[uid] = [{"post": p, "score": s} for p, s in top_tweets(clf, corpus[uid], vocab, E, args.k)]
    _emit(out, args.out)


# -- parser ----------------------------------------------------------------

class UsageError(Exception):
    pass


def _common(p):
    p.add_argument("--config", help="JSON file of flag defaults; command-line flags win")
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads; computation is single-threaded, so 1 is the only mode")
    p.add_argument("--out", help="output path (reports default to stdout)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="commreid", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        _common(p)
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic corpus with planted communities")
    p.add_argument("--out-dir", help="directory for corpus.jsonl and community_*.json")
    p.add_argument("--benchmark", action="store_true", help="use the desk-scale benchmark preset")
    p.add_argument("--vocab-size", type=int, default=2000)
    p.add_argument("--n-background", type=int, default=500)
    p.add_argument("--community", action="append", metavar="NAME:SIZE")
    p.add_argument("--topic-words", type=int, default=40)
    p.add_argument("--topic-mix", type=float, default=0.3)
    p.add_argument("--posts-per-user", type=int, default=50)
    p.add_argument("--tokens-per-post", type=int, default=6)
    p.add_argument("--n-interests", type=int, default=16)
    p.add_argument("--interest-words", type=int, default=40)
    p.add_argument("--interest-mix", type=float, default=0.3)

    p = add("build-vocab", cmd_build_vocab, "build the token vocabulary (TSV)")
    p.add_argument("--corpus")
    p.add_argument("--min-count", type=int, default=20)
    p.add_argument("--max-size", type=int, default=200_000)
    p.add_argument("--delta", type=int, default=5)
    p.add_argument("--theta", type=float, default=10.0)
    p.add_argument("--split", action="append", choices=SPLITS, help="restrict to a split (repeatable)")

    p = add("train-embeddings", cmd_train_embeddings, "learn the word embedding matrix by re-identification")
    p.add_argument("--corpus")
    p.add_argument("--vocab")
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--sample-size", type=int, default=50, help="posts per sampled bag")
    p.add_argument("--steps", type=int, default=200_000, help="number of triplets")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--epoch-size", type=int, default=10_000, help="triplets per reported epoch")
    p.add_argument("--init", default="random", help="'random' or a pretrained vector file")
    p.add_argument("--save-init", help="also write the initial matrix here")
    p.add_argument("--report", help="write the training report JSON here")

    p = add("embed-users", cmd_embed_users, "embed users with a trained matrix (JSONL)")
    p.add_argument("--corpus")
    p.add_argument("--vocab")
    p.add_argument("--embeddings", help="embedding matrix file")
    p.add_argument("--split", action="append", choices=SPLITS)
    p.add_argument("--max-posts", type=int, help="use only the first N posts of each user")

    p = add("build-index", cmd_build_index, "build a retrieval index from user embeddings")
    p.add_argument("--user-embeddings")
    p.add_argument("--tables", type=int, default=32, help="LSH tables (0 disables LSH)")
    p.add_argument("--bits", type=int, default=12, help="sign bits per table")
    p.add_argument("--split", action="append", choices=SPLITS)

    def classifier_flags(p):
        p.add_argument("--user-embeddings")
        p.add_argument("--query", help="community JSON whose members are the positives")
        p.add_argument("--neg-split", default="classifier-train", choices=SPLITS)
        p.add_argument("--lambda", dest="lam", type=float, default=1.0)

    p = add("fit", cmd_fit, "fit a community classifier from a query set")
    classifier_flags(p)

    p = add("retrieve", cmd_retrieve, "retrieve the top-k users for a community")
    classifier_flags(p)
    p.add_argument("--index")
    p.add_argument("--classifier", help="fitted classifier JSON (instead of --query)")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--mode", choices=("exact", "approx"), default="exact")
    p.add_argument("--include-query", action="store_true", help="keep query members in the results")

    p = add("evaluate", cmd_evaluate, "leave-one-out evaluation of communities")
    p.add_argument("--user-embeddings")
    p.add_argument("--community", action="append", help="community JSON (repeatable)")
    p.add_argument("--neg-split", default="classifier-train", choices=SPLITS)
    p.add_argument("--test-split", default="test", choices=SPLITS)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)

    p = add("analyze-drift", cmd_analyze_drift, "words that moved farthest from initialization")
    p.add_argument("--embeddings", help="trained matrix")
    p.add_argument("--init", help="initial matrix")
    p.add_argument("--vocab")
    p.add_argument("--top-n", type=int, default=1000)
    p.add_argument("--clusters", type=int, default=0, help="cluster the drifted words into N groups")
    p.add_argument("--linkage", choices=("average", "single", "complete"), default="average")
    p.add_argument("--tsv", help="also write token<TAB>distance here")

    p = add("analyze-communities", cmd_analyze_communities, "distances between community centroids")
    p.add_argument("--user-embeddings")
    p.add_argument("--community", action="append")

    p = add("top-tweets", cmd_top_tweets, "highest scoring posts of users under a classifier")
    p.add_argument("--classifier")
    p.add_argument("--corpus")
    p.add_argument("--vocab")
    p.add_argument("--embeddings")
    p.add_argument("--user", action="append")
    p.add_argument("--query", help="community JSON; scores every member")
    p.add_argument("--k", type=int, default=5)
    return parser


def _config_defaults(argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    with open(known.config, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError("--config must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        defaults = _config_defaults(argv)
    except (OSError, ValueError, UsageError) as exc:
        parser.print_usage(sys.stderr)
        print(f"commreid: error: bad --config: {exc}", file=sys.stderr)
        return 2
    if defaults:
        # apply config values to the chosen subcommand's parser
        subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        for sp in subparsers.choices.values():
            sp.set_defaults(**defaults)
    args = parser.parse_args(argv)
    sub = args.command
    missing = [f"--{name.replace('_', '-')}" for name in REQUIRED[sub] if not getattr(args, name, None)]
    if missing:
        print(f"commreid {sub}: error: missing required {', '.join(missing)}", file=sys.stderr)
        return 2
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads != 1:
        log.info("--threads %d requested; running single-threaded", args.threads)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"commreid {sub}: error: {exc}", file=sys.stderr)
        return 2
    except (CommReidError, OSError, ValueError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"commreid {sub}: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
