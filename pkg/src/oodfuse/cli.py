"""Command-line surface: selection, evaluation, sweeps, oracle search,
analyses, and synthetic fixture generation over tensor files.

Exit codes: 0 success, 2 config error, 3 format error, 4 validation error.
stdout carries a one-line summary; machine output goes to files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List

import numpy as np

from . import analysis, fixtures, io, metrics, scoring, selection
from .errors import ConfigError, DomainError, FormatError, ValidationError
from .selection import HistogramSpec, LayerCombination
from .tensors import EmbeddingSet, ProbTensor, RawLogits, ScoreTensor

EXIT_CONFIG = 2
EXIT_FORMAT = 3
EXIT_VALIDATION = 4


def _load_scores(path: str, rule: str, temperature: float) -> ScoreTensor:
    """Read a tensor file and reduce it to per-layer scalar scores."""
    if str(path).endswith(".csv"):
        return io.read_csv_scores(path)
    tensor = io.read_tensor(path)
    if isinstance(tensor, ScoreTensor):
        return tensor
    if isinstance(tensor, EmbeddingSet):
        tensor = scoring.cosine_logits(tensor)
    if isinstance(tensor, (RawLogits, ProbTensor)):
        return scoring.apply_rule(
            tensor, scoring.ScoreRuleConfig(rule=rule, temperature=temperature)
        )
    raise ConfigError(f"cannot derive scores from {type(tensor).__name__}")


def _parse_combo(text: str) -> LayerCombination:
    try:
        return LayerCombination(int(t) for t in text.split(","))
    except ValueError:
        raise ConfigError(f"bad combination {text!r}; expected e.g. '2,5,11'") from None


def _add_scoring_flags(p):
    p.add_argument("--rule", default="mcm",
                   choices=["mcm", "msp", "maxlogit", "energy", "entropy", "variance"])
    p.add_argument("--temperature", type=float, default=1.0)


def cmd_select(args) -> int:
    scores = _load_scores(args.id, args.rule, args.temperature)
    candidates = selection.enumerate_candidates(scores.layer_count, args.max_len)
    spec = HistogramSpec(bins=args.bins, range_mode=args.range_mode)
    result = selection.select(
        scores, candidates, spec, heuristic=args.heuristic, seed=args.seed
    )
    io.write_report(result, args.out, format=args.format)
    print(
        f"best={result.best} criterion={result.criterion_values.get(result.best, 0.0):.6g} "
        f"heuristic={result.heuristic}"
    )
    return 0


def cmd_eval(args) -> int:
    scores_id = _load_scores(args.id, args.rule, args.temperature)
    ood = {
        Path(p).stem: _load_scores(p, args.rule, args.temperature) for p in args.ood
    }
    combo = (
        _parse_combo(args.combo)
        if args.combo
        else LayerCombination([scores_id.layer_count - 1])
    )
    report = metrics.evaluate(scores_id, ood, combo)
    io.write_report(report, args.out, format=args.format)
    print(
        f"combo={combo} avg_fpr95={report.average_fpr95:.4f} "
        f"avg_auroc={report.average_auroc:.4f}"
    )
    return 0


def cmd_sweep(args) -> int:
    scores_id = _load_scores(args.id, args.rule, args.temperature)
    ood = [_load_scores(p, args.rule, args.temperature) for p in args.ood]
    candidates = selection.enumerate_candidates(scores_id.layer_count, args.max_len)
    ranked = selection.oracle_search(scores_id, ood, candidates)
    rows = []
    for size in range(1, args.max_len + 1):
        fprs = [f for c, f in ranked if len(c) == size]
        rows.append(
            {
                "combo_size": size,
                "mean_fpr95": float(np.mean(fprs)),
                "min_fpr95": float(np.min(fprs)),
                "max_fpr95": float(np.max(fprs)),
            }
        )
    io.write_report(rows, args.out, format=args.format)
    print(f"sweep sizes=1..{args.max_len} rows={len(rows)} -> {args.out}")
    return 0


def cmd_oracle(args) -> int:
    scores_id = _load_scores(args.id, args.rule, args.temperature)
    ood = [_load_scores(p, args.rule, args.temperature) for p in args.ood]
    candidates = selection.enumerate_candidates(scores_id.layer_count, args.max_len)
    ranked = selection.oracle_search(scores_id, ood, candidates)
    rows = [{"combo": str(c), "avg_fpr95": f} for c, f in ranked]
    io.write_report(rows, args.out, format=args.format)
    if args.jaccard_k:
        d = analysis.jaccard_topk([c for c, _ in ranked], args.jaccard_k)
        jrows = [
            {f"c{j}": float(d[i, j]) for j in range(args.jaccard_k)}
            for i in range(args.jaccard_k)
        ]
        io.write_report(jrows, args.jaccard_out, format="csv")
    best_combo, best_fpr = ranked[0]
    print(f"oracle best={best_combo} avg_fpr95={best_fpr:.4f}")
    return 0


def cmd_analyze(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    wrote = []

    if args.probs:
        tensor = io.read_tensor(args.probs)
        if not isinstance(tensor, ProbTensor):
            raise ConfigError(f"{args.probs} is not a probability tensor")
        io.write_report(analysis.top1_agreement(tensor), out_dir / "top1_agreement.csv",
                        format="csv")
        io.write_report(analysis.jsd_matrix(tensor), out_dir / "jsd.csv", format="csv")
        profile = analysis.entropy_profile(tensor)
        rows = [
            {"layer": i, "mean_entropy": float(v)} for i, v in enumerate(profile)
        ]
        io.write_report(rows, out_dir / "entropy_profile.csv", format="csv")
        wrote += ["top1_agreement.csv", "jsd.csv", "entropy_profile.csv"]

    if args.acts_dir or args.embeddings:
        if args.acts_dir:
            paths = sorted(Path(args.acts_dir).glob("layer_*.csv"))
            if not paths:
                raise ConfigError(f"no layer_*.csv files in {args.acts_dir}")
            acts = [np.loadtxt(p, delimiter=",", ndmin=2) for p in paths]
        else:
            tensor = io.read_tensor(args.embeddings)
            if not isinstance(tensor, EmbeddingSet):
                raise ConfigError(f"{args.embeddings} is not an embedding set")
            acts = [tensor.image[:, l, :] for l in range(tensor.layer_count)]
        io.write_report(
            analysis.svcca_matrix(acts, var_keep=args.var_keep),
            out_dir / "svcca.csv", format="csv",
        )
        wrote.append("svcca.csv")

    if args.scatter:
        if not (args.id and args.ood):
            raise ConfigError("--scatter requires --id and --ood")
        scores_id = _load_scores(args.id, args.rule, args.temperature)
        ood = {
            Path(p).stem: _load_scores(p, args.rule, args.temperature)
            for p in args.ood
        }
        candidates = selection.enumerate_candidates(
            scores_id.layer_count, args.max_len
        )
        spec = HistogramSpec(bins=args.bins, range_mode=args.range_mode)
        table = analysis.entropy_fpr_scatter(scores_id, ood, candidates, spec)
        rows = [
            {"combo": str(c), "entropy": e, "avg_fpr95": f} for c, e, f in table
        ]
        io.write_report(rows, out_dir / "entropy_fpr.csv", format="csv")
        wrote.append("entropy_fpr.csv")

    if not wrote:
        raise ConfigError("analyze: nothing to do (pass --probs, --embeddings, "
                          "--acts-dir, or --scatter)")
    print(f"analyze wrote {', '.join(wrote)} to {out_dir}")
    return 0


def cmd_fixtures(args) -> int:
    if args.seed is None:
        raise ConfigError("fixtures require an explicit --seed")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.family == "complementary":
        id_t, ood_ts, sidecar = fixtures.make_complementary(
            args.seed, n_id=args.n_id, n_ood=args.n_ood, n_ood_sets=args.n_ood_sets
        )
    elif args.family == "redundant":
        id_t, ood_ts, sidecar = fixtures.make_redundant(
            args.seed, n_id=args.n_id, n_ood=args.n_ood, n_ood_sets=args.n_ood_sets
        )
    elif args.family == "flat":
        probs, sidecar = fixtures.make_flat(args.seed, n_samples=args.n_id)
        io.write_tensor(probs, out_dir / "probs.lftn")
        io.write_report(sidecar, out_dir / "sidecar.json", format="json")
        print(f"fixtures family=flat -> {out_dir}")
        return 0
    else:
        raise ConfigError(f"unknown fixture family {args.family!r}")

    io.write_tensor(id_t, out_dir / "id.lftn")
    for i, t in enumerate(ood_ts):
        io.write_tensor(t, out_dir / f"ood_{i}.lftn")
    io.write_report(sidecar, out_dir / "sidecar.json", format="json")
    print(f"fixtures family={args.family} -> {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oodfuse",
        description="Training-free multi-layer score fusion for OOD detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="pick the best layer combination from ID scores")
    p.add_argument("--id", required=True)
    p.add_argument("--bins", type=int, default=32)
    p.add_argument("--max-len", type=int, default=5)
    p.add_argument("--heuristic", default="entropy", choices=selection.HEURISTICS)
    p.add_argument("--range-mode", default="empirical_minmax",
                   choices=["empirical_minmax", "fixed_unit"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="selection.json")
    p.add_argument("--format", default="json", choices=["json", "csv"])
    _add_scoring_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("eval", help="evaluate one combination on ID/OOD tensors")
    p.add_argument("--id", required=True)
    p.add_argument("--ood", action="append", required=True)
    p.add_argument("--combo", default=None, help="e.g. '2,5,11' (default: final layer)")
    p.add_argument("--out", default="eval.json")
    p.add_argument("--format", default="json", choices=["json", "csv"])
    _add_scoring_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="avg FPR@95 aggregated by combination size")
    p.add_argument("--id", required=True)
    p.add_argument("--ood", action="append", required=True)
    p.add_argument("--max-len", type=int, default=5)
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--format", default="csv", choices=["json", "csv"])
    _add_scoring_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="rank all combinations by true avg FPR@95")
    p.add_argument("--id", required=True)
    p.add_argument("--ood", action="append", required=True)
    p.add_argument("--max-len", type=int, default=5)
    p.add_argument("--jaccard-k", type=int, default=None)
    p.add_argument("--jaccard-out", default="jaccard.csv")
    p.add_argument("--out", default="oracle.csv")
    p.add_argument("--format", default="csv", choices=["json", "csv"])
    _add_scoring_flags(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("analyze", help="representation diagnostics")
    p.add_argument("--probs", default=None)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--acts-dir", default=None)
    p.add_argument("--var-keep", type=float, default=0.99)
    p.add_argument("--scatter", action="store_true")
    p.add_argument("--id", default=None)
    p.add_argument("--ood", action="append", default=None)
    p.add_argument("--bins", type=int, default=32)
    p.add_argument("--max-len", type=int, default=5)
    p.add_argument("--range-mode", default="empirical_minmax",
                   choices=["empirical_minmax", "fixed_unit"])
    p.add_argument("--out-dir", default="analysis")
    _add_scoring_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fixtures", help="generate synthetic tensor files")
    p.add_argument("--family", required=True,
                   choices=["complementary", "redundant", "flat"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-id", type=int, default=1000)
    p.add_argument("--n-ood", type=int, default=1000)
    p.add_argument("--n-ood-sets", type=int, default=3)
    p.add_argument("--out-dir", default="fixtures")
    p.set_defaults(func=cmd_fixtures)

    return parser


def main(argv: List[str] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
