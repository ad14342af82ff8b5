"""Command-line interface.

Subcommands cover the full pipeline: build an evaluation game from
preference data, solve it, rate actions, run the clone-injection and
enumeration experiments, and drive the skill-world simulation.  Every
randomized command takes an explicit ``--seed`` (default 0, never
wall-clock), all plot-ready outputs are CSV/JSON, and each run writes a
manifest with input hashes so results can be reproduced bit-exactly.
"""

import argparse
import csv
import hashlib
import json
import sys
import time

import numpy as np

from . import games, kernels, koth, ratings, skillsim, solvers
from .errors import ConvergenceError, IncompleteDataError, ParameterError

CLONE_TEST_METHODS = ("elo", "ne", "cce", "ne-shannon", "cce-shannon")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path, command, args, inputs, outputs, t0, extra=None):
    manifest = {
        "command": command,
        "args": {k: v for k, v in sorted(args.items()) if k not in ("func",)},
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "wall_time_s": time.perf_counter() - t0,
    }
    if extra:
        manifest.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)


def _load_koth(path) -> koth.KOTHGame:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    game = games.game_from_dict(data)
    if game.num_players != 3 or game.action_labels[1] != game.action_labels[2]:
        raise ParameterError("expected a prompt/king/rebel game")
    sources = data.get("clone_sources") or [None] * game.shape[0]
    return koth.KOTHGame(game=game, clone_sources=tuple(sources))


def _save_koth(kg: koth.KOTHGame, path) -> None:
    data = games.game_to_dict(kg.game)
    data["clone_sources"] = list(kg.clone_sources)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh)


def _targets_for(game: games.Game, entropy: str, variance: float, mode: str):
    if entropy == "affinity":
        return kernels.affinity_targets(game, variance=variance, mode=mode)
    if entropy == "shannon":
        return solvers.uniform_targets(game)
    raise ParameterError(f"unknown entropy {entropy!r}")


def cmd_build(args) -> int:
    t0 = time.perf_counter()
    if args.prefs:
        records = read = koth.read_preference_csv(args.prefs)
        kg = koth.build_koth(records)
        report = {
            "prompts": len(kg.prompts),
            "models": len(kg.models),
            "cells": len(kg.prompts) * len(kg.models) * (len(kg.models) - 1),
            "samples": len(read),
        }
        source = args.prefs
    else:
        kg = _load_koth(args.game)
        report = {
            "prompts": len(kg.prompts),
            "models": len(kg.models),
            "cells": len(kg.prompts) * len(kg.models) * (len(kg.models) - 1),
            "samples": None,
        }
        source = args.game
    _save_koth(kg, args.out)
    report_path = str(args.out) + ".report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    _write_manifest(
        str(args.out) + ".manifest.json",
        "build",
        vars(args),
        [source],
        [args.out, report_path],
        t0,
    )
    return 0


def _solve(game, method, entropy, variance, mode, epsilon, max_steps, learning_rate):
    targets = _targets_for(game, entropy, variance, mode)
    if method == "ne":
        kwargs = {"targets": targets}
        if epsilon is not None:
            kwargs["epsilon_ne"] = epsilon
        if max_steps is not None:
            kwargs["max_steps"] = max_steps
        if learning_rate is not None:
            kwargs["learning_rate"] = learning_rate
        return solvers.solve_lle(game, solvers.QREConfig(**kwargs))
    kwargs = {"target_log_joint": solvers.target_log_joint(targets)}
    if epsilon is not None:
        kwargs["epsilon_cce"] = epsilon
    if max_steps is not None:
        kwargs["max_steps"] = max_steps
    if learning_rate is not None:
        kwargs["learning_rate"] = learning_rate
    return solvers.solve_mre_cce(game, solvers.CCEConfig(**kwargs))


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    game = games.load_game(args.game)
    result = _solve(
        game,
        args.method,
        args.entropy,
        args.variance,
        args.mode,
        args.epsilon,
        args.max_steps,
        args.learning_rate,
    )
    result.seed = args.seed
    result.save(args.out)
    _write_manifest(
        str(args.out) + ".manifest.json",
        "solve",
        vars(args),
        [args.game],
        [args.out],
        t0,
        extra={"exploitability": result.exploitability, "steps": result.trace[-1].step},
    )
    return 0


def cmd_rate(args) -> int:
    t0 = time.perf_counter()
    game = games.load_game(args.game)
    inputs = [args.game]
    if args.method == "elo":
        kg = _load_koth(args.game)
        w = koth.prompt_average_win_matrix(kg)
        r = ratings.elo_ratings(w)
        ranks = ratings.ranks_with_ties(r, kg.models)
        report_dict = {
            "method": "elo",
            "players": ["king"],
            "tables": [
                {
                    "player": "king",
                    "labels": list(kg.models),
                    "ratings": r.tolist(),
                    "masses": [None] * len(kg.models),
                    "ranks": ranks.tolist(),
                }
            ],
        }
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report_dict, fh)
        csv_path = str(args.out) + ".csv"
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["player", "label", "rating", "mass", "rank"])
            for lbl, rating, rank in zip(kg.models, r, ranks):
                writer.writerow(["king", lbl, repr(float(rating)), "", int(rank)])
        outputs = [args.out, csv_path]
    else:
        with open(args.equilibrium, encoding="utf-8") as fh:
            eq = json.load(fh)
        inputs.append(args.equilibrium)
        profile = solvers.profile_from_dict(eq)
        report = ratings.rate(game, profile, eq.get("method", "eq").upper())
        report.save_json(args.out)
        csv_path = str(args.out) + ".csv"
        report.save_csv(csv_path)
        outputs = [args.out, csv_path]
    _write_manifest(
        str(args.out) + ".manifest.json", "rate", vars(args), inputs, outputs, t0
    )
    return 0


def _rank_table(kg: koth.KOTHGame, method: str, seed: int):
    """Model ranking plus full rating report for one method tag."""
    if method == "elo":
        w = koth.prompt_average_win_matrix(kg)
        r = ratings.elo_ratings(w)
        ranks = ratings.ranks_with_ties(r, kg.models)
        order = sorted(kg.models, key=lambda s: (-r[kg.models.index(s)], s))
        return order, {"king": (list(kg.models), r.tolist(), ranks.tolist())}
    entropy = "shannon" if method.endswith("shannon") else "affinity"
    base = "ne" if method.startswith("ne") else "cce"
    result = _solve(kg.game, base, entropy, kernels.DEFAULT_VARIANCE, "joint", None, None, None)
    report = ratings.rate(kg.game, result.profile, method.upper())
    king = report.player_index("king")
    order = report.ranking(king)
    tables = {
        report.players[i]: (
            list(report.labels[i]),
            report.ratings[i].tolist(),
            report.ranks[i].tolist(),
        )
        for i in range(3)
    }
    return order, tables


def cmd_clone_test(args) -> int:
    t0 = time.perf_counter()
    kg = _load_koth(args.game)
    if args.target not in kg.models:
        raise ParameterError(f"target model {args.target!r} not in game")
    counts = [int(c) for c in args.counts.split(",")]
    outputs = []
    summary = {"target": args.target, "lambda": args.lam, "noise": args.noise, "rows": []}
    for count in counts:
        if count > 0:
            idx = koth.adversarial_prompt_sampler(
                kg, args.target, lam=args.lam, count=count, seed=args.seed
            )
            injected = koth.inject_clones(kg, idx, noise_halfwidth=args.noise, seed=args.seed)
        else:
            injected = kg
        for method in CLONE_TEST_METHODS:
            order, tables = _rank_table(injected, method, args.seed)
            path = f"{args.out_dir}/ranking_{method}_{count}.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["player", "label", "rating", "rank", "clone_source"])
                for player, (labels, rats, ranks) in tables.items():
                    for j, lbl in enumerate(labels):
                        source = ""
                        if player == "prompt" and injected.clone_sources[j] is not None:
                            source = injected.prompts[injected.clone_sources[j]]
                        writer.writerow([player, lbl, repr(float(rats[j])), ranks[j], source])
            outputs.append(path)
            summary["rows"].append(
                {
                    "count": count,
                    "method": method,
                    "ranking": order,
                    "target_rank": order.index(args.target) + 1,
                }
            )
    summary_path = f"{args.out_dir}/clone_test_summary.json"
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    outputs.append(summary_path)
    _write_manifest(
        f"{args.out_dir}/clone_test.manifest.json",
        "clone-test",
        vars(args),
        [args.game],
        outputs,
        t0,
    )
    return 0


def cmd_decompose(args) -> int:
    t0 = time.perf_counter()
    game = games.load_game(args.game)
    with open(args.equilibrium, encoding="utf-8") as fh:
        eq = json.load(fh)
    profile = solvers.profile_from_dict(eq)
    grouping = None
    inputs = [args.game, args.equilibrium]
    if args.families:
        with open(args.families, encoding="utf-8") as fh:
            grouping = json.load(fh)
        inputs.append(args.families)
    action = game.action_labels[args.player].index(args.action)
    table = ratings.decompose(
        game, profile, args.player, action, args.co_player, grouping
    )
    table.save_csv(args.out)
    _write_manifest(
        str(args.out) + ".manifest.json", "decompose", vars(args), inputs, [args.out], t0
    )
    return 0


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    methods = raw.pop("methods", None) or [raw.get("rating_method", "elo")]
    raw.pop("rating_method", None)
    outputs = []
    for method in methods:
        config = skillsim.SimConfig(rating_method=method, **raw)
        traj = skillsim.run_simulation(config)
        json_path = f"{args.out_dir}/trajectory_{method}.json"
        traj.save(json_path)
        rows = skillsim.entropy_trace(traj)
        csv_path = f"{args.out_dir}/trajectory_{method}.csv"
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["t", "prompts", "models", "H_p", "H_m", "method", "trial", "seed"]
            )
            writer.writeheader()
            writer.writerows(rows)
        outputs += [json_path, csv_path]
    _write_manifest(
        f"{args.out_dir}/simulate.manifest.json",
        "simulate",
        vars(args),
        [args.config],
        outputs,
        t0,
    )
    return 0


def cmd_enumerate(args) -> int:
    t0 = time.perf_counter()
    game = games.load_game(args.game)
    enum = solvers.enumerate_nes(
        game, args.count, epsilon=args.epsilon, seed=args.seed
    )
    beliefs = solvers.risk_dominance_beliefs(game, enum.profiles)
    bundle = {
        "requested": enum.requested,
        "complete": enum.complete,
        "min_pairwise_gap": enum.min_pairwise_gap,
        "equilibria": [
            {
                "marginals": [m.tolist() for m in prof.marginals],
                "exploitability": enum.exploitabilities[i],
                "ratings": enum.rating_vectors[i].tolist(),
            }
            for i, prof in enumerate(enum.profiles)
        ],
        "belief_priors": [p.tolist() for p in beliefs.priors],
        "payoff_table": beliefs.payoff_table.tolist(),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(bundle, fh, indent=2)
    table_path = str(args.out) + ".risk.csv"
    with open(table_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["equilibrium"] + [f"payoff_player_{i}" for i in range(game.num_players)]
        )
        for k, row in enumerate(beliefs.payoff_table):
            writer.writerow([k] + [repr(float(v)) for v in row])
    _write_manifest(
        str(args.out) + ".manifest.json",
        "enumerate",
        vars(args),
        [args.game],
        [args.out, table_path],
        t0,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eqrate", description="game-theoretic rating engine"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a game from preference CSV or game JSON")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--prefs", help="preference CSV (prompt_id,model_a,model_b,score)")
    group.add_argument("--game", help="existing game JSON to validate and re-emit")
    p.add_argument("--out", required=True, help="output game JSON path")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("solve", help="solve a game for an equilibrium")
    p.add_argument("--game", required=True)
    p.add_argument("--method", choices=["ne", "cce"], default="ne")
    p.add_argument("--entropy", choices=["affinity", "shannon"], default="affinity")
    p.add_argument("--variance", type=float, default=kernels.DEFAULT_VARIANCE,
                   help="RBF kernel denominator (2*sigma)^2")
    p.add_argument("--mode", choices=["joint", "factorized"], default="joint",
                   help="dissimilarity closed form")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("rate", help="rate actions against an equilibrium or by Elo")
    p.add_argument("--game", required=True)
    p.add_argument("--equilibrium", help="equilibrium JSON from `solve`")
    p.add_argument("--method", choices=["eq", "elo"], default="eq")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("clone-test", help="clone-invariance experiment")
    p.add_argument("--game", required=True)
    p.add_argument("--target", required=True, help="model whose rank is attacked")
    p.add_argument("--lambda", dest="lam", type=float, default=10.0)
    p.add_argument("--counts", default="0,250,500", help="comma-separated clone counts")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_clone_test)

    p = sub.add_parser("decompose", help="marginal rating contributions")
    p.add_argument("--game", required=True)
    p.add_argument("--equilibrium", required=True)
    p.add_argument("--player", type=int, required=True)
    p.add_argument("--action", required=True, help="label of the rated action")
    p.add_argument("--co-player", dest="co_player", type=int, required=True)
    p.add_argument("--families", help="JSON mapping co-action label -> family")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("simulate", help="skill-world simulation")
    p.add_argument("--config", required=True, help="SimConfig JSON; may list methods")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("enumerate", help="enumerate equilibria + risk dominance")
    p.add_argument("--game", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_enumerate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "rate" and args.method == "eq" and not args.equilibrium:
        parser.error("rate: --equilibrium is required unless --method elo")
    try:
        return args.func(args)
    except IncompleteDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for key in exc.missing[:20]:
            print(f"  missing: {key}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ParameterError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
