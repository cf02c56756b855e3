"""Command-line front end for the discrete RBM analyses.

Every run prints (or writes with --out) one report embedding the run
configuration and library version. Identical arguments give identical bytes.

Exit codes: 0 success, 2 usage or input error, 3 instance too large for
exact evaluation, 4 search budget exhausted without a decision.
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass, field, replace
import json
import logging
from pathlib import Path
import sys
from typing import Any, Callable

from coding import Code, gilbert_varshamov, max_code_size, min_covering_size
from dimension import TABLE_HEADERS, DimensionChainError, dimension_certificate, expected_dimension
from divergence import (
    HypothesisError,
    empirical_max_divergence,
    kl_upper_bound,
    universality_verdict,
)
from geometry import CodeDistanceError, find_mode_certificate, inference_function, modes, strong_modes
from models import DiscreteRBM, ParameterError, rbm_marginal
from rbm_settings import VERSION, Settings, load_env
from report_store import ReportStore, csv_bytes, dumps, render_table
from statespace import InstanceTooLargeError, StateSpace, StateSpaceError, ball_volume, parse_cards
from tropical import tropical_dimension


log = logging.getLogger(__name__)

FORMATS = ("json", "csv", "text")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TOO_LARGE = 3
EXIT_UNDETERMINED = 4


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    visible: StateSpace | None
    hidden: StateSpace | None
    seed: int
    output_format: str
    budget: int | None = None
    out: str | None = None
    options: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "subcommand": self.subcommand,
            "visible": None if self.visible is None else self.visible.to_json(),
            "hidden": None if self.hidden is None else self.hidden.to_json(),
            "seed": self.seed,
            "format": self.output_format,
            "budget": self.budget,
            "out": self.out,
            "options": dict(sorted(self.options.items())),
        }


@dataclass(frozen=True)
class Outcome:
    result: dict[str, Any]
    headers: list[str]
    rows: list[list[object]]
    exit_code: int = EXIT_OK


def _cards(text: str) -> StateSpace:
    try:
        return parse_cards(text)
    except StateSpaceError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _cards_text(space: StateSpace) -> str:
    return ",".join(map(str, space.cards))


def _read_json(path: str) -> Any:
    return json.loads(Path(path).read_text())


def _broken_chain(config: RunConfig, message: str) -> Outcome:
    expected = expected_dimension(config.visible, config.hidden)
    result = {
        "visible": config.visible.to_json(),
        "hidden": config.hidden.to_json(),
        "expected": expected,
        "verdict": "undetermined",
        "trace": [f"rank chain broken: {message}"],
    }
    row = [_cards_text(config.visible), _cards_text(config.hidden), expected, "", "", "", "undetermined"]
    return Outcome(result, list(TABLE_HEADERS), [row], EXIT_UNDETERMINED)


def cmd_dim(config: RunConfig, settings: Settings) -> Outcome:
    try:
        report = dimension_certificate(config.visible, config.hidden, settings, config.seed)
    except DimensionChainError as exc:
        log.error("inconsistent dimension bounds: %s", exc)
        return _broken_chain(config, str(exc))
    code = EXIT_UNDETERMINED if report.verdict == "undetermined" else EXIT_OK
    return Outcome(report.to_json(), list(TABLE_HEADERS), [report.table_row()], code)


def cmd_universal(config: RunConfig, settings: Settings) -> Outcome:
    visible, hidden = config.visible, config.hidden
    verdict = universality_verdict(visible, hidden)
    bound = kl_upper_bound(visible, hidden)
    result = {"universality": verdict.to_json(), "kl_bound": bound.to_json()}
    empirical_value: object = ""
    if config.options.get("empirical"):
        empirical = empirical_max_divergence(
            visible,
            hidden,
            targets=config.options["targets"],
            seed=config.seed,
            settings=settings,
        )
        result["empirical"] = empirical.to_json()
        empirical_value = empirical.value
    row = [_cards_text(visible), _cards_text(hidden), verdict.verdict, bound.value, empirical_value]
    code = EXIT_UNDETERMINED if verdict.verdict == "unknown" else EXIT_OK
    return Outcome(result, ["visible", "hidden", "verdict", "kl_bound", "empirical"], [row], code)


def cmd_tropical(config: RunConfig, settings: Settings) -> Outcome:
    found = tropical_dimension(
        config.visible,
        config.hidden,
        budget=settings.search_budget,
        seed=config.seed,
        node_budget=min(settings.code_search_nodes, 200_000),
        cap=settings.exact_cap,
    )
    row = [
        _cards_text(config.visible),
        _cards_text(config.hidden),
        found.value,
        found.upper_bound,
        found.label,
        found.family,
    ]
    headers = ["visible", "hidden", "tropical", "upper_bound", "label", "family"]
    return Outcome(found.to_json(), headers, [row])


def cmd_modes(config: RunConfig, settings: Settings) -> Outcome:
    code = Code.from_json(_read_json(config.options["code"]), config.visible)
    certificate = find_mode_certificate(
        config.visible, config.hidden, code, settings.certificate_restarts, config.seed
    )
    headers = ["visible", "hidden", "code_size", "min_distance", "found"]
    row = [
        _cards_text(config.visible),
        _cards_text(config.hidden),
        len(code),
        code.min_distance,
        certificate is not None,
    ]
    result = {
        "code": code.to_json(),
        "found": certificate is not None,
        "certificate": None if certificate is None else certificate.to_json(),
        "restarts": settings.certificate_restarts,
    }
    return Outcome(result, headers, [row], EXIT_OK if certificate else EXIT_UNDETERMINED)


def cmd_code(config: RunConfig, settings: Settings) -> Outcome:
    space = config.visible
    distance = config.options["distance"]
    radius = config.options["radius"]
    packing = max_code_size(space, distance, settings.code_search_nodes)
    covering = min_covering_size(space, radius, settings.code_search_nodes)
    result: dict[str, Any] = {
        "space": space.to_json(),
        "max_code": {"distance": distance, **packing.to_json()},
        "min_covering": {"radius": radius, **covering.to_json()},
        "ball_volume": ball_volume(space, radius),
    }
    if len(set(space.cards)) == 1 and 1 <= distance <= space.n and space.cards[0] >= 2:
        result["gilbert_varshamov"] = gilbert_varshamov(space.cards[0], space.n, distance)
    headers = ["space", "query", "parameter", "value", "exact", "method"]
    rows = [
        [_cards_text(space), "max_code_size", distance, packing.value, packing.exact, packing.method],
        [_cards_text(space), "min_covering_size", radius, covering.value, covering.exact, covering.method],
    ]
    decided = packing.exact and covering.exact
    return Outcome(result, headers, rows, EXIT_OK if decided else EXIT_UNDETERMINED)


def cmd_eval(config: RunConfig, settings: Settings) -> Outcome:
    rbm = DiscreteRBM.from_json(_read_json(config.options["model"]))
    marginal = rbm_marginal(rbm, settings.exact_cap)
    strong = set(strong_modes(marginal))
    local = set(modes(marginal))
    rows = []
    states = []
    for index, label in enumerate(rbm.visible.labels()):
        x = rbm.visible.state_at(index)
        inferred = [rbm.hidden.label(y) for y in inference_function(rbm, x)]
        probability = float(marginal.probs[index])
        rows.append([label, probability, x in local, x in strong, " ".join(inferred)])
        states.append({
            "state": list(x),
            "probability": probability,
            "mode": x in local,
            "strong_mode": x in strong,
            "inference": inferred,
        })
    result = {
        "visible": rbm.visible.to_json(),
        "hidden": rbm.hidden.to_json(),
        "states": states,
        "modes": [list(x) for x in sorted(local)],
        "strong_modes": [list(x) for x in sorted(strong)],
    }
    return Outcome(result, ["state", "probability", "mode", "strong_mode", "inference"], rows)


COMMANDS: dict[str, Callable[[RunConfig, Settings], Outcome]] = {
    "dim": cmd_dim,
    "universal": cmd_universal,
    "tropical": cmd_tropical,
    "modes": cmd_modes,
    "code": cmd_code,
    "eval": cmd_eval,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=FORMATS, default="json")
    common.add_argument(
        "--budget",
        type=int,
        help="slicings for dim/tropical, certificate restarts for modes, "
        "optimizer restarts for universal --empirical, search nodes for code",
    )
    common.add_argument("--out", help="write the report to this file instead of stdout")
    common.add_argument("--verbose", action="store_true")

    visible = argparse.ArgumentParser(add_help=False)
    visible.add_argument("--visible", type=_cards, required=True, help="comma-separated cardinalities")
    hidden = argparse.ArgumentParser(add_help=False)
    hidden.add_argument("--hidden", type=_cards, required=True, help="comma-separated cardinalities")

    parser = argparse.ArgumentParser(description="Discrete restricted Boltzmann machine analyses")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    subparsers.add_parser(
        "dim", parents=[common, visible, hidden], help="dimension certificate and verdict"
    )
    universal = subparsers.add_parser(
        "universal", parents=[common, visible, hidden], help="universality and divergence bound"
    )
    universal.add_argument("--empirical", action="store_true", help="fit targets numerically")
    universal.add_argument("--targets", type=int, default=20, help="random targets for --empirical")
    subparsers.add_parser(
        "tropical", parents=[common, visible, hidden], help="tropical dimension search"
    )
    modes_parser = subparsers.add_parser(
        "modes", parents=[common, visible, hidden], help="strong-mode certificate for a code"
    )
    modes_parser.add_argument("--code", required=True, help="JSON code file")
    code = subparsers.add_parser("code", parents=[common, visible], help="coding-theory queries")
    code.add_argument("--distance", type=int, default=2)
    code.add_argument("--radius", type=int, default=1)
    evaluate = subparsers.add_parser("eval", parents=[common], help="evaluate a model JSON file")
    evaluate.add_argument("--model", required=True, help="JSON model file")
    return parser


def run_config(args: argparse.Namespace) -> RunConfig:
    options: dict[str, Any] = {}
    if args.subcommand == "universal":
        options = {"empirical": args.empirical, "targets": args.targets}
    elif args.subcommand == "modes":
        options = {"code": args.code}
    elif args.subcommand == "code":
        options = {"distance": args.distance, "radius": args.radius}
    elif args.subcommand == "eval":
        options = {"model": args.model}
    return RunConfig(
        subcommand=args.subcommand,
        visible=getattr(args, "visible", None),
        hidden=getattr(args, "hidden", None),
        seed=args.seed,
        output_format=args.format,
        budget=args.budget,
        out=args.out,
        options=options,
    )


def effective_settings(config: RunConfig, settings: Settings) -> Settings:
    if config.budget is None:
        return settings
    if config.subcommand in ("dim", "tropical"):
        return replace(settings, search_budget=config.budget)
    if config.subcommand == "modes":
        return replace(settings, certificate_restarts=config.budget)
    if config.subcommand == "universal":
        return replace(settings, optimizer_restarts=config.budget)
    if config.subcommand == "code":
        return replace(settings, code_search_nodes=config.budget)
    return settings


def render(config: RunConfig, outcome: Outcome) -> bytes:
    if config.output_format == "csv":
        return csv_bytes(outcome.headers, outcome.rows)
    if config.output_format == "text":
        return (render_table(outcome.headers, outcome.rows) + "\n").encode("utf-8")
    report = {"config": config.to_json(), "version": VERSION, "result": outcome.result}
    return dumps(report).encode("utf-8")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        format="%(asctime)s %(levelname)s %(message)s",
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stderr,
    )
    load_env()
    config = run_config(args)
    try:
        settings = effective_settings(config, Settings.from_env())
        outcome = COMMANDS[config.subcommand](config, settings)
    except InstanceTooLargeError as exc:
        print(f"instance too large: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE
    except (
        StateSpaceError,
        ParameterError,
        HypothesisError,
        CodeDistanceError,
        OSError,
        KeyError,
        ValueError,
    ) as exc:
        print(f"{config.subcommand}: {exc}", file=sys.stderr)
        return EXIT_USAGE

    payload = render(config, outcome)
    if config.out:
        destination = Path(config.out)
        ReportStore(destination.parent).write_bytes(destination.name, payload)
        log.info("wrote %s report to %s", config.subcommand, destination)
    else:
        sys.stdout.write(payload.decode("utf-8"))
    return outcome.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
