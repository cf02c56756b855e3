#!/usr/bin/env python3
"""Emit naive Bayes and binary RBM dimension tables as CSV.

Usage: golden_tables.py [--max-visible N] [--max-hidden M] [--seed S] [--out DIR]

Without --out both tables go to stdout, separated by a blank line.
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
import sys

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from dimension import (  # noqa: E402
    expected_dimension,
    jacobian_rank,
    mixture_dimension,
    mixture_dimension_closed_form,
)
from rbm_settings import Settings, load_env  # noqa: E402
from report_store import ReportStore, csv_bytes  # noqa: E402
from statespace import StateSpace  # noqa: E402


log = logging.getLogger(__name__)

NAIVE_BAYES_HEADERS = ["n", "k", "parameters", "ambient", "numerical", "closed_form"]
BINARY_RBM_HEADERS = ["n", "m", "expected", "jacobian", "uncertain"]


def naive_bayes_rows(max_visible: int, max_components: int, samples: int, seed: int) -> list[list[object]]:
    rows = []
    for n in range(2, max_visible + 1):
        space = StateSpace.binary(n)
        for k in range(1, max_components + 1):
            closed = mixture_dimension_closed_form(space, k)
            rows.append([
                n,
                k,
                k * (n + 1) - 1,
                space.size - 1,
                mixture_dimension(space, k, samples, seed),
                "" if closed is None else closed,
            ])
    return rows


def binary_rbm_rows(max_visible: int, max_hidden: int, settings: Settings, seed: int) -> list[list[object]]:
    rows = []
    for n in range(2, max_visible + 1):
        visible = StateSpace.binary(n)
        for m in range(1, max_hidden + 1):
            hidden = StateSpace.binary(m)
            rank = jacobian_rank(visible, hidden, settings.jacobian_samples, seed, settings.exact_cap)
            rows.append([n, m, expected_dimension(visible, hidden), rank.rank, rank.uncertain])
    return rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Dimension tables for plotting")
    parser.add_argument("--max-visible", type=int, default=5)
    parser.add_argument("--max-hidden", type=int, default=4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, help="directory for naive_bayes.csv and binary_rbm.csv")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(format="%(asctime)s %(levelname)s %(message)s", level=logging.INFO)
    load_env()
    settings = Settings.from_env()
    if args.max_visible < 2 or args.max_hidden < 1:
        print("need --max-visible >= 2 and --max-hidden >= 1", file=sys.stderr)
        return 2

    tables = {
        "naive_bayes.csv": csv_bytes(
            NAIVE_BAYES_HEADERS,
            naive_bayes_rows(args.max_visible, 2 ** args.max_hidden, settings.jacobian_samples, args.seed),
        ),
        "binary_rbm.csv": csv_bytes(
            BINARY_RBM_HEADERS,
            binary_rbm_rows(args.max_visible, args.max_hidden, settings, args.seed),
        ),
    }
    if args.out:
        store = ReportStore(args.out)
        for name, payload in tables.items():
            log.info("wrote %s", store.write_bytes(name, payload))
    else:
        sys.stdout.write("\n".join(payload.decode("utf-8") for payload in tables.values()))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
