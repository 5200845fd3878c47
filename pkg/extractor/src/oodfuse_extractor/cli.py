"""Command-line entry point: run an extraction job described by a JSON file.

Exit codes: 0 success, 2 config error, 3 malformed input, 4 validation
failure, 5 transient failure worth retrying.
"""

from __future__ import annotations

import argparse
import sys
from typing import List

from oodfuse.errors import ConfigError, DomainError, FormatError, ValidationError

from .errors import RetriableError
from .extract import extract
from .job import load_job

EXIT_CONFIG = 2
EXIT_FORMAT = 3
EXIT_VALIDATION = 4
EXIT_RETRIABLE = 5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oodfuse-extract",
        description="Extract per-layer logits from a pretrained encoder "
                    "into oodfuse tensor files",
    )
    parser.add_argument("--job", required=True, help="path to a JSON job file")
    parser.add_argument("--out-dir", default="extracted")
    return parser


def main(argv: List[str] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = load_job(args.job)
        result = extract(job, args.out_dir)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RetriableError as exc:
        print(f"retriable error: {exc}", file=sys.stderr)
        return EXIT_RETRIABLE
    skipped = f" skipped={len(result.skipped)}" if result.skipped else ""
    print(
        f"extracted {len(result.sample_ids)} samples -> "
        f"{result.paths['logits']}{skipped}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
