"""Command-line entry point.

    fvec-export export --extractor vggish --in wavs/ --out features/

Exit codes: 0 success (including an empty input directory), 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .export import export_features
from .extractors import EXTRACTORS, get_spec


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fvec-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="embed WAV files and write FVEC features")
    p.add_argument("--extractor", required=True, choices=sorted(EXTRACTORS))
    p.add_argument("--in", dest="in_dir", required=True, help="directory of WAV files")
    p.add_argument("--out", dest="out_dir", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING)
    in_dir = Path(args.in_dir)
    if not in_dir.is_dir():
        print(f"error: input directory {in_dir} does not exist", file=sys.stderr)
        return 2
    wavs = sorted(in_dir.rglob("*.wav"))
    result = export_features(wavs, get_spec(args.extractor), args.out_dir)
    print(f"exported {len(result.exported)} recordings "
          f"({len(result.skipped)} skipped) to {args.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
