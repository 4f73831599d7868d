import argparse
import sys

from .extract import ExtractorSpec, extract
from .models import available_models


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="aeval-extract",
        description="Write AEMB embedding/probability files for a corpus.")
    parser.add_argument("--manifest", required=True,
                        help="Corpus manifest JSON.")
    parser.add_argument("--condition", default="reference",
                        help="'reference' or a manifest condition name.")
    parser.add_argument("--model", default="builtin:spectral-stats",
                        help=f"Model identifier; built in: {available_models()}.")
    parser.add_argument("--layer", default="stats",
                        help="Layer selector passed to the model.")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--out", required=True, help="Output AEMB path.")
    args = parser.parse_args(argv)
    spec = ExtractorSpec(model=args.model, layer=args.layer,
                         batch_size=args.batch_size)
    try:
        extract(args.manifest, args.condition, spec, args.out)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
