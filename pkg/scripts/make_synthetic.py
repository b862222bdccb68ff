"""Regenerate the bundled three-asset hourly dataset."""

import argparse

from twosided.synthetic import bundled_dir, make_synth3


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(bundled_dir() / "synth3"))
    args = ap.parse_args()
    for p in make_synth3(args.out):
        print(p)


if __name__ == "__main__":
    main()
