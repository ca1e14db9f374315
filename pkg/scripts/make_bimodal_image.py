"""Render the two-bump target image used by scenarios/bimodal.scn.

The scenario ingests a plain grayscale PGM, so the shape lives in an
image file rather than in mixture parameters; this script regenerates
that file from the canonical mixture (equal bumps at (0.3, 0.3) and
(0.7, 0.7), sigma = 0.1) whenever the resolution or layout changes.
"""

import argparse
from pathlib import Path

from swarmdens import Domain, gaussian_mixture_field
from swarmdens.fields import write_field_pgm


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument(
        "--out",
        type=Path,
        default=Path(__file__).resolve().parent.parent / "scenarios" / "bimodal.pgm",
    )
    ap.add_argument("--nx", type=int, default=256)
    ap.add_argument("--sigma", type=float, default=0.1)
    args = ap.parse_args()

    # floor 0: the image carries the raw bumps; the scenario's
    # desired.floor re-applies the pedestal after ingestion
    field = gaussian_mixture_field(
        Domain(),
        [(0.3, 0.3), (0.7, 0.7)],
        args.sigma,
        nx=args.nx,
        floor=0.0,
    )
    write_field_pgm(field, args.out)
    print(f"wrote {args.out} ({args.nx}x{args.nx}, sigma={args.sigma})")


if __name__ == "__main__":
    main()
