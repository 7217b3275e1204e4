#!/usr/bin/env python3
"""
Synthetic Price Generator

Writes a geometric-Brownian-motion price series as a one-column CSV that the
trading environment reads through env.trading.prices_csv.

Usage:
    python scripts/gen_prices.py <output_csv> [--n N] [--drift DRIFT] [--vol VOL] [--p0 P0] [--seed SEED]

Example:
    python scripts/gen_prices.py data/gbm_prices.csv --n 5000 --vol 0.02
    python scripts/gen_prices.py data/flat.csv --vol 0
"""

import argparse
import os
import sys

# Add the parent directory to the path to import vola modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from vola.artifacts import config_hash, write_csv
from vola.envs.prices import gen_gbm_prices
from vola.errors import VolaError


def main():
    parser = argparse.ArgumentParser(
        description='Generate a GBM price series CSV',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python scripts/gen_prices.py data/gbm_prices.csv
  python scripts/gen_prices.py data/gbm_prices.csv --n 5000 --drift 0.0001 --vol 0.02 --seed 7
        """
    )

    parser.add_argument('output', type=str, help='Output CSV path')
    parser.add_argument('--n', type=int, default=2000, help='Number of prices (default: 2000)')
    parser.add_argument('--drift', type=float, default=0.0, help='Log drift per step (default: 0.0)')
    parser.add_argument('--vol', type=float, default=0.01, help='Volatility per sqrt(step) (default: 0.01)')
    parser.add_argument('--p0', type=float, default=100.0, help='First price (default: 100.0)')
    parser.add_argument('--seed', type=int, default=0, help='Random seed (default: 0)')

    args = parser.parse_args()

    print("📈 GBM Price Generator")
    print("=" * 60)
    print(f"📄 Output: {args.output}")
    print(f"🔢 Prices: {args.n:,}  drift={args.drift}  vol={args.vol}  p0={args.p0}  seed={args.seed}")

    try:
        series = gen_gbm_prices(args.seed, args.n, args.drift, args.vol, args.p0)
        params = {"n": args.n, "drift": args.drift, "vol": args.vol, "p0": args.p0, "seed": args.seed}
        path = write_csv(series.to_frame(), args.output, {"seed": args.seed, "config_hash": config_hash(params)})
    except VolaError as e:
        print(f"❌ Error: {e}")
        sys.exit(e.exit_code)

    prices = series.prices
    print(f"✅ Wrote {len(series):,} prices to {path}")
    print(f"   📊 min={prices.min():.4f}  max={prices.max():.4f}  last={prices[-1]:.4f}")


if __name__ == "__main__":
    main()
