"""Observed dynamic range of a hazy frame as a function of transmission.

Prints DR_obs over a transmission grid for a few scene contrasts, and the
t at which the frame drops below 8-bit range (DR < 255) when applicable.
"""

import argparse

import numpy as np

from evdehaze.haze import dr_obs_vectorized


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--j-min", type=float, default=0.01)
    ap.add_argument("--airlight", type=float, default=0.9)
    ap.add_argument("--contrasts", default="10,100,1000,10000")
    ap.add_argument("--points", type=int, default=11)
    args = ap.parse_args()

    ts = np.linspace(0.05, 1.0, args.points)
    ks = [float(k) for k in args.contrasts.split(",")]
    print("t      " + " ".join(f"k={k:<9g}" for k in ks))
    table = np.stack([dr_obs_vectorized(k, args.j_min, ts, args.airlight) for k in ks], axis=1)
    for t, row in zip(ts, table):
        print(f"{t:5.2f}  " + " ".join(f"{v:<11.2f}" for v in row))
    for k, col in zip(ks, table.T):
        below = ts[col < 255]
        if k >= 255 and below.size:
            print(f"k={k:g}: DR_obs < 255 for t <= {below.max():.2f}")


if __name__ == "__main__":
    main()
