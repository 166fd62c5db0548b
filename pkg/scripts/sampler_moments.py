"""Output moments of DDIM/DDPM driven by the exact Gaussian denoiser.

Compares Monte-Carlo moments against the closed-form affine propagation for
a range of step counts. Data are N(mu, sigma2); chains start from N(0, 1).
"""

import argparse

import numpy as np

from evdehaze.diffusion import ddim_sample, ddpm_sample, gaussian_oracle_denoiser, make_schedule, sub_schedule


def exact_moments(sched, kind, steps, mu, s2):
    m, v = 0.0, 1.0
    taus = sub_schedule(sched.T, steps)
    for i, t in enumerate(taus):
        tp = int(taus[i + 1]) if i + 1 < len(taus) else 0
        a, ap = float(sched.abar(t)), float(sched.abar(tp))
        g = np.sqrt(a) * s2 / (a * s2 + 1 - a)
        cx, bx = g, mu - g * np.sqrt(a) * mu
        ce, be = (1 - np.sqrt(a) * cx) / np.sqrt(1 - a), -np.sqrt(a) * bx / np.sqrt(1 - a)
        if kind == "ddim":
            c, b, nv = np.sqrt(ap) * cx + np.sqrt(1 - ap) * ce, np.sqrt(ap) * bx + np.sqrt(1 - ap) * be, 0.0
        else:
            beff = 1 - a / ap
            k1, k2 = np.sqrt(ap) * beff / (1 - a), np.sqrt(1 - beff) * (1 - ap) / (1 - a)
            c, b = k1 * cx + k2, k1 * bx
            nv = (1 - ap) / (1 - a) * beff if tp > 0 else 0.0
        m, v = c * m + b, c * c * v + nv
    return m, v


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mu", type=float, default=2.0)
    ap.add_argument("--sigma2", type=float, default=0.25)
    ap.add_argument("--T", type=int, default=1000)
    ap.add_argument("--steps", default="5,15,50,200,1000")
    ap.add_argument("--chains", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sched = make_schedule(args.T)
    den = gaussian_oracle_denoiser(args.mu, args.sigma2, sched)
    print(f"{'sampler':<8} {'steps':>5} {'mc_mean':>8} {'mc_var':>8} {'exact_var':>9} {'var_err':>8}")
    for kind in ("ddim", "ddpm"):
        for steps in (int(s) for s in args.steps.split(",")):
            rng = np.random.default_rng(np.random.SeedSequence([args.seed, 3]))
            x_T = rng.standard_normal((args.chains, 1))
            out = ddim_sample(den, x_T, sched, steps) if kind == "ddim" else ddpm_sample(den, x_T, sched, rng, steps)
            _, v = exact_moments(sched, kind, steps, args.mu, args.sigma2)
            print(f"{kind:<8} {steps:>5} {out.mean():8.4f} {out.var():8.4f} {v:9.4f} "
                  f"{100 * (v / args.sigma2 - 1):+7.1f}%")


if __name__ == "__main__":
    main()
