#!/usr/bin/env python3
"""Denoising experiment: learn factors on a clean phantom, denoise a noisy copy.

Example:
    python3 scripts/denoise_experiment.py --dims 32,32,32 --sigma 15
"""

import argparse
import time

from sepop import learn, objective, reconstruct, volume
from sepop.reconstruct import IdentityMeasurement, ReconConfig, mssim, psnr


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", default="32,32,32")
    ap.add_argument("--sigma", type=float, default=15.0)
    ap.add_argument("--lambda", dest="lam", type=float, default=None,
                    help="regularizer weight; defaults to 200*sigma")
    ap.add_argument("--T", type=int, default=2000)
    ap.add_argument("--learn-iters", type=int, default=300)
    ap.add_argument("--recon-iters", type=int, default=200)
    ap.add_argument("--phantom-seed", type=int, default=5)
    ap.add_argument("--train-seed", type=int, default=11)
    ap.add_argument("--noise-seed", type=int, default=1)
    ap.add_argument("--solver-seed", type=int, default=3)
    args = ap.parse_args()

    dims = tuple(int(d) for d in args.dims.split(","))
    lam = args.lam if args.lam is not None else 200.0 * args.sigma

    vol = volume.synth_phantom(dims, seed=args.phantom_seed)
    noisy = volume.add_awgn(vol, args.sigma, seed=args.noise_seed)
    print(f"noisy: PSNR {psnr(vol, noisy):.2f} dB, MSSIM {mssim(vol, noisy):.4f}")

    train = volume.build_training_set(vol, args.T, (5, 5, 5), seed=args.train_seed)
    t0 = time.monotonic()
    factors, report = learn.learn_operators(
        train.patches, [(6, 5)] * 3, objective.LearningParams(),
        learn.SolverConfig(max_iters=args.learn_iters, seed=args.solver_seed),
    )
    print(f"learning: {report.iterations} iters ({report.termination}), "
          f"cost {report.costs[0]:.4g} -> {report.costs[-1]:.4g}, "
          f"{time.monotonic() - t0:.0f}s")

    op = IdentityMeasurement(vol.dims)
    t0 = time.monotonic()
    rec = reconstruct.reconstruct(
        op.forward(noisy.data), op, factors,
        ReconConfig(lam=lam, max_iters=args.recon_iters),
    )
    print(f"denoised: PSNR {psnr(vol, rec):.2f} dB, MSSIM {mssim(vol, rec):.4f}, "
          f"{time.monotonic() - t0:.0f}s (lambda {lam:g})")


if __name__ == "__main__":
    main()
