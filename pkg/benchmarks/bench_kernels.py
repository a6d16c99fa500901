"""Time the compiled Jin-Xin sweeps against the numpy fallback.

    python benchmarks/bench_kernels.py [--nx 300] [--steps 1440] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from relaxround import _core
from relaxround._core import _fallback


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, default=300)
    ap.add_argument("--steps", type=int, default=1440)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    y0 = rng.normal(size=(args.nx, 2))
    w = rng.uniform(-0.5, 0.5, args.steps)
    s = np.ones(args.steps)
    mu = rng.normal(size=(args.nx, 2))
    params = (0.5, 1e-2, 5.0)  # nu, c, a

    traj = _fallback.jinxin_forward(y0, w, s, *params)
    cases = {
        "forward": (
            lambda: _core.jinxin_forward(y0, w, s, *params),
            lambda: _fallback.jinxin_forward(y0, w, s, *params),
        ),
        "adjoint": (
            lambda: _core.jinxin_adjoint(traj, w, s, *params, mu),
            lambda: _fallback.jinxin_adjoint(traj, w, s, *params, mu),
        ),
    }
    print(f"backend={_core.BACKEND} nx={args.nx} steps={args.steps} (best of {args.repeat})")
    print(f"{'kernel':<8} {'active [ms]':>12} {'fallback [ms]':>14} {'speedup':>8}")
    for name, (fast, slow) in cases.items():
        t_fast = min(timeit.repeat(fast, number=1, repeat=args.repeat)) * 1e3
        t_slow = min(timeit.repeat(slow, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<8} {t_fast:12.3f} {t_slow:14.3f} {t_slow / t_fast:8.1f}x")


if __name__ == "__main__":
    main()
