"""Time the numba and numpy simulation kernels on the same workload.

    python3 benchmarks/bench_kernels.py [--steps 11000] [--repeat 3]

Both backends run a teacher-forced stretch followed by a closed-loop
stretch through the full hardware chain, and the outputs are compared.
"""
import argparse
import time

import numpy as np

from rcfeedback import HardwareModel, ReservoirConfig
from rcfeedback import kernels
from rcfeedback.reservoir import _hw_scalars, _noise_arrays


def workload(steps, highpass):
    cfg = ReservoirConfig.random(0, 0.9, 0.3)
    hw = HardwareModel(noise_sigma=1e-3, highpass=highpass)
    teacher = np.sin(0.1 * np.arange(128))
    n_auto = steps - 128
    w = np.random.default_rng(1).normal(scale=1e-3, size=cfg.n_neurons)
    acq, drv = _noise_arrays(hw, 7, steps - 1, cfg.n_neurons)
    adc, dac, gain, hp = _hw_scalars(hw)
    return (cfg.alpha, cfg.beta, cfg.mask, teacher, n_auto, w, acq, drv, adc, dac, gain,
            hp, 1e6, np.zeros(cfg.n_neurons), 0.0, 0.0, 0.0)


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        a = list(args)
        a[13] = a[13].copy()
        t0 = time.perf_counter()
        out = fn(*a)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--steps", type=int, default=11000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    for highpass in (False, True):
        wl = workload(args.steps, highpass)
        kernels.simulate_numba(*[a.copy() if isinstance(a, np.ndarray) else a for a in wl])
        t_nb, out_nb = best_of(kernels.simulate_numba, wl, args.repeat)
        t_np, out_np = best_of(kernels.simulate_numpy, wl, args.repeat)
        diff = np.nanmax(np.abs(out_nb[2] - out_np[2]))
        print(f"highpass={highpass!s:5}  steps={args.steps}  numba {t_nb * 1e3:8.1f} ms"
              f"  numpy {t_np * 1e3:8.1f} ms  speedup {t_np / t_nb:6.1f}x"
              f"  max |dy| {diff:.1e}")


if __name__ == "__main__":
    main()
