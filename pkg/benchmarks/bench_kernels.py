"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat N] [--end-to-end]

Kernel timings call both backend modules directly on shapes taken from the
default networks (base 16, depth 3, 64x64 input, batch 4). ``--end-to-end``
also times restoration-cGAN training steps in a subprocess per backend, since
the backend is fixed at import.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from micrestore.kernels import backends

# (label, N, C, H, W, k, stride) for im2col/col2im
CONV_CASES = [
    ("enc0 3x3 s1", 4, 1, 64, 64, 3, 1),
    ("enc1 3x3 s2", 4, 16, 66, 66, 3, 2),
    ("dec 3x3 s1", 4, 64, 34, 34, 3, 1),
    ("disc 3x3 s2", 4, 32, 34, 34, 3, 2),
]
# (label, N, C, H, W, factor) for upsample/block_sum
UP_CASES = [("dec1 x2", 4, 64, 16, 16, 2), ("dec0 x2", 4, 32, 32, 32, 2)]

E2E = r"""
import time, numpy as np, tempfile
from micrestore.autodiff import RngStream
from micrestore.defects import DefectSpec, PhantomSpec, synth_corpus
from micrestore.io.config import TrainConfig
from micrestore.kernels import BACKEND
from micrestore.nn import NetConfig
from micrestore.pipeline import train_restore_cgan
m = synth_corpus(PhantomSpec("nuclei_blobs", 64), DefectSpec("denoise"), 8, 1.0, RngStream(0), tempfile.mkdtemp())
cfg = TrainConfig("restore_cgan", epochs=100, batch_size=4, max_steps=%d)
t = time.perf_counter()
res = train_restore_cgan(m, cfg, NetConfig())
print(BACKEND, (time.perf_counter() - t) / cfg.max_steps, res.losses[-1]["g_total"])
"""


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_kernels(repeat):
    mods = backends()
    if "cython" not in mods:
        print("compiled extension not built; only the numpy backend is available")
    rng = np.random.default_rng(0)
    rows = []
    for label, n, c, h, w, k, s in CONV_CASES:
        x = rng.standard_normal((n, c, h, w)).astype(np.float32)
        times = {}
        for name, mod in mods.items():
            cols = mod.im2col(x, k, k, s)
            times[name] = (best(lambda: mod.im2col(x, k, k, s), repeat),
                           best(lambda: mod.col2im(cols, c, h, w, k, k, s), repeat))
        rows.append((f"im2col {label}", {m: t[0] for m, t in times.items()}))
        rows.append((f"col2im {label}", {m: t[1] for m, t in times.items()}))
    for label, n, c, h, w, f in UP_CASES:
        x = rng.standard_normal((n, c, h, w)).astype(np.float32)
        g = rng.standard_normal((n, c, h * f, w * f)).astype(np.float32)
        rows.append((f"upsample {label}", {m: best(lambda: mod.upsample_nearest(x, f), repeat) for m, mod in mods.items()}))
        rows.append((f"block_sum {label}", {m: best(lambda: mod.block_sum(g, f), repeat) for m, mod in mods.items()}))

    names = list(mods)
    print(f"{'kernel':<26}" + "".join(f"{n + ' ms':>12}" for n in names) + ("   speedup" if len(names) > 1 else ""))
    for label, t in rows:
        line = f"{label:<26}" + "".join(f"{1e3 * t[n]:>12.3f}" for n in names)
        if len(names) > 1:
            line += f"{t['python'] / t['cython']:>9.2f}x"
        print(line)


def bench_end_to_end(steps):
    print(f"\nrestoration cGAN training, default net, batch 4, 64x64, {steps} steps")
    for choice in ("python", "cython"):
        env = dict(os.environ, MICRESTORE_KERNELS=choice)
        proc = subprocess.run([sys.executable, "-c", E2E % steps], env=env, capture_output=True, text=True)
        if proc.returncode:
            print(f"{choice}: unavailable ({proc.stderr.strip().splitlines()[-1]})")
            continue
        backend, per_step, loss = proc.stdout.split()
        print(f"{backend:<8} {1e3 * float(per_step):8.1f} ms/step   final g_total {float(loss):.6f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--end-to-end", action="store_true")
    ap.add_argument("--steps", type=int, default=20)
    args = ap.parse_args()
    bench_kernels(args.repeat)
    if args.end_to_end:
        bench_end_to_end(args.steps)


if __name__ == "__main__":
    main()
