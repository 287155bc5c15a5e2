"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from gpcde import kernels
from gpcde.construction import EnsembleParams, ensemble_B, make_staircase
from gpcde.graph_sim import assign_capabilities, build_graph, sample_erasures


def cases():
    x = np.linspace(0, 40, 200_000)
    yield "mixture_tail 200k pts", lambda k: k.mixture_tail(x, [3, 4, 8], [0.3, 0.3, 0.4])

    B = ensemble_B(EnsembleParams(64, 4)).to_float()
    ts, ps = np.array([4]), np.array([1.0])
    yield "de_loop L=64 w=4 500 it", lambda k: k.de_loop(B, np.ones(64), ts, ps, 7.4, 500,
                                                          1e-9, 1e-13, False, 0)
    Bs = make_staircase(8).eta * 0.5
    yield "de_loop L=8 5000 it", lambda k: k.de_loop(Bs, np.ones(8), ts, ps, 5.0, 5000,
                                                      1e-9, 1e-13, False, 0)

    g = assign_capabilities(build_graph(make_staircase(8), 2000), 4)
    st = sample_erasures(g, 5.0, np.random.default_rng(0))
    yield f"peel_flood {st.erased.size} erasures", lambda k: k.peel_flood(
        g.cn_capability, st.ea, st.eb, g.n_cn, 10)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    print(f"{'kernel':32s}" + "".join(f"{b:>14s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases():
        times = []
        for b in backends:
            k = kernels.get_backend(b)
            fn(k)  # warm up
            times.append(min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat)))
        line = f"{name:32s}" + "".join(f"{t * 1e3:12.2f}ms" for t in times)
        if len(times) > 1:
            line += f"{times[1] / times[0]:11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
