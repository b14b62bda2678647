"""Compare the compiled and pure-Python simulation kernels.

    python3 benchmarks/bench_kernel.py [--events 200000]

Both backends consume the same random stream, so the final states must
agree exactly; the script checks that before reporting timings.
"""

import argparse
import time

import numpy as np

from multiscale_crn import exemplars
from multiscale_crn.simulate import RunConfig, StopRule, available_backends, ssa_run

CASES = [
    ("isom-1", "direct"),
    ("isom-1", "next-reaction"),
    ("viral", "direct"),
    ("crystallization", "direct"),
]


def run(name, method, backend, events):
    net = exemplars.exemplar(name).network
    stop = StopRule(max_events=events)
    t = time.perf_counter()
    tr = ssa_run(net, None, stop, RunConfig(7, method), record=False, backend=backend)
    return time.perf_counter() - t, tr


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--events", type=int, default=200_000)
    ap.add_argument("--python-events", type=int, default=20_000,
                    help="event budget for the slow backend")
    args = ap.parse_args()
    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{'case':<28}{'backend':<10}{'events':>10}{'ns/event':>12}")
    for name, method in CASES:
        ns = {}
        ends = {}
        for b in backends:
            n = args.events if b == "cython" else args.python_events
            dt, tr = run(name, method, b, n)
            ns[b] = 1e9 * dt / max(tr.n_events, 1)
            _, short = run(name, method, b, args.python_events)
            ends[b] = short.final_state
            print(f"{name + ' ' + method:<28}{b:<10}{tr.n_events:>10}{ns[b]:>12.1f}")
        if len(ends) == 2:
            same = np.array_equal(*ends.values())
            print(f"{'':<28}speedup {ns['python'] / ns['cython']:.1f}x, identical paths: {same}")


if __name__ == "__main__":
    main()
