"""Compare the compiled kernels against the pure-Python reference.

Three sections: frame codec micro-benchmarks, a mixed mempool workload, and
an end-to-end simulation timed in subprocesses (kernel choice is frozen at
import, so each sim run gets its own interpreter via ANTROUTE_PURE).

Run from the repo root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --messages 200000 --skip-sim
"""

import argparse
import json
import os
import random
import subprocess
import sys
import time

from antroute.kernels import reference

try:
    from antroute.kernels import _fast
except ImportError:
    _fast = None

IMPLS = [m for m in (_fast, reference) if m is not None]


def _random_frames(count, seed=0):
    rng = random.Random(seed)
    args = []
    for _ in range(count):
        kind = rng.randrange(3)
        args.append((
            kind,
            rng.randrange(2),
            rng.randbytes(32),
            rng.getrandbits(32),
            rng.getrandbits(64),
            rng.getrandbits(64),
            rng.getrandbits(64),
            rng.getrandbits(64) if kind else None,
        ))
    return args


def bench_codec(count):
    frames = _random_frames(count)
    packed = [reference.pack_frame(*a) for a in frames]
    rows = []
    for impl in IMPLS:
        t0 = time.perf_counter()
        for a in frames:
            impl.pack_frame(*a)
        pack_s = time.perf_counter() - t0
        t0 = time.perf_counter()
        for f in packed:
            impl.unpack_frame(f)
        unpack_s = time.perf_counter() - t0
        rows.append((impl.IMPLEMENTATION, count / pack_s, count / unpack_s))
    return rows


def bench_mempool(ops):
    rng = random.Random(1)
    keys = [rng.randbytes(32) for _ in range(256)]
    # precomputed op stream so both kernels replay the identical workload
    stream = []
    for i in range(ops):
        r = keys[rng.randrange(len(keys))]
        stream.append((r, rng.randrange(2), rng.randrange(16),
                       rng.randrange(8), rng.randrange(5), i))
    rows = []
    for impl in IMPLS:
        mp = impl.Mempool()
        t0 = time.perf_counter()
        for r, d, sender, counter, fee, now in stream:
            mp.observe(r, d, sender, counter, fee, 10, 100, now)
            if now % 64 == 0:
                mp.best_transmitter(r, d)
            if now % 4096 == 0:
                mp.sweep(now - 2048)
        total_s = time.perf_counter() - t0
        rows.append((impl.IMPLEMENTATION, ops / total_s))
    return rows


SIM_DOC = {
    "seed": 9,
    "horizon_s": 60.0,
    "topology": {"kind": "erdos_renyi", "n": 150, "p": 0.06},
    "latency": {"kind": "uniform", "lo_ms": 5.0, "hi_ms": 15.0},
    "capacity": {"kind": "constant", "value": 10**9},
    "workload": {"kind": "poisson", "count": 60, "rate_per_s": 2.0,
                 "amount": 10, "max_fee": 10},
    "node_defaults": {"fee": 1},
    "audit": True,
}

SIM_SNIPPET = """
import json, sys, time
from antroute.kernels import IMPLEMENTATION
from antroute.sim.engine import run_scenario
from antroute.sim.scenario import parse_scenario

doc = json.loads(sys.stdin.read())
t0 = time.perf_counter()
metrics = run_scenario(parse_scenario(doc))
elapsed = time.perf_counter() - t0
print(json.dumps({"impl": IMPLEMENTATION, "s": elapsed,
                  "digest": json.dumps(metrics.to_dict(), sort_keys=True)}))
"""


def bench_sim():
    rows = []
    digests = set()
    for pure in ("0", "1"):
        env = dict(os.environ, ANTROUTE_PURE=pure)
        out = subprocess.run(
            [sys.executable, "-c", SIM_SNIPPET], input=json.dumps(SIM_DOC),
            capture_output=True, text=True, env=env, check=True)
        res = json.loads(out.stdout)
        digests.add(res["digest"])
        rows.append((res["impl"], res["s"]))
    if len(digests) != 1:
        raise SystemExit("kernel implementations disagree on sim output")
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--messages", type=int, default=100_000)
    ap.add_argument("--ops", type=int, default=200_000)
    ap.add_argument("--skip-sim", action="store_true")
    args = ap.parse_args(argv)

    if _fast is None:
        print("compiled kernels not built; benchmarking the reference only")

    print(f"codec ({args.messages} messages)")
    for name, pack_rate, unpack_rate in bench_codec(args.messages):
        print(f"  {name:10s} pack {pack_rate/1e6:6.2f}M/s   "
              f"unpack {unpack_rate/1e6:6.2f}M/s")

    print(f"mempool ({args.ops} mixed ops)")
    rows = bench_mempool(args.ops)
    base = min(rate for _, rate in rows)
    for name, rate in rows:
        print(f"  {name:10s} {rate/1e6:6.2f}M ops/s   ({rate/base:4.2f}x)")

    if not args.skip_sim:
        print("simulation (er n=150, 60 payments, audit on)")
        rows = bench_sim()
        slowest = max(s for _, s in rows)
        for name, s in rows:
            print(f"  {name:10s} {s:6.2f}s   ({slowest/s:4.2f}x)")
        print("  metrics identical across kernels")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
