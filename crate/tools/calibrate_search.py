"""Random search over generator arguments for the default flow parameters.

Each candidate is written with gen_hawkes_params.py and scored with the
`calibrate` example (build it first with
`cargo build --release -p lobsim-core --example calibrate`). Results are
appended as JSON lines so a search can be resumed or inspected.

    python3 tools/calibrate_search.py --trials 40 --log /tmp/search.jsonl
"""
import argparse
import json
import math
import os
import random
import subprocess
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
GEN = os.path.join(ROOT, "tools", "gen_hawkes_params.py")
CAL = os.path.join(ROOT, "target", "release", "examples", "calibrate")

# name -> (low, high, log-uniform)
SPACE = {
    "lo-deep": (0.1, 0.4, True),
    "lo-top": (0.1, 0.4, True),
    "lo-inspread": (0.2, 1.0, True),
    "co-deep": (0.08, 0.3, True),
    "co-top": (0.08, 0.3, True),
    "mo": (0.02, 0.15, True),
    "mo-self": (0.0, 0.3, False),
    "refill-fast": (0.0, 0.8, False),
    "refill-slow": (0.0, 0.8, False),
    "contrarian": (0.0, 0.9, False),
    "taker": (0.0, 0.95, False),
    "taker-kappa": (0.001, 0.02, True),
    "slow-kappa": (0.001, 0.02, True),
}


def sample(rng, around=None, scale=1.0):
    out = {}
    for k, (lo, hi, log) in SPACE.items():
        if around is None:
            u = rng.random()
        else:
            c = around[k]
            c = (math.log(c / lo) / math.log(hi / lo)) if log else (c - lo) / (hi - lo)
            u = min(1.0, max(0.0, c + rng.gauss(0.0, 0.12 * scale)))
        out[k] = lo * (hi / lo) ** u if log else lo + (hi - lo) * u
    return out


def band(x, lo, hi):
    """0 inside [lo, hi], growing linearly in log distance outside."""
    if x is None or not math.isfinite(x) or x <= 0:
        return 10.0
    if x < lo:
        return math.log(lo / x)
    if x > hi:
        return math.log(x / hi)
    return 0.0


def score(r):
    s = 0.0
    s += 4 * band(r.get("noagent_vol"), 0.55 / 1.2, 0.55 * 1.2)
    s += 4 * band(r.get("rpov1_vol"), 22 / 1.2, 22 * 1.2)
    s += 2 * band(r.get("hpov_slip"), 18.68 / 3, 18.68 * 3)
    s += 2 * band(r.get("rpov1_slip"), 7.05 / 3, 7.05 * 3)
    p = r.get("order_p")
    s += 0 if p is not None and p < 0.01 else 3
    d = r.get("delta")
    s += 10 if d is None else 4 * max(0.0, abs(d - 0.55) - 0.15)
    r2 = r.get("r2")
    s += 10 if r2 is None else 8 * max(0.0, 0.85 - r2)
    b = r.get("beta")
    s += 10 if b is None else 4 * max(0.0, abs(b - 0.17) - 0.08)
    s += 0.5 * band(r.get("noagent_depth"), 10, 200)
    s += 0.5 * band(r.get("noagent_spread"), 1.0, 1.5)
    return s


def evaluate(args, seeds):
    fd, path = tempfile.mkstemp(suffix=".toml")
    os.close(fd)
    cmd = [sys.executable, GEN, "--out", path] + [x for k, v in args.items() for x in (f"--{k}", f"{v:.6g}")]
    try:
        subprocess.run(cmd, check=True, capture_output=True)
        out = subprocess.run([CAL, path, str(seeds)], capture_output=True, text=True, timeout=1800)
    except (subprocess.SubprocessError, OSError) as e:
        return {"error": str(e)}
    finally:
        os.unlink(path)
    for line in out.stdout.splitlines():
        if line.startswith("RESULT "):
            return json.loads(line[7:])
    return {"error": (out.stderr or out.stdout)[-400:]}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=40)
    ap.add_argument("--seeds", type=int, default=30)
    ap.add_argument("--jobs", type=int, default=4)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--log", default="calibration_search.jsonl")
    ap.add_argument("--refine", action="store_true", help="perturb the best logged candidate")
    ap.add_argument("--scale", type=float, default=1.0)
    a = ap.parse_args()
    rng = random.Random(a.seed)
    best = None
    if a.refine and os.path.exists(a.log):
        rows = [json.loads(line) for line in open(a.log)]
        best = min(rows, key=lambda r: r["score"])["args"]
    cands = [sample(rng, best, a.scale) for _ in range(a.trials)]
    with ThreadPoolExecutor(a.jobs) as pool, open(a.log, "a") as log:
        for args, res in zip(cands, pool.map(lambda c: evaluate(c, a.seeds), cands)):
            sc = score(res) if "error" not in res else float("inf")
            log.write(json.dumps({"score": sc, "args": args, "result": res}) + "\n")
            log.flush()
            print(f"{sc:7.3f} " + " ".join(f"{k}={v}" for k, v in res.items() if k != "error"), flush=True)


if __name__ == "__main__":
    main()
