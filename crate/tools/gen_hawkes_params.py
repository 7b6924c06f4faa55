"""Generates crates/core/params/default_hawkes.toml from a compact description.

Event index layout: side * 6 + kind, bid side first; kinds are
lo_deep, lo_top, lo_inspread, co_deep, co_top, mo. alpha[i][j] is the jump
in the intensity of type i caused by an event of type j. A market order on
`side` is one that hits the `side` book.

Structure per side:
  * weak self-excitation of market orders and cancels (activity clustering);
  * market orders excite limit orders on the side they deplete: top-of-book
    refill through the fast kernel and price-improving orders through the
    slow one (resilience that grows with sustained one-sided flow and
    outlasts it);
  * market orders excite opposite market orders through the slow kernel
    (contrarian flow);
  * in-spread improvements draw same-side competition at the new best;
  * liquidity posted at the best attracts takers on that side through a
    slow kernel, so sustained one-sided quoting meets growing opposite flow
    that outlasts it.
Limit orders do not excite limit orders, so passive quoting cannot build
unbounded queues. No cycle passes through the refill terms, so they do not
enter the stationarity condition.
"""
import argparse

KINDS = ["lo_deep", "lo_top", "lo_inspread", "co_deep", "co_top", "mo"]


def idx(kind, side):
    return (0 if side == "bid" else 6) + KINDS.index(kind)


def other(side):
    return "ask" if side == "bid" else "bid"


def build(a):
    base_side = {
        "lo_deep": a.lo_deep,
        "lo_top": a.lo_top,
        "lo_inspread": a.lo_inspread,
        "co_deep": a.co_deep,
        "co_top": a.co_top,
        "mo": a.mo,
    }
    size_side = {
        "lo_deep": 2.0,
        "lo_top": 1.8,
        "lo_inspread": 1.4,
        "co_deep": 1.5,
        "co_top": 1.3,
        "mo": 1.6,
    }
    n = 12
    fk, sk = a.fast_kappa, a.slow_kappa
    alpha = [[0.0] * n for _ in range(n)]
    kappa = [[fk] * n for _ in range(n)]
    baseline = [0.0] * n
    size_mean = [0.0] * n

    def excite(target, source, branching, k):
        # one exponential kernel per (target, source) pair
        assert alpha[target][source] == 0.0, (target, source)
        if branching > 0.0:
            alpha[target][source] = branching * k
            kappa[target][source] = k

    for side in ("bid", "ask"):
        o = other(side)
        for k in KINDS:
            baseline[idx(k, side)] = base_side[k]
            size_mean[idx(k, side)] = size_side[k]
        mo = idx("mo", side)
        excite(mo, mo, a.mo_self, fk)
        excite(idx("co_top", side), idx("co_top", side), a.co_self, fk)
        excite(idx("co_deep", side), idx("co_deep", side), a.co_self, fk)
        excite(idx("lo_top", side), mo, a.refill_fast, fk)
        excite(idx("lo_inspread", side), mo, a.refill_slow, sk)
        excite(idx("mo", o), mo, a.contrarian, sk)
        excite(idx("lo_top", side), idx("lo_inspread", side), a.competition, fk)
        excite(mo, idx("lo_top", side), a.taker, a.taker_kappa)
    return baseline, alpha, kappa, size_mean


def fmt_row(r):
    return "[" + ", ".join(f"{x:.6g}" for x in r) + "]"


def main():
    ap = argparse.ArgumentParser()
    for name, default in [
        ("lo-deep", 0.20),
        ("lo-top", 0.20),
        ("lo-inspread", 0.05),
        ("co-deep", 0.20),
        ("co-top", 0.20),
        ("mo", 0.10),
        ("fast-kappa", 1.5),
        ("slow-kappa", 0.005),
        ("mo-self", 0.1),
        ("co-self", 0.1),
        ("refill-fast", 0.3),
        ("refill-slow", 0.3),
        ("contrarian", 0.3),
        ("competition", 0.1),
        ("taker", 0.0),
        ("taker-kappa", 0.005),
    ]:
        ap.add_argument("--" + name, type=float, default=default)
    ap.add_argument("--out", default="crates/core/params/default_hawkes.toml")
    a = ap.parse_args()
    baseline, alpha, kappa, size_mean = build(a)
    args = " ".join(f"--{k.replace('_', '-')} {v:g}" for k, v in vars(a).items() if k != "out")
    lines = [
        "# Default exogenous flow parameters.",
        f"# generated by tools/gen_hawkes_params.py {args}",
        "# index = side * 6 + kind, bid side first; kinds: " + ", ".join(KINDS),
        "# alpha[i][j]: jump in intensity of type i after an event of type j (1/s)",
        "volume_scale = 1.0",
        "baseline = " + fmt_row(baseline),
        "size_mean = " + fmt_row(size_mean),
        "alpha = [",
        *["  " + fmt_row(r) + "," for r in alpha],
        "]",
        "kappa = [",
        *["  " + fmt_row(r) + "," for r in kappa],
        "]",
    ]
    with open(a.out, "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
