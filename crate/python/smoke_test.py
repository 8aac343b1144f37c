#!/usr/bin/env python3
"""Smoke test for the bitclt_py extension module.

Build the extension first, then run this script from anywhere:

    cargo build --release -p bitclt-py
    python3 python/smoke_test.py

The script locates the compiled cdylib under target/, stages it on the
import path under the canonical module name, and exercises each exposed
type and function against frozen known values.
"""

import math
import shutil
import sys
import sysconfig
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent


def stage_module() -> None:
    candidates = [
        REPO_ROOT / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libbitclt_py.so", "libbitclt_py.dylib", "bitclt_py.dll")
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("extension not built; run: cargo build --release -p bitclt-py")
    stage = Path(tempfile.mkdtemp(prefix="bitclt_py_"))
    ext_suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    shutil.copy2(built, stage / f"bitclt_py{ext_suffix}")
    sys.path.insert(0, str(stage))


stage_module()

import bitclt_py as bc  # noqa: E402

checks = 0


def check(name: str, condition: bool) -> None:
    global checks
    if not condition:
        sys.exit(f"FAIL: {name}")
    checks += 1
    print(f"ok: {name}")


# --- bit sources ------------------------------------------------------------
stream = bc.BitStream("champernowne")
check("champernowne first bits", stream.next_bits(10) == bytes([1, 1, 0, 1, 1, 1, 0, 0, 1, 0]))
check("position tracks", stream.position == 10)
stream.reset()
check("reset replays", stream.next_bits(4) == bytes([1, 1, 0, 1]))

ones = bc.BitStream("constant:1")
check("popcount all ones", ones.popcount_block(7) == 7)
prng = bc.BitStream("prng:seed=1")
first = prng.next_bits(64)
prng.reset()
check("prng deterministic", prng.next_bits(64) == first)
check("prng spec echo", prng.spec == "prng:seed=1")

# --- schemes and samples ----------------------------------------------------
tri = bc.BlockScheme("tri")
check("triangular bounds", tri.block_bounds(4) == (7, 4))
fixed = bc.BlockScheme("fixed:4")
check("fixed bounds", fixed.block_bounds(3) == (9, 4))

values, bits = bc.sample_run("constant:1", "tri", 4)
check("run consumes 10 bits", bits == 10)
check("constant-ones samples are sqrt(k)", abs(values[1] - math.sqrt(2)) < 1e-15)

# --- moments ----------------------------------------------------------------
check("normal moment m=6", bc.normal_moment(6) == 15.0)
check("exact moment (3,4)", bc.exact_rademacher_moment(3, 4) == 21)
check("brute force agrees", bc.brute_force_moment(3, 4) == 21)
check(
    "python ints are exact",
    bc.exact_rademacher_moment(1000, 4) == 3 * 1000**2 - 2 * 1000,
)
check("scaled moment (100,4)", abs(bc.scaled_block_moment(100, 4) - 2.98) < 1e-15)

table = bc.MomentTable(m_max=4)
for v in (1.0, -1.0):
    table.observe(v)
check("moment table m2", table.empirical_moment(2) == 1.0)
check("moment table count", table.count == 2)

# --- normal CDF and KS ------------------------------------------------------
check("phi at 0", bc.phi(0.0) == 0.5)
check("phi at 1", abs(bc.phi(1.0) - 0.841344746068543) < 1e-12)
ecdf = bc.EmpiricalCdf([0.0])
check("single-sample KS", ecdf.ks_distance() == 0.5)
check("ecdf eval", ecdf.eval(0.0) == 1.0)
rows = ecdf.pointwise_error([-1.0, 0.0, 1.0])
check("pointwise rows", len(rows) == 3 and rows[1][3] == 0.5)

# --- tail bounds ------------------------------------------------------------
check("tail bound closed form", abs(bc.tail_bound(1.0, 0.1, 1000) - 0.8) < 1e-12)
check("find_m example", bc.find_m(1.0, 1, 1) == 256)
plan_rows, truncation = bc.build_test_plan(1.0, 1, 3)
check("plan rows meet thresholds", all(r[3] < r[4] for r in plan_rows))
check("plan truncation", truncation == 2.0 ** -4)

# --- log-average estimator --------------------------------------------------
est = bc.asclt_estimate("constant:1", 1000, [0.0])
check("constant-ones estimate", est[0] == (0.0, 0.0))
est = bc.asclt_estimate("prng:seed=1", 100000, [-1.0, 0.0, 1.0])
check("estimates monotone in x", est[0][1] <= est[1][1] <= est[2][1])
h, dk, diff = bc.weight_equivalence_check("constant:0", 10000, 0.0)
check("dk weighting saturates", abs(dk - 1.0) < 1e-12)
check("weight gap is small", 0 < diff < 0.1)

check("subsequence a=2", bc.subsequence(2.0, 3) == [7, 54, 2980])
check("expectation f=1 exact", bc.binomial_expectation("step:100.0", 50) == 1.0)
check("clip expectation vanishes", abs(bc.binomial_expectation("clip", 4)) < 1e-14)
check("tn bounded", abs(bc.tn_statistic("prng:seed=3", 500)) <= 2.0)

trace = bc.centered_average_trace("prng:seed=2", "tri", 2, 1024)
check("trace checkpoints", [k for k, _ in trace] == [2**i for i in range(11)])

study = bc.variance_study(list(range(1, 101)), [100, 1000])
check("study rows", len(study) == 2 and study[1][1] < study[0][1])

check("prng id exposed", bc.PRNG_ID == "splitmix64-v1")

print(f"\nbitclt_py smoke test: {checks} checks passed")
