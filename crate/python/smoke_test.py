#!/usr/bin/env python3
"""Smoke test for the shadowlane_py extension module.

Build the module first:

    cargo build -p shadowlane-py --release

then run:

    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def load_module():
    names = ["libshadowlane_py.so", "shadowlane_py.so", "shadowlane_py.dll", "libshadowlane_py.dylib"]
    for profile in ("release", "debug"):
        for name in names:
            built = REPO / "target" / profile / name
            if built.exists():
                stage = Path(tempfile.mkdtemp(prefix="shadowlane_py_"))
                shutil.copy2(built, stage / "shadowlane_py.so")
                sys.path.insert(0, str(stage))
                import shadowlane_py

                return shadowlane_py
    sys.exit("shadowlane_py not built; run: cargo build -p shadowlane-py --release")


def check(name, ok):
    print(f"{'PASS' if ok else 'FAIL'}  {name}")
    if not ok:
        sys.exit(1)


def main():
    sl = load_module()

    # Shadow-length unit cases.
    check("shadow_length vertical panel at 45 deg", abs(sl.shadow_length(10.0, 0.0, 0.0, 45.0) - 10.0) < 1e-9)
    check("shadow_length flat panel at 30 deg", abs(sl.shadow_length(0.0, 10.0, 90.0, 30.0) - 20.0) < 1e-9)

    # Winter-solstice morning sun at the paper's site: low and southeast.
    az, alt = sl.solar_position(2023, 12, 22, 13.0, 34.0, -82.0)
    check("solar_position azimuth southeast", 110.0 < az < 180.0)
    check("solar_position altitude low morning", 0.0 < alt < 35.0)

    raw, purged = sl.sweep_counts("literal")
    check("sweep raw grid 36400", raw == 36400)
    check("sweep purge keeps a strict subset", 0 < purged < raw)

    cfg = sl.NsConfig(0.3, 5.0, 5.0, 0.5)
    check("NsConfig repr", "NsConfig" in repr(cfg))
    out = sl.evaluate_attack(cfg, scene=0)
    check("evaluate_attack adds lane pixels", out["added"] > 0 and out["success"])

    verdict = sl.simulate(2, 60.0, 0.0)
    check("benign simulation has no violation", not verdict["attack_success"])
    check("benign verdict not combined", not verdict["combined"])

    # Defense roundtrip on a synthetic shadow-with-slit image.
    with tempfile.TemporaryDirectory() as td:
        src = Path(td) / "in.ppm"
        dst = Path(td) / "out.ppm"
        w = h = 96
        rows = []
        for y in range(h):
            row = bytearray()
            for x in range(w):
                v = 100
                if 15 <= x < 80 and 15 <= y < 80:
                    v = 45
                    if 45 <= x < 50 and 20 <= y < 75:
                        v = 200
                row += bytes((v, v, v))
            rows.append(bytes(row))
        src.write_bytes(b"P6\n%d %d\n255\n" % (w, h) + b"".join(rows))
        changed = sl.defend_image(str(src), str(dst), anomaly_threshold=18.0, enclosure_ratio=0.7)
        check("defend_image suppresses the slit", changed > 100)
        check("defend_image writes output", dst.exists())

    print("all smoke tests passed")


if __name__ == "__main__":
    main()
