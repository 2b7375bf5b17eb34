#!/usr/bin/env python3
"""Micro-benchmarks for the hot paths: region reads and XML parse/write.

Usage: python3 scripts/bench_io.py
"""

import tempfile
import time
from pathlib import Path

import numpy as np

from loopcurate.formats import parse_native_xml, write_native_xml
from loopcurate.geometry import Circle
from loopcurate.model import AnnotationSet, CircleAnnotation, Provenance
from loopcurate.slides import read_region
from loopcurate.synthetic import SynthSpec, make_synthetic_slide


def bench(label, fn, repeat=5):
    best = min(timeit(fn) for _ in range(repeat))
    print(f"{label:<46} {best * 1000:8.2f} ms")
    return best


def timeit(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def main():
    with tempfile.TemporaryDirectory(prefix="loopcurate-bench-") as tmp:
        slide = make_synthetic_slide(
            SynthSpec(width=4096, height=4096, n_disks=40, radius_range=(20, 60), seed=0), Path(tmp) / "s"
        )
        handle = slide.handle
        rng = np.random.default_rng(0)

        bench("read_region 512x512 @ level 0 (cold-ish)", lambda: read_region(
            handle, 0, int(rng.integers(0, 3500)), int(rng.integers(0, 3500)), 512, 512))
        bench("read_region 1024x1024 @ level 0", lambda: read_region(handle, 0, 512, 512, 1024, 1024))
        info = handle.levels[handle.coarsest_level]
        bench("read_region full coarsest level", lambda: read_region(
            handle, handle.coarsest_level, 0, 0, info.width, info.height))

        anns = tuple(
            CircleAnnotation(i + 1, Circle(float(i % 4000), float(i % 3000), 20.0), Provenance.MACHINE,
                             score=round(float(rng.random()), 4))
            for i in range(10_000)
        )
        big_set = AnnotationSet("bench", anns)
        xml = write_native_xml(big_set)
        print(f"native XML size for 10k annotations: {len(xml) / 1024:.0f} KiB")
        bench("write_native_xml 10k annotations", lambda: write_native_xml(big_set))
        bench("parse_native_xml 10k annotations", lambda: parse_native_xml(xml))


if __name__ == "__main__":
    main()
