#!/usr/bin/env python3
"""Smoke test for the Python bindings.

Builds are expected beforehand:

    cargo build -p obfuscan-py

The script locates the compiled extension in target/debug or target/release,
stages it as an importable module, and drives the main surface.
"""

import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent

# T1-shaped bytecode: keccak + 20-byte mask + divide feeding the recipient
T1_HEX = (
    "0x60006000600060006005602060002073ffffffffffffffffffffffffffffffffffffffff"
    "16600190046108fcf15000"
)


def stage_module() -> None:
    candidates = [
        REPO / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libobfuscan.so", "obfuscan.so", "libobfuscan.dylib")
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit(
            "extension not found; run `cargo build -p obfuscan-py` first "
            f"(searched {[str(c) for c in candidates]})"
        )
    stage = Path(tempfile.mkdtemp(prefix="obfuscan-py-"))
    shutil.copy(built, stage / "obfuscan.so")
    sys.path.insert(0, str(stage))


def approx(a: float, b: float, tol: float = 1e-9) -> bool:
    return abs(a - b) <= tol


def main() -> None:
    stage_module()
    import obfuscan

    # analysis of the T1 shape: three derivation steps, one site
    report = obfuscan.analyze(T1_HEX)
    assert report["f1_addr_steps"] == 3, report
    assert report["f2_string_ops"] == 2, report
    assert report["site_count"] == 1, report
    assert report["sites"][0]["opcode"] == "CALL", report

    # disassembly round-trips through the canonical text format
    text = obfuscan.disassemble("0x6001600201")
    assert text.splitlines() == [
        "0000: PUSH1 0x01",
        "0002: PUSH1 0x02",
        "0004: ADD",
    ], text

    # threshold arithmetic reproduces the published bound
    cutoff = obfuscan.threshold(4.571, 0.641, 361, 0.95)
    assert abs(cutoff - 4.637) <= 0.001, cutoff

    # score model: fit, serialize, score
    rows = [[float(i), 0, 0, 0, 0, 0, 0] for i in range(10)]
    model = obfuscan.ScoreModel.fit("smoke", rows)
    clone = obfuscan.ScoreModel.from_json(model.to_json())
    z, terms = clone.score([4.5, 0, 0, 0, 0, 0, 0])
    assert approx(z, 0.0), z  # 4.5 is the column mean
    assert len(terms) == 7

    # rank statistics
    auc = obfuscan.roc_auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9])
    assert approx(auc, 1.0), auc
    ap = obfuscan.pr_auc([1, 0, 0, 0, 1], [2.0, 2.0, 2.0, 2.0, 2.0])
    assert approx(ap, 0.4), ap
    t, df, p = obfuscan.welch_t([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    assert abs(t + 3.674) < 1e-3 and approx(df, 4.0), (t, df, p)

    print("python bindings smoke test: OK")


if __name__ == "__main__":
    main()
