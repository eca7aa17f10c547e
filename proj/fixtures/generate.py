#!/usr/bin/env python3
"""Regenerates fixtures/manifests and fixtures/attest. Deterministic."""
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent

RUNTIME = """page offset=0x0 type=reg perms=rx source=asm:../enclave/trts.s
tcs offset=0x10000 oentry=0x0 ossa=0x11000 tls=0x13000 nssa=2
page offset=0x11000 type=reg perms=rw source=zero count=2
page offset=0x13000 type=reg perms=rw source=zero
"""


def blob(path, n, seed):
    rng = random.Random(seed)
    path.write_bytes(bytes(rng.randrange(256) for _ in range(n)))


def manifests():
    d = ROOT / "manifests"
    blob(d / "data" / "pattern.bin", 10000, 1)
    blob(d / "data" / "table.bin", 4096, 2)
    (d / "m1_minimal.manifest").write_text(
        "# Smallest runnable image: code, one thread, its SSA and TLS.\n"
        "enclave name=m1 size=0x20000 ssa_frame_size=1\n\n"
        "page offset=0x0 type=reg perms=rx source=asm:../enclave/trts.s\n"
        "tcs offset=0x10000 oentry=0x0 ossa=0x11000 tls=0x12000 nssa=1\n"
        "page offset=0x11000 type=reg perms=rw source=zero\n"
        "page offset=0x12000 type=reg perms=rw source=zero\n")
    (d / "m2_files.manifest").write_text(
        "# File-backed data spanning three pages plus a read-only table.\n"
        "enclave name=m2 size=0x40000 isv_prod_id=2 isv_svn=3\n\n" + RUNTIME +
        "page offset=0x20000 type=reg perms=rw source=file:data/pattern.bin\n"
        "page offset=0x24000 type=reg perms=r source=file:data/table.bin\n")
    (d / "m3_unmeasured.manifest").write_text(
        "# Measured and unmeasured pages interleaved.\n"
        "enclave name=m3 size=0x40000\n\n" + RUNTIME +
        "page offset=0x20000 type=reg perms=rw source=file:data/table.bin measured=no\n"
        "page offset=0x21000 type=reg perms=rw source=file:data/table.bin\n"
        "page offset=0x22000 type=reg perms=rw source=zero count=3 measured=no\n"
        "page offset=0x25000 type=reg perms=rwx source=zero\n")
    tcs = []
    for i in range(4):
        b = 0x10000 + i * 0x8000
        tcs.append(f"tcs offset={b:#x} oentry=0x0 ossa={b + 0x1000:#x} tls={b + 0x5000:#x} nssa=2\n"
                   f"page offset={b + 0x1000:#x} type=reg perms=rw source=zero count=4\n"
                   f"page offset={b + 0x5000:#x} type=reg perms=rw source=zero\n")
    (d / "m4_threads.manifest").write_text(
        "# Four threads with two-page SSA frames.\n"
        "enclave name=m4 size=0x80000 ssa_frame_size=2 attributes=debug\n\n"
        "page offset=0x0 type=reg perms=rx source=asm:../enclave/trts.s\n"
        "page offset=0x40000 type=reg perms=rw source=zero count=8\n" + "".join(tcs))
    lines = []
    for i in range(40):
        perms = ["r", "rw", "rx", "rwx"][i % 4]
        src = "file:data/table.bin" if i % 3 == 0 else "zero"
        lines.append(f"page offset={0x40000 + i * 0x1000:#x} type=reg perms={perms} source={src}\n")
    (d / "m5_large.manifest").write_text(
        "# 2 MiB range, forty data pages with mixed permissions.\n"
        "enclave name=m5 size=0x200000 isv_prod_id=5 sigstruct=sign-with-key:vendor-m5\n\n" +
        RUNTIME + "".join(lines))


def pairs():
    d = ROOT / "attest"
    (d / "data").mkdir(exist_ok=True)
    for i in range(1, 21):
        key = f"vendor{i:02d}"
        size = 0x40000 if i % 2 else 0x80000
        ssa = 1 + (i % 3 == 0)
        blob(d / "data" / f"p{i:02d}_a.bin", 4096, 1000 + i)
        blob(d / "data" / f"p{i:02d}_b.bin", 4096, 2000 + i)
        tcs = (f"tcs offset=0x10000 oentry=0x0 ossa=0x11000 tls={0x11000 + 2 * ssa * 0x1000:#x} nssa=2\n"
               f"page offset=0x11000 type=reg perms=rw source=zero count={2 * ssa}\n"
               f"page offset={0x11000 + 2 * ssa * 0x1000:#x} type=reg perms=rw source=zero\n")
        head = "page offset=0x0 type=reg perms=rx source=asm:../enclave/trts.s\n" \
               "page offset=0x8000 type=reg perms=rw source=zero count=4\n" + tcs
        variant = i % 4
        a_data = f"page offset=0x20000 type=reg perms=rw source=file:data/p{i:02d}_a.bin\n"
        b_data = {
            0: f"page offset=0x20000 type=reg perms=rw source=file:data/p{i:02d}_b.bin\n",
            1: a_data + "page offset=0x21000 type=reg perms=r source=zero\n",
            2: a_data.replace("perms=rw", "perms=r"),
            3: f"page offset=0x20000 type=reg perms=rw source=file:data/p{i:02d}_b.bin\n",
        }[variant]
        svn_b = 2 if variant == 3 else 1
        for side, data, svn in (("a", a_data, 1), ("b", b_data, svn_b)):
            (d / f"pair{i:02d}_{side}.manifest").write_text(
                f"# Attestation pair {i}, enclave {side.upper()}; both signed by {key}.\n"
                f"enclave name=p{i:02d}{side} size={size:#x} ssa_frame_size={ssa} isv_prod_id={i} "
                f"isv_svn={svn} sigstruct=sign-with-key:{key}\n\n" + head + data)


if __name__ == "__main__":
    manifests()
    pairs()
