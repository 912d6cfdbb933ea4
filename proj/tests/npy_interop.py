#!/usr/bin/env python3
"""Cross-checks the tensor container against numpy, both directions."""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

CLI = sys.argv[1]


def run(*args):
    return subprocess.run([CLI, *args], capture_output=True, text=True)


def main():
    tmp = Path(tempfile.mkdtemp(prefix="npy_interop_"))

    # numpy-written f8 rank-4 and f4 rank-2 files must validate
    a = np.linspace(-2.0, 2.0, 32, dtype=np.float64).reshape(1, 2, 4, 4)
    np.save(tmp / "a.npy", a)
    r = run("validate", "--input", str(tmp / "a.npy"))
    assert r.returncode == 0, r.stderr

    b = np.array([[0.5, -1.25], [2.0, 0.125]], dtype=np.float32)
    np.save(tmp / "b.npy", b)
    r = run("validate", "--input", str(tmp / "b.npy"))
    assert r.returncode == 0, r.stderr

    # tigs-written tensors load in numpy with the same payload
    r = run("synth", "--delta", "6", "--heads", "4", "--triggered", "1",
            "--seq-len", "8", "--seed", "11", "--out", str(tmp / "s"))
    assert r.returncode == 0, r.stderr
    t = np.load(tmp / "s.npy")
    assert t.shape == (1, 4, 8, 8)
    assert t.dtype == np.float64

    # the defended output is a probability tensor numpy agrees with
    r = run("smooth", "--input", str(tmp / "s.npy"), "--mask",
            str(tmp / "s.mask.json"), "--output", str(tmp / "d.npy"))
    assert r.returncode == 0, r.stderr
    d = np.load(tmp / "d.npy")
    assert np.all(d >= 0)
    assert np.allclose(d.sum(axis=-1), 1.0, atol=1e-9)
    meta = json.loads((tmp / "d.npy.meta.json").read_text())
    assert meta["kind"] == "probabilities"

    # header layout matches numpy's own writer byte for byte
    np.save(tmp / "ref.npy", t)
    ours = (tmp / "s.npy").read_bytes()
    theirs = (tmp / "ref.npy").read_bytes()
    assert ours == theirs, "container bytes diverge from numpy"

    print("ok")


if __name__ == "__main__":
    main()
