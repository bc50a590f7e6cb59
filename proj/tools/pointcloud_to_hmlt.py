#!/usr/bin/env python3
"""Convert point-cloud fields (e.g. unstructured airfoil meshes) to an HMLT dataset.

Input is an .npz archive with
  positions  [L, n] shared by all samples, or [N, L, n] per sample
  theta      [N, L, c] input fields
  target     [N, L, out] steady targets, or [N, T, L, out] target frames
  bounds     optional [n, 2] per-axis (lo, hi); default is the padded bounding box
  t_in       optional scalar stored in the header
"""

import argparse
import struct
import sys

import numpy as np

MAGIC = b"HMLT"
VERSION = 1
KIND_DATASET_FILE = 1
KIND_EXTERNAL = 3


def default_bounds(pos):
    flat = pos.reshape(-1, pos.shape[-1])
    lo, hi = flat.min(axis=0), flat.max(axis=0)
    pad = 1e-6 * np.maximum(hi - lo, 1.0)
    return np.stack([lo - pad, hi + pad], axis=1)


def convert(src, dst, seed=0):
    z = np.load(src)
    pos = np.asarray(z["positions"], dtype="<f8")
    theta = np.asarray(z["theta"], dtype="<f8")
    target = np.asarray(z["target"], dtype="<f8")
    if theta.ndim != 3:
        raise ValueError("theta must be [N, L, c]")
    n, L, c = theta.shape
    if target.ndim == 3:
        t_out, out = 0, target.shape[2]
        target = target[:, None]
    elif target.ndim == 4:
        t_out, out = target.shape[1], target.shape[3]
    else:
        raise ValueError("target must be [N, L, out] or [N, T, L, out]")
    if target.shape[0] != n or target.shape[2] != L:
        raise ValueError("target does not match theta")
    per_sample = pos.ndim == 3
    if pos.shape[-2] != L or (per_sample and pos.shape[0] != n):
        raise ValueError("positions do not match theta")
    dims = pos.shape[-1]
    bounds = np.asarray(z["bounds"], dtype="<f8") if "bounds" in z else default_bounds(pos)
    if bounds.shape != (dims, 2):
        raise ValueError("bounds must be [n, 2]")
    flat = pos.reshape(-1, dims)
    if np.any(flat < bounds[:, 0]) or np.any(flat > bounds[:, 1]):
        raise ValueError("positions fall outside the bounds")
    t_in = int(z["t_in"]) if "t_in" in z else 0

    with open(dst, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HB", VERSION, KIND_DATASET_FILE))
        f.write(struct.pack("<BIIIIB", KIND_EXTERNAL, n, L, 0, 0, dims))
        f.write(struct.pack("<IIII", c, out, t_in, t_out))
        for lo, hi in bounds:
            f.write(struct.pack("<dd", lo, hi))
        f.write(struct.pack("<H", 0))
        f.write(struct.pack("<Q", seed))
        f.write(struct.pack("<B", 2 if per_sample else 1))
        if not per_sample:
            f.write(pos.tobytes())
        for i in range(n):
            if per_sample:
                f.write(pos[i].tobytes())
            f.write(theta[i].tobytes())
            f.write(target[i].tobytes())
    return n, L


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("src", help="input .npz")
    ap.add_argument("dst", help="output .hmlt")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    try:
        n, L = convert(args.src, args.dst, args.seed)
    except (ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"wrote {args.dst}: {n} samples, {L} points")
    return 0


if __name__ == "__main__":
    sys.exit(main())
