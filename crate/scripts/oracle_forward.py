#!/usr/bin/env python3
"""Reference preprocessing and forward pass, written from the file formats
alone. Regenerates fixtures/golden/expected.json.

    python3 scripts/oracle_forward.py [--check]
"""
import hashlib
import json
import math
import re
import struct
import sys
try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib
from fractions import Fraction
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
GOLDEN = ROOT / "fixtures" / "golden"
MODELS = ROOT / "fixtures" / "models"
PAYLOADS = ["kardia.json", "apple_watch.ecg.xml", "fitbit.json"]
PROBE = [0, 1, 2, 777, 2500, 4321, 4999]

MODEL_RATE = 500
WINDOW = 5000
BASELINE_S = 0.6


def parse_payload(raw):
    text = raw.decode("utf-8")
    if text.lstrip().startswith("<"):
        rate = int(re.search(r'rateHz="(\d+)"', text).group(1))
        body = re.search(r"<samples>(.*?)</samples>", text, re.S).group(1)
        uv = [int(t) for t in body.split()]
        device = "apple_watch"
    else:
        rec = json.loads(text)
        rate, uv, device = rec["rate"], rec["samples_uV"], rec["device"]
    return device, rate, np.array(uv, dtype=np.float64) / 1000.0


def baseline_window(rate):
    target = BASELINE_S * rate
    lo = int(math.floor(target))
    if lo % 2 == 0:
        # between lo-1 and lo+1, equidistant unless target is off-integer
        return lo + 1 if target - (lo - 1) >= (lo + 1) - target else lo - 1
    return lo if target - lo < (lo + 2) - target else lo + 2


def running_median(x, w):
    h = w // 2
    n = len(x)
    out = np.empty(n)
    for i in range(n):
        out[i] = np.median(x[max(0, i - h) : min(n, i + h + 1)])
    return x - out


def resample(x, src, dst):
    if src == dst:
        return x.copy()
    n = len(x)
    n_out = int(Fraction(n * dst, src) + Fraction(1, 2))
    out = np.empty(n_out)
    for k in range(n_out):
        pos = Fraction(k * src, dst)
        i = int(pos)
        if i >= n - 1:
            out[k] = x[-1]
        else:
            f = float(pos - i)
            out[k] = x[i] + (x[i + 1] - x[i]) * f
    return out


def preprocess(rate, mv):
    cleaned = running_median(mv, baseline_window(rate))
    up = resample(cleaned, rate, MODEL_RATE)
    start = (len(up) - WINDOW) // 2
    cut = up[start : start + WINDOW]
    z = (cut - cut.mean()) / cut.std()
    return z, start / MODEL_RATE


def read_ecgw(path):
    raw = path.read_bytes()
    assert raw[:4] == b"ECGW"
    version, hlen = struct.unpack("<II", raw[4:12])
    assert version == 1
    header = json.loads(raw[12 : 12 + hlen])
    off = 12 + hlen
    tensors = {}
    for t in header["tensors"]:
        count = int(np.prod(t["shape"]))
        tensors[t["name"]] = np.frombuffer(raw, dtype="<f4", count=count, offset=off).astype(np.float64).reshape(t["shape"])
        off += 4 * count
    assert off == len(raw)
    return header, tensors


def bn(x, t, prefix, eps):
    # x: [channels, ...]
    shape = (-1,) + (1,) * (x.ndim - 1)
    g, b, m, v = (t[f"{prefix}.bn.{p}"].reshape(shape) for p in ("gamma", "beta", "mean", "var"))
    return (x - m) / np.sqrt(v + eps) * g + b


def forward(header, t, z):
    eps = header["batch_norm_eps"]
    x = z.reshape(1, -1)
    for i, c in enumerate(header["conv"], 1):
        w, bias = t[f"conv{i}.weight"], t[f"conv{i}.bias"]
        k = c["kernel_length"]
        pad = (k - 1) // 2
        length = x.shape[1]
        xp = np.pad(x, ((0, 0), (pad, k - 1 - pad)))
        # cross-correlation: y[o, l] = b[o] + sum_c sum_j w[o,c,j] x[c, l + j - pad]
        taps = np.stack([xp[:, j : j + length] for j in range(k)], axis=-1)
        y = np.einsum("ocj,clj->ol", w, taps) + bias[:, None]
        y = np.maximum(bn(y, t, f"conv{i}", eps), 0.0)
        p = c["pool_length"]
        keep = (length // p) * p
        x = y[:, :keep].reshape(y.shape[0], -1, p).max(axis=-1)
    h = x.T.reshape(-1)
    for i, _ in enumerate(header["dense"], 1):
        h = t[f"dense{i}.weight"] @ h + t[f"dense{i}.bias"]
        h = np.maximum(bn(h, t, f"dense{i}", eps), 0.0)
    logit = float((t["output.weight"] @ h + t["output.bias"])[0])
    ens = header.get("ensemble")
    if ens is None:
        return sigmoid(logit)
    score = ens["base_score"]
    for tree in ens["trees"]:
        nodes, i = tree["nodes"], 0
        while "leaf" not in nodes[i]:
            n = nodes[i]
            i = n["left"] if h[n["feature"]] <= n["threshold"] else n["right"]
        score += nodes[i]["leaf"]
    return sigmoid(score)


def sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v)) if v >= 0 else math.exp(v) / (1.0 + math.exp(v))


def main():
    registry = tomllib.loads((MODELS / "models.toml").read_text())["models"]
    models = [(m["model_id"], *read_ecgw(MODELS / m["weight_file"])) for m in registry]
    cases = []
    for name in PAYLOADS:
        raw = (GOLDEN / name).read_bytes()
        device, rate, mv = parse_payload(raw)
        z, start_s = preprocess(rate, mv)
        cases.append(
            {
                "file": name,
                "device": device,
                "recording_id": hashlib.sha256(raw).hexdigest(),
                "n_samples": len(mv),
                "window_start_s": start_s,
                "window_probe": {str(i): float(z[i]) for i in PROBE},
                "window_abs_sum": float(np.abs(z).sum()),
                "probabilities": {mid: forward(h, t, z) for mid, h, t in models},
            }
        )
    text = json.dumps({"cases": cases}, indent=2) + "\n"
    out = GOLDEN / "expected.json"
    if "--check" in sys.argv:
        sys.exit(0 if out.read_text() == text else "expected.json is stale")
    out.write_text(text)
    print(text)


if __name__ == "__main__":
    main()
