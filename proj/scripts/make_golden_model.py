#!/usr/bin/env python3
"""Regenerates fixtures/models: a trained detection model and the golden
logits used by the inference cross-check.

Needs torch (CPU) and a built `lma` binary. The dataset is produced with the
same recipe the acceptance suite uses, and only its train/val splits are
used for fitting, so the suite's test split stays held out.
"""
import argparse
import json
import pathlib
import struct
import subprocess
import zlib

import numpy as np
import torch
import torch.nn as tnn

ROOT = pathlib.Path(__file__).resolve().parent.parent
SIDE = 128
ROW = 256


# ---- formats ----------------------------------------------------------------

def uleb(buf, pos):
    result = shift = 0
    while True:
        b = buf[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        shift += 7
        if not b & 0x80:
            return result, pos


def rle_decode(payload, n):
    out = bytearray()
    pos = 0
    while pos < len(payload):
        tag = payload[pos]
        count, pos = uleb(payload, pos + 1)
        if tag == 0:
            out += bytes(count)
        else:
            out += payload[pos:pos + count]
            pos += count
    assert len(out) == n
    return bytes(out)


def read_records(path):
    data = pathlib.Path(path).read_bytes()
    pos, out = 0, []
    while pos < len(data):
        assert data[pos:pos + 4] == b"LMA1"
        seq, reason, mem, plen = struct.unpack_from("<QBQQ", data, pos + 21)
        start = pos + 46
        body = data[pos:start + plen]
        (crc,) = struct.unpack_from("<I", data, start + plen)
        assert crc == zlib.crc32(body)
        out.append(rle_decode(data[start:start + plen], mem))
        pos = start + plen + 4
    return out


def to_image(mem):
    rows = max(1, -(-len(mem) // ROW))
    raster = np.zeros(rows * ROW, dtype=np.uint8)
    raster[:len(mem)] = np.frombuffer(mem, dtype=np.uint8)
    raster = raster.reshape(rows, ROW)
    ys = (np.arange(SIDE) * rows) // SIDE
    xs = (np.arange(SIDE) * ROW) // SIDE
    return raster[ys][:, xs].astype(np.float32) / np.float32(255.0)


# ---- model --------------------------------------------------------------------

class SmallResNet(tnn.Module):
    def __init__(self):
        super().__init__()
        self.stem = tnn.Conv2d(1, 8, 3, 1, 1)
        self.blocks = tnn.ModuleList(
            [tnn.ModuleList([tnn.Conv2d(8, 8, 3, 1, 1), tnn.Conv2d(8, 8, 3, 1, 1)]) for _ in range(2)])
        self.fc = tnn.Linear(8, 2)

    def forward(self, x):
        x = torch.relu(self.stem(x))
        for i, (a, b) in enumerate(self.blocks):
            y = b(torch.relu(a(x)))
            x = torch.relu(y + x)
            if i == 0:
                x = torch.max_pool2d(x, 2, 2)
        return self.fc(x.mean(dim=(2, 3)))


def export_lmaw(model, path):
    def f32(t):
        return t.detach().to(torch.float32).contiguous().numpy().astype("<f4").tobytes()

    layers = []
    conv = lambda m, i, o: (1, struct.pack("<5I", i, o, 3, 1, 1), f32(m.weight) + f32(m.bias),
                            m.weight.numel() + m.bias.numel())
    simple = lambda tag: (tag, b"", b"", 0)
    layers += [conv(model.stem, 1, 8), simple(2)]
    for i, (a, b) in enumerate(model.blocks):
        src = len(layers) - 1
        layers += [conv(a, 8, 8), simple(2), conv(b, 8, 8), (6, struct.pack("<I", src), b"", 0), simple(2)]
        if i == 0:
            layers.append((3, struct.pack("<2I", 2, 2), b"", 0))
    layers += [simple(4), (5, struct.pack("<2I", 8, 2), f32(model.fc.weight) + f32(model.fc.bias),
                           model.fc.weight.numel() + model.fc.bias.numel()), simple(7)]
    out = bytearray(b"LMAW") + bytes([1]) + struct.pack("<H", len(layers))
    for tag, dims, params, n in layers:
        out += bytes([tag]) + dims + struct.pack("<I", n) + params
    out += struct.pack("<I", zlib.crc32(out))
    pathlib.Path(path).write_bytes(out)


# ---- pipeline -----------------------------------------------------------------

def build_dataset(lma, work):
    work.mkdir(parents=True, exist_ok=True)
    module = work / "framegen.lma.wasm"
    subprocess.run([lma, "instrument", "--policy", "import", "--in", str(ROOT / "fixtures/workload/framegen.wasm"),
                    "--out", str(module), "--report", str(work / "instrument.json")], check=True)
    data = work / "data"
    subprocess.run([lma, "dataset", "--module", str(module), "--corpus", str(ROOT / "fixtures/workload/corpus"),
                    "--out", str(data), "--seed", "7", "--mutate-rounds", "42"], check=True,
                   env={"SOURCE_DATE_EPOCH": "0", "PATH": "/usr/bin:/bin"})
    # Guard against transform drift: compare one render with the primary tool.
    man = json.loads((data / "manifest.json").read_text())
    e = man["entries"][3]
    pgm = work / "probe.pgm"
    subprocess.run([lma, "render", "--snapshot", str(data / e["snapshot_file"]), "--index", str(e["record_index"]),
                    "--out", str(pgm)], check=True)
    mine = to_image(read_records(data / e["snapshot_file"])[e["record_index"]])
    ref = pgm.read_bytes().split(b"\n", 3)[3]
    assert ref == np.rint(mine * 255).astype(np.uint8).tobytes(), "image transform drifted from lma render"
    return data, man


def load_split(data, man, split):
    cache, xs, ys = {}, [], []
    for e in man["entries"]:
        if e["split"] != split:
            continue
        f = e["snapshot_file"]
        if f not in cache:
            cache[f] = read_records(data / f)
        xs.append(to_image(cache[f][e["record_index"]]))
        ys.append(1 if e["label"] == "Corrupted" else 0)
    return torch.tensor(np.stack(xs)).unsqueeze(1), torch.tensor(ys)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lma", default=str(ROOT / "build/tools/lma"))
    ap.add_argument("--work", default="/tmp/lma-golden")
    ap.add_argument("--epochs", type=int, default=16)
    ap.add_argument("--seed", type=int, default=1234)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    np.random.seed(args.seed)
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)
    work = pathlib.Path(args.work)
    data, man = build_dataset(args.lma, work)
    xtr, ytr = load_split(data, man, "train")
    xva, yva = load_split(data, man, "val")
    print(f"train {len(ytr)} ({int(ytr.sum())} corrupted), val {len(yva)}")

    model = SmallResNet()
    opt = torch.optim.Adam(model.parameters(), lr=3e-3)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, args.epochs)
    gen = torch.Generator().manual_seed(args.seed)
    for epoch in range(args.epochs):
        model.train()
        perm = torch.randperm(len(ytr), generator=gen)
        total = 0.0
        for i in range(0, len(perm), 32):
            idx = perm[i:i + 32]
            opt.zero_grad()
            loss = tnn.functional.cross_entropy(model(xtr[idx]), ytr[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        sched.step()
        model.eval()
        with torch.no_grad():
            acc = (model(xva).argmax(1) == yva).float().mean().item()
        print(f"epoch {epoch}: loss {total / len(ytr):.4f} val acc {acc:.4f}", flush=True)

    out = ROOT / "fixtures/models"
    out.mkdir(parents=True, exist_ok=True)
    export_lmaw(model, out / "detector.lmaw")

    # Golden cross-check inputs: random bytes as images, logits from this
    # reference forward pass.
    rng = np.random.default_rng(99)
    imgs = rng.integers(0, 256, size=(100, SIDE, SIDE), dtype=np.uint8)
    imgs[1] = 0
    imgs[2, :64] = 0
    (out / "golden_images.bin").write_bytes(imgs.tobytes())
    with torch.no_grad():
        x = torch.tensor(imgs.astype(np.float32) / np.float32(255.0)).unsqueeze(1)
        logits = model(x).tolist()
    (out / "golden_logits.json").write_text(json.dumps({"side": SIDE, "count": len(imgs), "logits": logits}, indent=2))
    print("wrote", out)


if __name__ == "__main__":
    main()
