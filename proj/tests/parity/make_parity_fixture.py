"""Writes random-init torchvision trunks as DPSW containers plus DPSA reference
activations, so the C++ extractor can be checked against PyTorch without any
pretrained download.

usage: make_parity_fixture.py OUT_DIR [--images N] [--size S] [--seed K]
"""

import argparse
import pathlib
import struct

import numpy as np
import torch
import torchvision

# Input scaling of the reference setup: v -> (2v - 1 - shift) / scale.
SHIFT = (-0.030, -0.088, -0.188)
SCALE = (0.458, 0.448, 0.450)

# torchvision feature indices whose outputs are tapped.
TRUNKS = {
    "alexnet": (torchvision.models.alexnet, [1, 4, 7, 9, 11]),
    "vgg16": (torchvision.models.vgg16, [3, 8, 15, 22, 29]),
    "squeezenet": (torchvision.models.squeezenet1_1, [1, 4, 7, 9, 10, 11, 12]),
}


def write_container(path, backbone, features):
    records = [(n, p.detach().float().numpy()) for n, p in features.named_parameters()]
    out = bytearray(b"DPSW")
    out += struct.pack("<H", 1)
    out += struct.pack("<B", len(backbone)) + backbone.encode()
    out += struct.pack("<6f", *SHIFT, *SCALE)
    out += struct.pack("<I", len(records))
    for name, arr in records:
        name = "features." + name
        out += struct.pack("<H", len(name)) + name.encode()
        out += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.astype("<f4").tobytes()
    path.write_bytes(bytes(out))


def test_images(rng, count, size):
    yy, xx = np.mgrid[0:size, 0:size] / size
    images = []
    for i in range(count):
        if i % 2 == 0:
            img = rng.random((size, size, 3))
        else:
            f = rng.uniform(1, 6, size=3)
            img = np.stack([0.5 + 0.5 * np.sin(2 * np.pi * (f[c] * xx + (c + 1) * yy)) for c in range(3)], -1)
        images.append(img.astype(np.float32))
    return images


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--images", type=int, default=10)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    images = test_images(np.random.default_rng(args.seed), args.images, args.size)
    shift = torch.tensor(SHIFT, dtype=torch.float64).view(1, 3, 1, 1)
    scale = torch.tensor(SCALE, dtype=torch.float64).view(1, 3, 1, 1)

    for backbone, (ctor, taps) in TRUNKS.items():
        torch.manual_seed(args.seed)
        features = ctor(weights=None).features[: taps[-1] + 1].eval()
        write_container(args.out_dir / f"{backbone}.dpsw", backbone, features)
        features = features.double()

        dump = bytearray(b"DPSA") + struct.pack("<H", 1)
        dump += struct.pack("<B", len(backbone)) + backbone.encode()
        dump += struct.pack("<I", len(images))
        with torch.no_grad():
            for img in images:
                dump += struct.pack("<II", args.size, args.size) + img.astype("<f4").tobytes()
                # float32 first, matching the C++ path, then promoted exactly.
                x = torch.from_numpy(img).permute(2, 0, 1).unsqueeze(0).double()
                x = ((2 * x - 1 - shift.float().double()) / scale.float().double())
                outs = []
                for i, layer in enumerate(features):
                    x = layer(x)
                    if i in taps:
                        outs.append(x[0].float().numpy())
                dump += struct.pack("<I", len(outs))
                for t in outs:
                    dump += struct.pack("<3I", *t.shape) + t.astype("<f4").tobytes()
        (args.out_dir / f"{backbone}.dpsa").write_bytes(bytes(dump))
        print(f"{backbone}: {len(images)} images, {len(taps)} taps")


if __name__ == "__main__":
    main()
