#!/usr/bin/env python3
"""Download torchvision's ImageNet VGG-19 and write the encoder trunk
(conv1_1 .. conv5_1) as an LDST weight archive usable via `encoder_path`.

Requires torch. Usage: fetch_vgg19.py OUT.ld [--url URL]
"""
import argparse
import struct
import sys

import numpy as np

DEFAULT_URL = "https://download.pytorch.org/models/vgg19-dcbfe0e0.pth"

# torchvision `features.N` indices of the 13 convolutions up to conv5_1.
CONVS = [
    ("conv1_1", 0), ("conv1_2", 2),
    ("conv2_1", 5), ("conv2_2", 7),
    ("conv3_1", 10), ("conv3_2", 12), ("conv3_3", 14), ("conv3_4", 16),
    ("conv4_1", 19), ("conv4_2", 21), ("conv4_3", 23), ("conv4_4", 25),
    ("conv5_1", 28),
]
MEAN = [0.485, 0.456, 0.406]
STD = [0.229, 0.224, 0.225]
SCHEMA_VERSION = 1


def record(name, array):
    a = np.ascontiguousarray(array, dtype="<f4")
    out = struct.pack("<I", len(name)) + name.encode() + struct.pack("<BI", 0, a.ndim)
    out += b"".join(struct.pack("<Q", d) for d in a.shape)
    raw = a.tobytes()
    return out + struct.pack("<Q", len(raw)) + raw


def write_archive(path, tensors, text):
    body = b"".join(record(n, a) for n, a in tensors)
    blob = b"LDST" + struct.pack("<II", SCHEMA_VERSION, len(tensors)) + body
    t = text.encode()
    blob += struct.pack("<Q", len(t)) + t + b"TSDL"
    with open(path, "wb") as f:
        f.write(blob)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out")
    ap.add_argument("--url", default=DEFAULT_URL)
    args = ap.parse_args()
    try:
        import torch
    except ImportError:
        sys.exit("torch is required to read the published weights")
    state = torch.hub.load_state_dict_from_url(args.url, map_location="cpu", progress=True)
    tensors = []
    for name, idx in CONVS:
        tensors.append((f"{name}.weight", state[f"features.{idx}.weight"].numpy()))
        tensors.append((f"{name}.bias", state[f"features.{idx}.bias"].numpy()))
    tensors.append(("normalization.mean", np.array(MEAN)))
    tensors.append(("normalization.std", np.array(STD)))
    write_archive(args.out, tensors, f"source={args.url}\n")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
