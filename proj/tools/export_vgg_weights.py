#!/usr/bin/env python3
"""Convert torchvision VGG-16/VGG-19 ImageNet weights to the DSWB file read by deshadow.

Only the `features.*` convolution tensors are written. Prints the SHA-256 of the
output so it can be pinned with backbone.<variant>.sha256.

    python3 tools/export_vgg_weights.py --variant vgg19 --out vgg19.dsw
    python3 tools/export_vgg_weights.py --variant vgg16 --state-dict vgg16-397923af.pth --out vgg16.dsw
"""

import argparse
import hashlib
import struct
import sys

import torch
import torchvision


def load_state_dict(variant, path):
    if path:
        return torch.load(path, map_location="cpu")
    weights = {"vgg16": torchvision.models.VGG16_Weights.IMAGENET1K_V1,
               "vgg19": torchvision.models.VGG19_Weights.IMAGENET1K_V1}[variant]
    return getattr(torchvision.models, variant)(weights=weights).state_dict()


def write_dswb(path, tensors):
    with open(path, "wb") as f:
        f.write(b"DSWB")
        f.write(struct.pack("<II", 1, len(tensors)))
        for name, t in tensors:
            t = t.detach().to(torch.float32).contiguous().cpu()
            raw = name.encode()
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", t.dim()))
            f.write(struct.pack("<%dq" % t.dim(), *t.shape))
            f.write(t.numpy().astype("<f4").tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--variant", choices=["vgg16", "vgg19"], required=True)
    ap.add_argument("--state-dict", help="local torchvision .pth; downloads when omitted")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    state = load_state_dict(args.variant, args.state_dict)
    tensors = [(k, v) for k, v in state.items() if k.startswith("features.")]
    if not tensors:
        sys.exit("error: no features.* tensors in state dict")
    write_dswb(args.out, tensors)
    with open(args.out, "rb") as f:
        print(hashlib.sha256(f.read()).hexdigest() + "  " + args.out)


if __name__ == "__main__":
    main()
