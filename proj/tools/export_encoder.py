#!/usr/bin/env python3
"""Export a pretrained EfficientNet-b4 feature pyramid as TorchScript.

The result is what `--encoder efficientnet-b4 --encoder-weights <file>` loads: forward(x) takes
a normalized [B, 3, H, W] batch and returns the five maps at strides 2, 4, 8, 16 and 32.
"""
import argparse
from typing import List

import torch
import torchvision


class Pyramid(torch.nn.Module):
    __constants__ = ["taps"]

    def __init__(self, net):
        super().__init__()
        # torchvision block indices whose outputs sit at strides 2..32 (24, 32, 56, 160, 448 channels)
        self.taps = [1, 2, 3, 5, 7]
        self.blocks = net.features[:8]

    def forward(self, x):
        out: List[torch.Tensor] = []
        for i, block in enumerate(self.blocks):
            x = block(x)
            if i in self.taps:
                out.append(x)
        return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--state-dict", help="local torchvision efficientnet_b4 state dict; default downloads ImageNet weights")
    args = ap.parse_args()

    if args.state_dict:
        net = torchvision.models.efficientnet_b4()
        net.load_state_dict(torch.load(args.state_dict, map_location="cpu"))
    else:
        net = torchvision.models.efficientnet_b4(weights=torchvision.models.EfficientNet_B4_Weights.IMAGENET1K_V1)
    model = Pyramid(net).eval()
    scripted = torch.jit.script(model)
    with torch.no_grad():
        shapes = [tuple(t.shape) for t in scripted(torch.zeros(1, 3, 256, 256))]
    scripted.save(args.out)
    print("saved", args.out, shapes)


if __name__ == "__main__":
    main()
