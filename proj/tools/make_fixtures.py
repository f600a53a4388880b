#!/usr/bin/env python3
# Copyright 2026 The invmark Authors
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes the desk-scale training images: 64 PNG crops of 64x64 pixels.

Crops come from the scikit-image sample photographs, downscaled by a random
factor first so each crop holds a scene rather than a texture patch.
"""

import argparse
import pathlib

import numpy as np
from PIL import Image
from skimage import data

SOURCES = [
    "astronaut", "chelsea", "coffee", "rocket", "immunohistochemistry",
    "hubble_deep_field", "retina", "colorwheel",
]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("out", type=pathlib.Path)
    parser.add_argument("--count", type=int, default=64)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    images = [Image.fromarray(getattr(data, name)()).convert("RGB") for name in SOURCES]
    args.out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        src = images[i % len(images)]
        side = int(rng.integers(args.size, min(src.size) + 1))
        x = int(rng.integers(0, src.size[0] - side + 1))
        y = int(rng.integers(0, src.size[1] - side + 1))
        crop = src.crop((x, y, x + side, y + side)).resize(
            (args.size, args.size), Image.Resampling.LANCZOS)
        crop.save(args.out / f"img{i:03d}.png")


if __name__ == "__main__":
    main()
