#!/usr/bin/env python3
# Copyright 2026 The cnnadapt Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Independent FLOP/parameter oracle for TinyYOLOv3-416.

Walks the upstream darknet yolov3-tiny.cfg layer listing (embedded below,
yolo/route back-end lines kept so route offsets resolve exactly as darknet
does) and writes tinyyolov3_expected.json. The C++ descriptor is never
consulted.
"""
import json
import os

CFG = """
[net]
width=416
height=416
channels=3
[convolutional]
batch_normalize=1
filters=16
size=3
stride=1
[maxpool]
size=2
stride=2
[convolutional]
batch_normalize=1
filters=32
size=3
stride=1
[maxpool]
size=2
stride=2
[convolutional]
batch_normalize=1
filters=64
size=3
stride=1
[maxpool]
size=2
stride=2
[convolutional]
batch_normalize=1
filters=128
size=3
stride=1
[maxpool]
size=2
stride=2
[convolutional]
batch_normalize=1
filters=256
size=3
stride=1
[maxpool]
size=2
stride=2
[convolutional]
batch_normalize=1
filters=512
size=3
stride=1
[maxpool]
size=2
stride=1
[convolutional]
batch_normalize=1
filters=1024
size=3
stride=1
[convolutional]
batch_normalize=1
filters=256
size=1
stride=1
[convolutional]
batch_normalize=1
filters=512
size=3
stride=1
[convolutional]
filters=255
size=1
stride=1
[yolo]
[route]
layers=-4
[convolutional]
batch_normalize=1
filters=128
size=1
stride=1
[upsample]
stride=2
[route]
layers=-1,8
[convolutional]
batch_normalize=1
filters=256
size=3
stride=1
[convolutional]
filters=255
size=1
stride=1
[yolo]
"""


def parse(text):
    sections = []
    for line in text.strip().splitlines():
        line = line.strip()
        if line.startswith("["):
            sections.append({"type": line[1:-1]})
        elif "=" in line:
            k, v = line.split("=", 1)
            sections[-1][k] = v
    return sections


def main():
    sections = parse(CFG)
    net, layers = sections[0], sections[1:]
    h, w, c = int(net["height"]), int(net["width"]), int(net["channels"])
    shapes = []
    convs = []
    for idx, s in enumerate(layers):
        t = s["type"]
        if t == "convolutional":
            k, st, nf = int(s["size"]), int(s["stride"]), int(s["filters"])
            oh, ow = -(-h // st), -(-w // st)
            convs.append({
                "weights": k * k * c * nf,
                "conv_flops": 2 * k * k * c * oh * ow * nf,
                "bn_flops": 4 * oh * ow * nf if s.get("batch_normalize") == "1" else 0,
                "bn_elements": oh * ow * nf if s.get("batch_normalize") == "1" else 0,
            })
            h, w, c = oh, ow, nf
        elif t == "maxpool":
            st = int(s["stride"])
            h, w = -(-h // st), -(-w // st)
        elif t == "upsample":
            st = int(s["stride"])
            h, w = h * st, w * st
        elif t == "route":
            refs = [int(x) for x in s["layers"].split(",")]
            refs = [idx + r if r < 0 else r for r in refs]
            h, w = shapes[refs[0]][0], shapes[refs[0]][1]
            c = sum(shapes[r][2] for r in refs)
        elif t == "yolo":
            pass
        shapes.append((h, w, c))

    out = {
        "conv_count": len(convs),
        "total_conv_weights": sum(x["weights"] for x in convs),
        "conv7_weights": convs[6]["weights"],
        "total_conv_flops": sum(x["conv_flops"] for x in convs),
        "total_bn_flops": sum(x["bn_flops"] for x in convs),
        "total_bn_elements": sum(x["bn_elements"] for x in convs),
        "per_conv_weights": [x["weights"] for x in convs],
        "per_conv_flops": [x["conv_flops"] for x in convs],
    }
    path = os.path.join(os.path.dirname(os.path.abspath(__file__)), "tinyyolov3_expected.json")
    with open(path, "w") as f:
        json.dump(out, f, indent=2)
        f.write("\n")
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
