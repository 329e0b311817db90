#!/usr/bin/env python3
"""Regenerates the binary test fixtures under tests/fixtures/.

Outputs:
  models/avgpool_chw.onnx    (1,3,224,224) -> AveragePool 2x2 -> (1,3,112,112)
  models/avgpool_hwc.onnx    (1,224,224,3) -> same pooling, NHWC in and out
  models/gap_vector_chw.onnx (1,3,224,224) -> GlobalAveragePool -> (1,3)
  raw/with_mask/*, raw/without_mask/*   small face-like images in PNG/JPEG/BMP
  precomputed.jsonl          synthetic embeddings keyed by prepared-dataset ids

Requires: onnx, numpy, opencv-python-headless.
"""
import json
import os
import sys

import cv2
import numpy as np
import onnx
from onnx import TensorProto, helper

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "tests", "fixtures")


def save_model(graph, path):
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 11)])
    model.ir_version = 6
    onnx.checker.check_model(model)
    onnx.save(model, path)


def models():
    out = os.path.join(ROOT, "models")
    os.makedirs(out, exist_ok=True)

    x = helper.make_tensor_value_info("input", TensorProto.FLOAT, [1, 3, 224, 224])
    y = helper.make_tensor_value_info("features", TensorProto.FLOAT, [1, 3, 112, 112])
    pool = helper.make_node("AveragePool", ["input"], ["features"], kernel_shape=[2, 2], strides=[2, 2])
    save_model(helper.make_graph([pool], "avgpool_chw", [x], [y]), os.path.join(out, "avgpool_chw.onnx"))

    x = helper.make_tensor_value_info("input", TensorProto.FLOAT, [1, 224, 224, 3])
    y = helper.make_tensor_value_info("features", TensorProto.FLOAT, [1, 112, 112, 3])
    nodes = [
        helper.make_node("Transpose", ["input"], ["nchw"], perm=[0, 3, 1, 2]),
        helper.make_node("AveragePool", ["nchw"], ["pooled"], kernel_shape=[2, 2], strides=[2, 2]),
        helper.make_node("Transpose", ["pooled"], ["features"], perm=[0, 2, 3, 1]),
    ]
    save_model(helper.make_graph(nodes, "avgpool_hwc", [x], [y]), os.path.join(out, "avgpool_hwc.onnx"))

    x = helper.make_tensor_value_info("input", TensorProto.FLOAT, [1, 3, 224, 224])
    y = helper.make_tensor_value_info("embedding", TensorProto.FLOAT, [1, 3])
    nodes = [
        helper.make_node("GlobalAveragePool", ["input"], ["gap"]),
        helper.make_node("Flatten", ["gap"], ["embedding"], axis=1),
    ]
    save_model(helper.make_graph(nodes, "gap_vector_chw", [x], [y]), os.path.join(out, "gap_vector_chw.onnx"))


SUBJECTS = ["alice", "bob", "carol"]
FORMATS = {"alice": ".png", "bob": ".jpg", "carol": ".bmp"}
SIZES = {"alice": (96, 120), "bob": (64, 64), "carol": (150, 110)}
DIM = 16


def face(rng, w, h, base, masked):
    img = np.zeros((h, w, 3), np.uint8)
    img[:] = base
    cv2.ellipse(img, (w // 2, h // 2), (w // 3, h // 2 - 4), 0, 0, 360, (200, 170, 150), -1)
    cv2.circle(img, (w // 3, h // 3), max(2, w // 16), (40, 40, 40), -1)
    cv2.circle(img, (2 * w // 3, h // 3), max(2, w // 16), (40, 40, 40), -1)
    if masked:
        cv2.rectangle(img, (w // 5, h // 2), (4 * w // 5, 5 * h // 6), (230, 230, 240), -1)
    noise = rng.integers(-6, 7, size=img.shape)
    return np.clip(img.astype(int) + noise, 0, 255).astype(np.uint8)


def raw_images_and_embeddings():
    rng = np.random.default_rng(7)
    rows = []
    for folder, masked in (("with_mask", True), ("without_mask", False)):
        os.makedirs(os.path.join(ROOT, "raw", folder), exist_ok=True)
    centers = {}
    for s in SUBJECTS:
        v = rng.normal(size=DIM)
        centers[s] = v / np.linalg.norm(v)
    for s in SUBJECTS:
        w, h = SIZES[s]
        base = tuple(int(c) for c in rng.integers(30, 120, size=3))
        for folder, masked, tag in (("with_mask", True, "m"), ("without_mask", False, "u")):
            img = face(rng, w, h, base, masked)
            path = os.path.join(ROOT, "raw", folder, f"{s}__001{FORMATS[s]}")
            cv2.imwrite(path, img)
            v = centers[s] + (rng.normal(scale=0.05, size=DIM) if masked else 0.0)
            v = v / np.linalg.norm(v)
            rows.append({
                "source_id": f"{tag}:{s}__001",
                "subject": s,
                "mask_status": "masked" if masked else "unmasked",
                "values": [float(np.float32(x)) for x in v],
            })
    with open(os.path.join(ROOT, "precomputed.jsonl"), "w") as f:
        f.write(json.dumps({"format": "mufm-embeddings", "version": 1, "dimension": DIM,
                            "count": len(rows)}) + "\n")
        for r in rows:
            f.write(json.dumps(r) + "\n")


def main():
    models()
    raw_images_and_embeddings()
    return 0


if __name__ == "__main__":
    sys.exit(main())
