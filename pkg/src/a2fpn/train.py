"""Desk-scale training check: synthetic shape masks, a 1×1 head on the
finest pyramid output, per-pixel binary cross-entropy plus the orthogonality
penalty, momentum SGD.

The task exists to drive every backward path with real gradients, not to
benchmark anything.  The batch gradient is reduced in a fixed image order,
so trajectories are bit-identical for any A2FPN_THREADS value.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .mgc import orthogonal_reg_grads, orthogonal_reg_loss
from .nn_ops import bilinear_upsample_bwd, bilinear_upsample_fwd, conv2d_bwd, conv2d_fwd
from .pyramid import (
    PyramidConfig,
    _conv_view,
    _mgc_view,
    forward_a2fpn_bwd,
    forward_a2fpn_fwd,
    init_params,
    toy_backbone_bwd,
    toy_backbone_fwd,
)
from .tensor_core import sigmoid

TRAIN_ARCHS = ("a2fpn", "a2fpn_lite")
MOMENTUM = 0.9
DEFAULT_STEPS = 500
DEFAULT_LR = 0.005
BATCH = 8


def toy_train_config(arch="a2fpn", seed=0):
    """Small widths so 500 full-batch steps stay in desk-scale time."""
    return PyramidConfig(
        arch=arch,
        c=16,
        a=4,
        c_m=16,
        backbone=(16, 32, 64, 64),
        image_size=(64, 64),
        seed=seed,
    )


def synth_shapes(cfg, count=BATCH):
    """Images of solid rectangles and disks at mixed scales on a noisy
    background, plus the binary union mask of their supports."""
    h, w = cfg.image_size
    rng = np.random.default_rng([cfg.seed, 0x5A])
    dt = cfg.np_dtype
    images = np.zeros((count, 3, h, w), dtype=dt)
    masks = np.zeros((count, h, w), dtype=dt)
    ys, xs = np.mgrid[0:h, 0:w]
    for i in range(count):
        img = rng.normal(0.0, 0.05, (3, h, w))
        mask = np.zeros((h, w), dtype=bool)
        for _ in range(int(rng.integers(1, 4))):
            cy = rng.uniform(0.2, 0.8) * h
            cx = rng.uniform(0.2, 0.8) * w
            size = rng.uniform(0.10, 0.30) * min(h, w)
            if rng.integers(2):
                ry, rx = size, size * rng.uniform(0.6, 1.6)
                inside = (np.abs(ys - cy) <= ry) & (np.abs(xs - cx) <= rx)
            else:
                inside = (ys - cy) ** 2 + (xs - cx) ** 2 <= size ** 2
            color = rng.uniform(0.4, 1.0, 3)
            img[:, inside] += color[:, None]
            mask |= inside
        images[i] = img.astype(dt)
        masks[i] = mask.astype(dt)
    return images, masks


def _bce_with_logits(z, target):
    # max(z,0) - z*y + log(1 + exp(-|z|)) is exp-overflow safe
    return float(np.mean(np.maximum(z, 0.0) - z * target + np.log1p(np.exp(-np.abs(z)))))


def image_pass(image, mask, store, cfg):
    """Forward + backward for one image; returns (task loss, param grads)."""
    levels, bb_cache = toy_backbone_fwd(image, store)
    outs, neck_cache = forward_a2fpn_fwd(levels, store, cfg)
    z4, head_cache = conv2d_fwd(_conv_view(store, "head"), outs[0].data)
    z2, up1 = bilinear_upsample_fwd(z4)
    z1, up2 = bilinear_upsample_fwd(z2)
    z = z1[0]
    loss = _bce_with_logits(z, mask)

    gz = ((sigmoid(z) - mask) / z.size).astype(z1.dtype)
    g2 = bilinear_upsample_bwd(up2, gz[None])
    g4 = bilinear_upsample_bwd(up1, g2)
    gp2, gw_head, gb_head = conv2d_bwd(head_cache, g4)
    gouts = [gp2] + [np.zeros_like(o.data) for o in outs[1:]]
    glevels, pg = forward_a2fpn_bwd(neck_cache, gouts)
    _, bb_pg = toy_backbone_bwd(bb_cache, glevels)
    pg.update(bb_pg)
    pg["head.weight"] = gw_head
    pg["head.bias"] = gb_head
    return loss, pg


def _batch_pass(images, masks, store, cfg, threads):
    n = images.shape[0]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(lambda i: image_pass(images[i], masks[i], store, cfg), range(n)))
    else:
        results = [image_pass(images[i], masks[i], store, cfg) for i in range(n)]
    # reduce in image order regardless of which worker finished first
    loss = 0.0
    total = {}
    for item_loss, pg in results:
        loss += item_loss
        for key, g in pg.items():
            total[key] = total[key] + g if key in total else g
    inv = 1.0 / n
    for key in total:
        total[key] = total[key] * inv
    return loss * inv, total


def _objective_grads(images, masks, store, cfg, threads):
    task, grads = _batch_pass(images, masks, store, cfg, threads)
    view = _mgc_view(store, cfg)
    reg = orthogonal_reg_loss(view)
    for lvl, g in orthogonal_reg_grads(view).items():
        key = f"mgc.l{lvl}.psi.weight"
        grads[key] = grads[key] + g if key in grads else g
    return task + reg, reg, grads


@dataclass
class TrainReport:
    arch: str
    steps: int
    lr: float
    seed: int
    rows: list = field(default_factory=list)  # (step, loss, reg_loss)
    diverged: bool = False
    seconds: float = 0.0

    @property
    def initial_loss(self):
        return self.rows[0][1] if self.rows else float("nan")

    @property
    def final_loss(self):
        return self.rows[-1][1] if self.rows else float("nan")

    @property
    def converged(self):
        return (
            not self.diverged
            and len(self.rows) > 1
            and np.isfinite(self.final_loss)
            and self.final_loss < 0.1 * self.initial_loss
        )

    def to_dict(self):
        return {
            "arch": self.arch,
            "steps": self.steps,
            "lr": self.lr,
            "seed": self.seed,
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
            "converged": bool(self.converged),
            "diverged": self.diverged,
            "seconds": self.seconds,
        }


def write_loss_csv(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,loss,reg_loss\n")
        for step, loss, reg in rows:
            fh.write(f"{step},{loss!r},{reg!r}\n")


def thread_count():
    try:
        return max(1, int(os.environ.get("A2FPN_THREADS", "1")))
    except ValueError:
        return 1


def train_toy(cfg, steps=DEFAULT_STEPS, lr=DEFAULT_LR, store=None, data=None):
    """Full-batch momentum SGD; returns (TrainReport, trained store).

    The loss column holds the total objective (task + penalty); a final row
    at index `steps` records the post-training loss the convergence check
    reads.  Non-finite loss stops the run and marks the report diverged.
    """
    if cfg.arch not in TRAIN_ARCHS:
        raise ValueError(f"training covers {TRAIN_ARCHS}, not {cfg.arch!r}")
    t0 = time.perf_counter()
    threads = thread_count()
    if store is None:
        store = init_params(cfg, with_backbone=True, with_head=True)
    images, masks = synth_shapes(cfg) if data is None else data
    velocity = {k: np.zeros_like(v) for k, v in store.items()}
    report = TrainReport(arch=cfg.arch, steps=steps, lr=lr, seed=cfg.seed)

    for step in range(steps + 1):
        loss, reg, grads = _objective_grads(images, masks, store, cfg, threads)
        report.rows.append((step, loss, reg))
        if not np.isfinite(loss):
            report.diverged = True
            break
        if step == steps:
            break
        for key in store:
            g = grads.get(key)
            if g is None:
                continue
            v = velocity[key]
            v *= MOMENTUM
            v += g
            store[key] -= lr * v
    report.seconds = time.perf_counter() - t0
    return report, store
