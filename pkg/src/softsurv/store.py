"""Binary persistence for posterior draws.

The format is deliberately minimal and deterministic — a fixed magic, a
sorted-keys JSON header, then little-endian packed records — so that two
runs with identical (data, config, seed) produce byte-identical files.
(Zip-based containers stamp timestamps into the archive, which breaks that
guarantee.)

Layout::

    8 bytes   magic  b"SSURV01\\n"
    4 bytes   uint32 header length
    ...       UTF-8 JSON header (family, seed, cluster ids, scaler, hyper)
    per draw: rate f8, shape f8, eta f8, frailties G x f8,
              uint32 tree count, then per tree: bandwidth f8,
              uint32 node count, preorder nodes
              (branch: u1=0, u4 coord, f8 cut; leaf: u1=1, f8 mu)
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .forest import Forest, ForestHyper, InputScaler, deserialize_tree, serialize_tree
from .sampler import PosteriorDraws

__all__ = ["save_draws", "load_draws", "StoreFormatError"]

_MAGIC = b"SSURV01\n"


class StoreFormatError(ValueError):
    """The file is not a draw store or is internally inconsistent."""


def _header(draws: PosteriorDraws) -> bytes:
    payload = {
        "family": draws.family,
        "seed": draws.seed,
        "n_draws": draws.n_draws,
        "cluster_ids": list(draws.cluster_ids),
        "scaler": {
            "time_scale": draws.scaler.time_scale,
            "cov_min": draws.scaler.cov_min.tolist(),
            "cov_range": draws.scaler.cov_range.tolist(),
        },
        "hyper": {
            "n_trees": draws.hyper.n_trees,
            "branch_gamma": draws.hyper.branch_gamma,
            "branch_beta": draws.hyper.branch_beta,
            "bandwidth_rate": draws.hyper.bandwidth_rate,
            "k": draws.hyper.k,
            "sigma_mu": draws.hyper.sigma_mu,
        },
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()


def save_draws(draws: PosteriorDraws, path) -> None:
    head = _header(draws)
    parts = [_MAGIC, struct.pack("<I", len(head)), head]
    g = draws.frailties.shape[1] if draws.frailties.ndim == 2 else 0
    for d in range(draws.n_draws):
        parts.append(
            struct.pack(
                f"<3d{g}d",
                draws.rates[d],
                draws.shapes[d],
                draws.etas[d],
                *draws.frailties[d],
            )
        )
        forest = draws.forests[d]
        parts.append(struct.pack("<I", len(forest.trees)))
        for tree in forest.trees:
            bandwidth, nodes = serialize_tree(tree)
            parts.append(struct.pack("<dI", bandwidth, len(nodes)))
            for rec in nodes:
                if rec[0] == 0:
                    parts.append(struct.pack("<BId", 0, rec[1], rec[2]))
                else:
                    parts.append(struct.pack("<Bd", 1, rec[1]))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.buf):
            raise StoreFormatError("truncated draw store")
        out = struct.unpack_from(fmt, self.buf, self.pos)
        self.pos += size
        return out


def load_draws(path) -> PosteriorDraws:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[: len(_MAGIC)] != _MAGIC:
        raise StoreFormatError(f"{path} is not a draw store (bad magic)")
    r = _Reader(buf)
    r.pos = len(_MAGIC)
    (head_len,) = r.take("<I")
    try:
        head = json.loads(buf[r.pos : r.pos + head_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StoreFormatError(f"bad draw-store header: {exc}") from exc
    r.pos += head_len

    scaler = InputScaler(
        head["scaler"]["time_scale"],
        np.asarray(head["scaler"]["cov_min"], dtype=float),
        np.asarray(head["scaler"]["cov_range"], dtype=float),
    )
    hyper = ForestHyper(**head["hyper"])
    cluster_ids = head["cluster_ids"]
    g = len(cluster_ids)
    n = head["n_draws"]

    rates, shapes, etas = np.empty(n), np.empty(n), np.empty(n)
    frailties = np.empty((n, g))
    forests = []
    for d in range(n):
        rec = r.take(f"<3d{g}d")
        rates[d], shapes[d], etas[d] = rec[:3]
        frailties[d] = rec[3:]
        (n_trees,) = r.take("<I")
        trees = []
        for _ in range(n_trees):
            bandwidth, n_nodes = r.take("<dI")
            nodes = []
            for _ in range(n_nodes):
                (tag,) = r.take("<B")
                if tag == 0:
                    coord, cut = r.take("<Id")
                    nodes.append((0, coord, cut))
                elif tag == 1:
                    nodes.append((1, r.take("<d")[0]))
                else:
                    raise StoreFormatError(f"unknown node tag {tag}")
            trees.append(deserialize_tree(bandwidth, nodes))
        forests.append(Forest(trees, hyper))
    if r.pos != len(buf):
        raise StoreFormatError("trailing bytes after final draw")

    return PosteriorDraws(
        family=head["family"],
        scaler=scaler,
        hyper=hyper,
        cluster_ids=cluster_ids,
        rates=rates,
        shapes=shapes,
        etas=etas,
        frailties=frailties,
        forests=forests,
        seed=head["seed"],
    )
