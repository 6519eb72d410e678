"""Euclidean nearest-neighbour search over image descriptors.

Two engines share one interface: ``EXACT`` scans every stored vector and is
the reference; ``HKMEANS`` builds a hierarchical k-means tree and answers
queries with a best-bin-first traversal that scores at most ``max_checks``
leaf items.  Results are sorted by distance with ties broken by ascending
image id, so both engines agree exactly once the tree is fully explored.
"""

from __future__ import annotations

import enum
import heapq
import io
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError

MAGIC = b"VIDTAGIX"
FORMAT_VERSION = 1
_CHUNK = 4096


class IndexMode(str, enum.Enum):
    EXACT = "exact"
    HKMEANS = "hkmeans"


class Normalization(str, enum.Enum):
    NONE = "none"
    L1 = "l1"
    L2 = "l2"


def normalize_descriptors(X: np.ndarray, mode: Normalization | str = Normalization.L1) -> np.ndarray:
    """Scale each row to unit L1/L2 norm; all-zero rows are left alone."""
    mode = Normalization(mode)
    X = np.asarray(X, dtype=np.float32)
    if mode is Normalization.NONE:
        return X.copy()
    if mode is Normalization.L1:
        norms = np.abs(X).sum(axis=-1, keepdims=True, dtype=np.float64)
    else:
        norms = np.sqrt(np.square(X, dtype=np.float64).sum(axis=-1, keepdims=True))
    norms[norms == 0] = 1.0
    return (X / norms).astype(np.float32)


@dataclass(frozen=True)
class HkmParams:
    branching: int = 32
    max_leaf: int = 64
    max_checks: int = 512
    restarts: int = 1
    seed: int = 0
    iterations: int = 25

    def __post_init__(self):
        if self.branching < 2:
            raise ConfigError("branching must be >= 2")
        if self.max_leaf < 1:
            raise ConfigError("max_leaf must be >= 1")
        if self.max_checks < 1:
            raise ConfigError("max_checks must be >= 1")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")


@dataclass(frozen=True)
class NeighborList:
    entries: tuple  # ((image_id, distance), ...)
    indices: tuple = ()  # positions in the indexed set, parallel to entries

    def __len__(self):
        return len(self.entries)

    @property
    def ids(self):
        return [e[0] for e in self.entries]

    @property
    def distances(self):
        return [e[1] for e in self.entries]


def sq_distances(X: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances from q to each row of X, in float64.

    Each row is reduced independently, so a row's value does not depend on
    which other rows are passed alongside it.
    """
    out = np.empty(len(X), dtype=np.float64)
    for lo in range(0, len(X), _CHUNK):
        diff = X[lo : lo + _CHUNK].astype(np.float64) - q
        out[lo : lo + _CHUNK] = np.add.reduce(diff * diff, axis=1)
    return out


def _pairwise_sq(X: np.ndarray, C: np.ndarray, x_sq: np.ndarray) -> np.ndarray:
    d = x_sq[:, None] - 2.0 * (X @ C.T).astype(np.float64) + np.square(C, dtype=np.float64).sum(1)[None, :]
    np.maximum(d, 0.0, out=d)
    return d


def kmeans(X: np.ndarray, k: int, rng: np.random.Generator, iterations: int = 25):
    """Lloyd's k-means with farthest-point seeding.

    Returns ``(labels, centers, inertia)``.  Empty clusters are re-seeded with
    the member of the largest cluster farthest from its centre.
    """
    n = len(X)
    k = min(k, n)
    Xf = np.asarray(X, dtype=np.float32)
    x_sq = np.square(Xf, dtype=np.float64).sum(1)

    first = int(rng.integers(n))
    chosen = [first]
    mind = _pairwise_sq(Xf, Xf[[first]], x_sq)[:, 0]
    for _ in range(1, k):
        nxt = int(np.argmax(mind))
        if mind[nxt] <= 0.0:
            break
        chosen.append(nxt)
        np.minimum(mind, _pairwise_sq(Xf, Xf[[nxt]], x_sq)[:, 0], out=mind)
    centers = Xf[chosen].astype(np.float64)
    k = len(centers)

    labels = None
    for _ in range(iterations):
        d = _pairwise_sq(Xf, centers.astype(np.float32), x_sq)
        new = np.argmin(d, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        sizes = np.bincount(labels, minlength=k)
        for j in range(k):
            if sizes[j]:
                centers[j] = Xf[labels == j].mean(axis=0, dtype=np.float64)
        for j in np.flatnonzero(sizes == 0):
            big = int(np.argmax(sizes))
            members = np.flatnonzero(labels == big)
            far = members[int(np.argmax(sq_distances(Xf[members], centers[big])))]
            centers[j] = Xf[far]
            labels[far] = j
            sizes[big] -= 1
            sizes[j] = 1
    d = _pairwise_sq(Xf, centers.astype(np.float32), x_sq)
    labels = np.argmin(d, axis=1)
    inertia = float(d[np.arange(n), labels].sum())
    return labels, centers, inertia


class DescriptorIndex:
    """Immutable search structure over ``(id, descriptor)`` items."""

    def __init__(self, mode, ids, vectors, params, tree=None, meta=None):
        self.mode = IndexMode(mode)
        self.meta = dict(meta or {})  # free-form build context, persisted with the index
        self.item_ids = list(ids)
        self.vectors = vectors
        self.params = params
        self.dim = vectors.shape[1]
        # rank of each item's id in ascending id order; used for tie-breaks
        self._id_rank = np.empty(len(ids), dtype=np.int64)
        self._id_rank[np.argsort(np.array(self.item_ids, dtype=object), kind="stable")] = np.arange(len(ids))
        if tree is None:
            tree = _empty_tree(len(ids), self.dim)
        self._tree = tree

    def __len__(self):
        return len(self.item_ids)

    # tree inspection -------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return len(self._tree["child_count"])

    def leaves(self) -> list[np.ndarray]:
        t = self._tree
        return [
            t["order"][t["item_start"][i] : t["item_start"][i] + t["item_count"][i]]
            for i in range(self.n_nodes)
            if t["child_count"][i] == 0
        ]

    def structure(self) -> tuple:
        """Hashable description of the tree shape and leaf contents."""
        t = self._tree
        return tuple(
            (int(t["child_start"][i]), int(t["child_count"][i]), int(t["item_start"][i]), int(t["item_count"][i]))
            for i in range(self.n_nodes)
        ) + (tuple(int(x) for x in t["order"]),)

    # queries -----------------------------------------------------------
    def _rank(self, cand: np.ndarray, q: np.ndarray, K: int) -> NeighborList:
        d2 = sq_distances(self.vectors[cand], q)
        if len(cand) > K:
            kth = np.partition(d2, K - 1)[K - 1]
            keep = d2 <= kth
            cand, d2 = cand[keep], d2[keep]
        order = np.lexsort((self._id_rank[cand], d2))[:K]
        sel = cand[order]
        dist = np.sqrt(d2[order])
        return NeighborList(
            tuple((self.item_ids[i], float(x)) for i, x in zip(sel, dist)),
            tuple(int(i) for i in sel),
        )

    def _bbf_candidates(self, q: np.ndarray, K: int) -> np.ndarray:
        t = self._tree
        centers = t["centers"]
        max_checks = max(self.params.max_checks, K)
        heap = [(0.0, 0, 0)]
        seq = 1
        found, checks = [], 0
        while heap and (checks < max_checks or checks < K):
            _, _, node = heapq.heappop(heap)
            while t["child_count"][node]:
                lo = t["child_start"][node]
                kids = range(lo, lo + t["child_count"][node])
                dk = sq_distances(centers[lo : lo + len(kids)], q)
                best = int(np.argmin(dk))
                for j, kid in enumerate(kids):
                    if j != best:
                        heapq.heappush(heap, (float(dk[j]), seq, kid))
                        seq += 1
                node = kids[best]
            s, c = t["item_start"][node], t["item_count"][node]
            found.append(t["order"][s : s + c])
            checks += int(c)
        return np.concatenate(found)

    def query(self, q, K: int) -> NeighborList:
        if K < 1:
            raise ConfigError("K must be >= 1")
        q = np.asarray(q, dtype=np.float64).ravel()
        if len(q) != self.dim:
            raise InputError(f"query has {len(q)} dims, index has {self.dim}")
        K = min(K, len(self))
        if self.mode is IndexMode.EXACT:
            cand = np.arange(len(self))
        else:
            cand = self._bbf_candidates(q, K)
        return self._rank(cand, q, K)

    # persistence -------------------------------------------------------
    def save(self, path) -> None:
        header = {
            "mode": self.mode.value,
            "dim": self.dim,
            "n": len(self),
            "n_nodes": self.n_nodes,
            "params": asdict(self.params),
            "ids": self.item_ids,
            "meta": self.meta,
        }
        hb = json.dumps(header).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", FORMAT_VERSION, len(hb)))
            fh.write(hb)
            fh.write(np.ascontiguousarray(self.vectors, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(self._tree["centers"], dtype="<f8").tobytes())
            for key in ("child_start", "child_count", "item_start", "item_count", "order"):
                fh.write(np.ascontiguousarray(self._tree[key], dtype="<i8").tobytes())

    @classmethod
    def load(cls, path) -> "DescriptorIndex":
        data = Path(path).read_bytes()
        if data[:8] != MAGIC:
            raise InputError(f"{path}: not an index file")
        version, hlen = struct.unpack_from("<II", data, 8)
        if version != FORMAT_VERSION:
            raise InputError(f"{path}: unsupported index version {version}")
        header = json.loads(data[16 : 16 + hlen].decode("utf-8"))
        buf = io.BytesIO(data[16 + hlen :])
        n, dim, nn = header["n"], header["dim"], header["n_nodes"]

        def take(dtype, count, shape):
            raw = buf.read(np.dtype(dtype).itemsize * count)
            return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()

        vectors = take("<f4", n * dim, (n, dim)).astype(np.float32)
        tree = {"centers": take("<f8", nn * dim, (nn, dim)).astype(np.float64)}
        for key in ("child_start", "child_count", "item_start", "item_count"):
            tree[key] = take("<i8", nn, (nn,)).astype(np.int64)
        tree["order"] = take("<i8", n, (n,)).astype(np.int64)
        return cls(header["mode"], header["ids"], vectors, HkmParams(**header["params"]), tree, header.get("meta"))


def _empty_tree(n: int, dim: int) -> dict:
    return {
        "centers": np.zeros((1, dim)),
        "child_start": np.zeros(1, dtype=np.int64),
        "child_count": np.zeros(1, dtype=np.int64),
        "item_start": np.zeros(1, dtype=np.int64),
        "item_count": np.array([n], dtype=np.int64),
        "order": np.arange(n, dtype=np.int64),
    }


def _build_tree(X: np.ndarray, params: HkmParams) -> dict:
    rng = np.random.default_rng(params.seed)
    n, dim = X.shape
    nodes = [{"items": np.arange(n), "center": X.mean(axis=0, dtype=np.float64)}]
    queue = [0]
    head = 0
    while head < len(queue):
        i = queue[head]
        head += 1
        items = nodes[i]["items"]
        if len(items) <= params.max_leaf:
            continue
        best = None
        for _ in range(params.restarts):
            labels, centers, inertia = kmeans(X[items], params.branching, rng, params.iterations)
            if best is None or inertia < best[2]:
                best = (labels, centers, inertia)
        labels, centers, _ = best
        groups = [np.flatnonzero(labels == j) for j in range(len(centers))]
        groups = [(j, g) for j, g in enumerate(groups) if len(g)]
        if len(groups) < 2:
            continue  # indivisible (e.g. duplicate vectors): keep as leaf
        nodes[i]["children"] = list(range(len(nodes), len(nodes) + len(groups)))
        for j, g in groups:
            nodes.append({"items": items[g], "center": centers[j]})
            queue.append(len(nodes) - 1)

    nn = len(nodes)
    tree = {
        "centers": np.stack([nd["center"] for nd in nodes]).astype(np.float64),
        "child_start": np.zeros(nn, dtype=np.int64),
        "child_count": np.zeros(nn, dtype=np.int64),
        "item_start": np.zeros(nn, dtype=np.int64),
        "item_count": np.zeros(nn, dtype=np.int64),
    }
    order, pos = [], 0
    for i, nd in enumerate(nodes):
        kids = nd.get("children")
        if kids:
            tree["child_start"][i] = kids[0]
            tree["child_count"][i] = len(kids)
        else:
            tree["item_start"][i] = pos
            tree["item_count"][i] = len(nd["items"])
            order.append(nd["items"])
            pos += len(nd["items"])
    tree["order"] = np.concatenate(order).astype(np.int64)
    return tree


def build_from_matrix(ids, X, params: HkmParams | None = None, mode=IndexMode.HKMEANS) -> DescriptorIndex:
    params = params or HkmParams()
    ids = [str(i) for i in ids]
    X = np.ascontiguousarray(X, dtype=np.float32)
    if not ids:
        raise InputError("cannot index an empty item set")
    if X.ndim != 2 or len(X) != len(ids):
        raise InputError("descriptor matrix does not match the id list")
    if len(set(ids)) != len(ids):
        seen, dup = set(), None
        for i in ids:
            if i in seen:
                dup = i
                break
            seen.add(i)
        raise InputError("duplicate id in index", item=dup)
    mode = IndexMode(mode)
    tree = _build_tree(X, params) if mode is IndexMode.HKMEANS else None
    return DescriptorIndex(mode, ids, X, params, tree)


def build(items, params: HkmParams | None = None, mode=IndexMode.HKMEANS) -> DescriptorIndex:
    """Index a sequence of ``(id, descriptor)`` pairs."""
    items = list(items)
    if not items:
        raise InputError("cannot index an empty item set")
    dims = {len(v) for _, v in items}
    if len(dims) != 1:
        raise InputError("descriptors differ in length")
    ids = [i for i, _ in items]
    X = np.stack([np.asarray(v, dtype=np.float32) for _, v in items])
    return build_from_matrix(ids, X, params, mode)


def query_knn(index: DescriptorIndex, q, K: int) -> NeighborList:
    return index.query(q, K)
