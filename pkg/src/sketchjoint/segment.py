"""Per-face feature fields, agglomerative cluster trees, and IoU-based
movable-part selection against a predicted 2D mask.

The tree is built over edge-connected face groups only (adjacent clusters
merge), which guarantees every node is an extractable connected part. An
imported feature field (tensor block, shape [F, D]) takes precedence over
the built-in geometric descriptor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import meshops
from .errors import EmptyMaskError, EmptyPartError, InvalidInputError, NoPartFoundError
from .model import Mesh, Part
from .render import GBuffer, read_tensor_block

SOURCE_BUILTIN = "builtin-geometric"
SOURCE_IMPORTED = "imported"

# Built-in descriptor block weights: unit normal, centroid, mean dihedral.
FEATURE_WEIGHTS = (1.0, 0.5, 1.0)


@dataclass(frozen=True)
class FeatureField:
    """Per-face feature vectors, F x D."""

    values: np.ndarray
    source: str = SOURCE_BUILTIN

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise InvalidInputError("feature field must be (F, D)")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("feature field contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def validate_against(self, mesh: Mesh) -> None:
        if len(self.values) != mesh.n_faces:
            raise InvalidInputError(
                f"feature rows {len(self.values)} != face count {mesh.n_faces}"
            )


def builtin_features(
    mesh: Mesh, weights: tuple[float, float, float] = FEATURE_WEIGHTS
) -> FeatureField:
    """D=7 geometric descriptor per face: unit normal (3), centroid (3),
    mean dihedral angle to edge-neighbors / pi (1), block-weighted."""
    normals = mesh.face_normals()
    centroids = mesh.face_centroids()
    adj = meshops.face_adjacency(mesh)
    dihedral = np.zeros(mesh.n_faces)
    for f, neighbors in enumerate(adj):
        if neighbors:
            cos = np.clip(normals[neighbors] @ normals[f], -1.0, 1.0)
            dihedral[f] = float(np.arccos(cos).mean()) / np.pi
    values = np.hstack(
        [
            weights[0] * normals,
            weights[1] * centroids,
            weights[2] * dihedral[:, None],
        ]
    )
    return FeatureField(values, source=SOURCE_BUILTIN)


def load_feature_field(data: bytes, mesh: Mesh) -> FeatureField:
    """Import a [F, D] tensor block feature field (PartField-style)."""
    arr, meta = read_tensor_block(data)
    if arr.ndim != 2:
        raise InvalidInputError(f"feature block must be rank 2, got {arr.shape}")
    ff = FeatureField(arr.astype(np.float64), source=str(meta.get("source", SOURCE_IMPORTED)))
    ff.validate_against(mesh)
    return ff


# ---------------------------------------------------------------------------
# Cluster tree


@dataclass
class ClusterNode:
    node_id: int
    face_ids: np.ndarray          # sorted
    centroid: np.ndarray
    merge_cost: float             # 0 for leaves, inf for a virtual root
    children: tuple[int, int] | None = None


@dataclass
class ClusterTree:
    nodes: list[ClusterNode]
    root_id: int
    virtual_root: bool = False
    leaf_ids: list[int] = field(default_factory=list)

    def node(self, node_id: int) -> ClusterNode:
        return self.nodes[node_id]

    def __len__(self) -> int:
        return len(self.nodes)


def build_cluster_tree(
    mesh: Mesh, feats: FeatureField, n_leaves: int = 200
) -> ClusterTree:
    """Over-segment into <= n_leaves edge-connected atomic groups, then
    agglomeratively merge adjacent clusters by minimum centroid distance.

    Deterministic: seeds and ties resolve by lowest smallest-face-id.
    Disconnected components finish as separate subtrees under a flagged
    virtual root.
    """
    if n_leaves < 2:
        raise InvalidInputError("n_leaves must be >= 2")
    feats.validate_against(mesh)
    adj = meshops.face_adjacency(mesh)
    labels = _oversegment(mesh, feats.values, adj, n_leaves)
    n_groups = labels.max() + 1

    nodes: list[ClusterNode] = []
    members: dict[int, np.ndarray] = {}
    for g in range(n_groups):
        fids = np.nonzero(labels == g)[0]
        nodes.append(
            ClusterNode(g, fids, feats.values[fids].mean(axis=0), 0.0)
        )
        members[g] = fids
    leaf_ids = list(range(n_groups))

    # cluster adjacency from face adjacency
    neighbor: dict[int, set[int]] = {g: set() for g in range(n_groups)}
    for f in range(mesh.n_faces):
        for g in adj[f]:
            a, b = labels[f], labels[g]
            if a != b:
                neighbor[a].add(b)
                neighbor[b].add(a)

    active = dict.fromkeys(range(n_groups))  # insertion-ordered id set
    smallest_face: dict[int, int] = {g: int(members[g][0]) for g in active}

    def merge_key(a: int, b: int) -> tuple:
        cost = float(np.linalg.norm(nodes[a].centroid - nodes[b].centroid))
        lo, hi = sorted((smallest_face[a], smallest_face[b]))
        return (cost, lo, hi)

    while len(active) > 1:
        best = None
        best_pair = None
        for a in active:
            for b in neighbor[a]:
                if b <= a or b not in active:
                    continue
                key = merge_key(a, b)
                if best is None or key < best:
                    best, best_pair = key, (a, b)
        if best_pair is None:
            break  # disconnected: remaining clusters have no neighbors
        a, b = best_pair
        new_id = len(nodes)
        fids = np.union1d(members[a], members[b])
        weight_a, weight_b = len(members[a]), len(members[b])
        centroid = (
            weight_a * nodes[a].centroid + weight_b * nodes[b].centroid
        ) / (weight_a + weight_b)
        nodes.append(ClusterNode(new_id, fids, centroid, best[0], children=(a, b)))
        members[new_id] = fids
        smallest_face[new_id] = min(smallest_face[a], smallest_face[b])
        neighbor[new_id] = (neighbor[a] | neighbor[b]) - {a, b}
        for c in neighbor[new_id]:
            neighbor[c].discard(a)
            neighbor[c].discard(b)
            neighbor[c].add(new_id)
        del active[a], active[b]
        active[new_id] = None

    roots = list(active)
    virtual = len(roots) > 1
    if virtual:
        # join component subtrees pairwise under a flagged virtual root
        current = roots[0]
        for other in roots[1:]:
            new_id = len(nodes)
            fids = np.union1d(members[current], members[other])
            wa, wb = len(members[current]), len(members[other])
            centroid = (wa * nodes[current].centroid + wb * nodes[other].centroid) / (wa + wb)
            nodes.append(
                ClusterNode(new_id, fids, centroid, float("inf"), children=(current, other))
            )
            members[new_id] = fids
            current = new_id
        root = current
    else:
        root = roots[0]
    return ClusterTree(nodes, root, virtual_root=virtual, leaf_ids=leaf_ids)


def _oversegment(mesh: Mesh, values: np.ndarray, adj, n_leaves: int) -> np.ndarray:
    """Greedy feature-similarity region growing into <= n_leaves connected
    groups (every face its own group when the mesh is small)."""
    F = mesh.n_faces
    if F <= n_leaves:
        return np.arange(F, dtype=np.int64)
    cap = int(np.ceil(F / n_leaves))
    labels = np.full(F, -1, dtype=np.int64)
    group = 0
    for seed in range(F):
        if labels[seed] >= 0:
            continue
        region = [seed]
        labels[seed] = group
        mean = values[seed].copy()
        while len(region) < cap:
            frontier = sorted(
                {g for f in region for g in adj[f] if labels[g] < 0}
            )
            if not frontier:
                break
            dists = np.linalg.norm(values[frontier] - mean, axis=1)
            nxt = frontier[int(np.argmin(dists))]
            labels[nxt] = group
            region.append(nxt)
            mean += (values[nxt] - mean) / len(region)
        group += 1

    # fold smallest groups into their closest adjacent group until <= n_leaves
    while group > n_leaves:
        sizes = np.bincount(labels, minlength=group)
        smallest = int(np.argmin(np.where(sizes > 0, sizes, np.inf)))
        small_faces = np.nonzero(labels == smallest)[0]
        candidates = sorted(
            {labels[g] for f in small_faces for g in adj[f] if labels[g] != smallest}
        )
        if not candidates:
            break
        small_mean = values[small_faces].mean(axis=0)
        cand_means = np.stack(
            [values[labels == c].mean(axis=0) for c in candidates]
        )
        target = candidates[int(np.argmin(np.linalg.norm(cand_means - small_mean, axis=1)))]
        labels[small_faces] = target
        # compact labels
        remap = -np.ones(group, dtype=np.int64)
        used = np.unique(labels)
        remap[used] = np.arange(len(used))
        labels = remap[labels]
        group = len(used)
    return labels


# ---------------------------------------------------------------------------
# Selection


def select_part(
    tree: ClusterTree,
    mask2d: np.ndarray,
    gbuffer: GBuffer,
    threshold: float = 0.5,
    min_iou: float = 0.05,
) -> dict:
    """Pick the tree node maximizing image-space IoU with the mask.

    IoU is computed from per-face pixel counts in the current view's
    face-id buffer. Ties prefer the smaller face-set, then the lower
    node id.
    """
    mask2d = np.asarray(mask2d, dtype=np.float64)
    if mask2d.shape != gbuffer.shape:
        raise InvalidInputError("mask and g-buffer dimensions differ")
    fg = gbuffer.foreground()
    selected = fg & (mask2d >= threshold)
    mask_total = int(selected.sum())
    if mask_total == 0:
        raise EmptyMaskError("mask selects no foreground pixels")

    face_ids = gbuffer.face_id
    n_faces = int(face_ids.max()) + 1
    pixels_per_face = np.bincount(face_ids[fg].ravel(), minlength=n_faces)
    masked_per_face = np.bincount(face_ids[selected].ravel(), minlength=n_faces)

    best = None
    best_key = None
    ious = []
    for node in tree.nodes:
        fids = node.face_ids[node.face_ids < n_faces]
        inter = int(masked_per_face[fids].sum())
        area = int(pixels_per_face[fids].sum())
        union = mask_total + area - inter
        iou = inter / union if union > 0 else 0.0
        ious.append(iou)
        key = (-iou, len(node.face_ids), node.node_id)
        if best_key is None or key < best_key:
            best_key, best = key, node
    best_iou = -best_key[0]
    if best_iou < min_iou:
        order = np.argsort(ious)[::-1][:3]
        raise NoPartFoundError(
            f"best IoU {best_iou:.3f} below {min_iou}",
            candidates=[
                {"node_id": int(i), "iou": float(ious[i])} for i in order
            ],
        )
    return {
        "part": Part(best.face_ids),
        "iou": float(best_iou),
        "node_id": int(best.node_id),
    }


def adjust_part(part: Part, add: list[int], remove: list[int], tree: ClusterTree) -> Part:
    """Click-to-correct: union/difference of tree-node face sets."""
    ids = set(int(i) for i in part.face_ids)
    for node_id in add:
        ids |= set(int(i) for i in tree.node(int(node_id)).face_ids)
    for node_id in remove:
        ids -= set(int(i) for i in tree.node(int(node_id)).face_ids)
    if not ids:
        raise EmptyPartError("adjustment removed every face")
    return Part(np.asarray(sorted(ids), dtype=np.int64))


# ---------------------------------------------------------------------------
# Flat k-means baseline (ablation harness only)


def kmeans_clusters(feats: FeatureField, k: int = 20, seed: int = 0, iters: int = 50) -> list[np.ndarray]:
    """Seeded Lloyd's k-means over face features; returns face-id arrays."""
    values = feats.values
    rng = np.random.default_rng(seed)
    n = len(values)
    k = min(k, n)
    centers = values[rng.choice(n, size=k, replace=False)]
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        d = ((values[:, None, :] - centers[None]) ** 2).sum(axis=2)
        new_assign = d.argmin(axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            sel = values[assign == c]
            if len(sel):
                centers[c] = sel.mean(axis=0)
    return [np.nonzero(assign == c)[0] for c in range(k) if (assign == c).any()]


def select_part_flat(
    clusters: list[np.ndarray],
    mask2d: np.ndarray,
    gbuffer: GBuffer,
    threshold: float = 0.5,
) -> dict:
    """IoU argmax over a flat clustering; same contract as select_part."""
    nodes = [
        ClusterNode(i, np.asarray(sorted(c), dtype=np.int64), np.zeros(1), 0.0)
        for i, c in enumerate(clusters)
    ]
    tree = ClusterTree(nodes, root_id=len(nodes) - 1, leaf_ids=list(range(len(nodes))))
    return select_part(tree, mask2d, gbuffer, threshold, min_iou=0.0)
