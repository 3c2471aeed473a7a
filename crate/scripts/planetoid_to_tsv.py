#!/usr/bin/env python3
"""Convert public graph datasets into the grcca text format.

Two sources are understood:

  planetoid  the `ind.<name>.{x,tx,allx,y,ty,ally,graph,test.index}` pickles
             distributed with the Planetoid code (Cora, Citeseer, PubMed)
  npz        the compressed sparse `.npz` files from the GNN benchmark
             collection (Amazon Photo/Computers, Coauthor CS)

The output directory receives edges.tsv, features.tsv (sparse rows),
labels.tsv and classes.txt. Requires numpy and scipy.

    python scripts/planetoid_to_tsv.py planetoid raw/ cora data/cora
    python scripts/planetoid_to_tsv.py npz raw/amazon_electronics_photo.npz data/amazon-photo
"""

import argparse
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def load_planetoid(raw: Path, name: str):
    def obj(suffix):
        with open(raw / f"ind.{name}.{suffix}", "rb") as f:
            return pickle.load(f, encoding="latin1")

    x, tx, allx = obj("x"), obj("tx"), obj("allx")
    y, ty, ally = obj("y"), obj("ty"), obj("ally")
    graph = obj("graph")
    test_index = [int(line) for line in open(raw / f"ind.{name}.test.index")]
    test_sorted = np.sort(test_index)

    # Citeseer has isolated test ids with no rows; pad them as unlabeled.
    lo, hi = test_sorted.min(), test_sorted.max()
    if name == "citeseer":
        full = hi - lo + 1
        tx_ext = sp.lil_matrix((full, tx.shape[1]))
        tx_ext[test_sorted - lo, :] = tx
        tx = tx_ext
        ty_ext = np.zeros((full, y.shape[1]))
        ty_ext[test_sorted - lo, :] = ty
        ty = ty_ext

    features = sp.vstack((allx, tx)).tolil()
    features[test_index, :] = features[test_sorted, :]
    onehot = np.vstack((ally, ty))
    onehot[test_index, :] = onehot[test_sorted, :]
    labels = np.where(onehot.sum(1) > 0, onehot.argmax(1), -1)

    n = features.shape[0]
    edges = set()
    for src, nbrs in graph.items():
        for dst in nbrs:
            if src != dst and src < n and dst < n:
                edges.add((min(src, dst), max(src, dst)))
    classes = [f"class{c}" for c in range(onehot.shape[1])]
    return sp.csr_matrix(features), sorted(edges), labels, classes


def load_npz(path: Path):
    with np.load(path, allow_pickle=True) as z:
        adj = sp.csr_matrix((z["adj_data"], z["adj_indices"], z["adj_indptr"]), shape=z["adj_shape"])
        if "attr_data" in z:
            features = sp.csr_matrix((z["attr_data"], z["attr_indices"], z["attr_indptr"]), shape=z["attr_shape"])
        else:
            features = sp.csr_matrix(z["attr_matrix"])
        labels = np.asarray(z["labels"], dtype=np.int64)
        names = z["class_names"] if "class_names" in z else None
    coo = sp.triu(adj + adj.T, k=1).tocoo()
    edges = sorted(set(zip(coo.row.tolist(), coo.col.tolist())))
    k = int(labels.max()) + 1
    classes = [str(c) for c in names] if names is not None else [f"class{c}" for c in range(k)]
    return features, edges, labels, classes


def write(out: Path, features, edges, labels, classes):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "edges.tsv", "w") as f:
        for a, b in edges:
            f.write(f"{a}\t{b}\n")
    features = sp.csr_matrix(features)
    with open(out / "features.tsv", "w") as f:
        f.write(f"#dim {features.shape[1]}\n")
        for i in range(features.shape[0]):
            lo, hi = features.indptr[i], features.indptr[i + 1]
            pairs = (f"{j}:{v:g}" for j, v in zip(features.indices[lo:hi], features.data[lo:hi]) if v != 0)
            f.write("\t".join(pairs) + "\n")
    with open(out / "labels.tsv", "w") as f:
        f.writelines(f"{int(y)}\n" for y in labels)
    (out / "classes.txt").write_text("".join(f"{c}\n" for c in classes))
    print(f"wrote {out}: {features.shape[0]} nodes, {len(edges)} edges, "
          f"{features.shape[1]} attributes, {len(classes)} classes")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="source", required=True)
    pl = sub.add_parser("planetoid", help="Planetoid pickles")
    pl.add_argument("raw", type=Path, help="directory holding ind.<name>.* files")
    pl.add_argument("name", help="cora, citeseer or pubmed")
    pl.add_argument("out", type=Path)
    nz = sub.add_parser("npz", help="GNN benchmark .npz file")
    nz.add_argument("path", type=Path)
    nz.add_argument("out", type=Path)
    args = p.parse_args(argv)

    if args.source == "planetoid":
        data = load_planetoid(args.raw, args.name)
    else:
        data = load_npz(args.path)
    write(args.out, *data)
    return 0


if __name__ == "__main__":
    sys.exit(main())
