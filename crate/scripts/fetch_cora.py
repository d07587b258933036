#!/usr/bin/env python3
"""Fetch the LINQS Cora citation graph and write it in the dataset layout
read by `linksteal` (meta.json, nodes.jsonl, edges.csv).

The raw cora.content / cora.cites files ship inside the PGL source
distribution on PyPI, which is the only copy reachable from a
package-mirror-only network. Pass --from-dir to convert files you already
have instead.

    python3 scripts/fetch_cora.py --out data/cora
"""
import argparse
import io
import json
import os
import sys
import tarfile
import urllib.request

PGL_SDIST = "pgl-2.2.6.tar.gz"
PYPI_JSON = "https://pypi.org/pypi/pgl/json"
MEMBER_PREFIX = "pgl-2.2.6/pgl/data/cora/"


def fetch_raw():
    meta = json.load(urllib.request.urlopen(PYPI_JSON, timeout=60))
    files = meta["releases"]["2.2.6"]
    url = next(f["url"] for f in files if f["filename"] == PGL_SDIST)
    blob = urllib.request.urlopen(url, timeout=600).read()
    tar = tarfile.open(fileobj=io.BytesIO(blob))
    content = tar.extractfile(MEMBER_PREFIX + "cora.content").read().decode()
    cites = tar.extractfile(MEMBER_PREFIX + "cora.cites").read().decode()
    return content, cites


def read_dir(path):
    with open(os.path.join(path, "cora.content")) as f:
        content = f.read()
    with open(os.path.join(path, "cora.cites")) as f:
        cites = f.read()
    return content, cites


def convert(content, cites, out):
    rows = [line.split() for line in content.splitlines() if line.strip()]
    classes = sorted({r[-1] for r in rows})
    class_index = {c: i for i, c in enumerate(classes)}
    node_index = {r[0]: i for i, r in enumerate(rows)}
    feature_dim = len(rows[0]) - 2

    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "nodes.jsonl"), "w") as f:
        for i, r in enumerate(rows):
            rec = {"id": i, "label": class_index[r[-1]], "features": [int(x) for x in r[1:-1]]}
            f.write(json.dumps(rec, separators=(",", ":")) + "\n")

    edges = []
    for line in cites.splitlines():
        parts = line.split()
        if len(parts) != 2:
            continue
        cited, citing = parts
        if cited in node_index and citing in node_index:
            edges.append((node_index[citing], node_index[cited]))
    with open(os.path.join(out, "edges.csv"), "w") as f:
        f.write("u,v\n")
        for u, v in edges:
            f.write(f"{u},{v}\n")

    meta = {
        "name": "cora",
        "classes": len(classes),
        "feature_dim": feature_dim,
        "link_convention": "directed-incidence",
        "links": 10556,
        "whitebox_link_budget": 2000,
        "class_names": classes,
    }
    with open(os.path.join(out, "meta.json"), "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")
    print(f"wrote {len(rows)} nodes, {len(edges)} raw citation rows, {len(classes)} classes to {out}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/cora")
    ap.add_argument("--from-dir", help="directory holding cora.content and cora.cites")
    args = ap.parse_args()
    content, cites = read_dir(args.from_dir) if args.from_dir else fetch_raw()
    convert(content, cites, args.out)


if __name__ == "__main__":
    sys.exit(main())
