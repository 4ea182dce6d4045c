"""Count undirected edges and check symmetry of a neighbor-list adjacency file.

Usage: python3 count_adjacency_edges.py data/portugal_nuts3.adj
"""
import sys


def main(path):
    nb = {}
    for line in open(path):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(":")
        nb[int(head)] = {int(x) for x in rest.split()}
    pairs = set()
    for i, ks in nb.items():
        for k in ks:
            assert i in nb[k], f"asymmetric {i} {k}"
            pairs.add((min(i, k), max(i, k)))
    print(f"regions={len(nb)} edges={len(pairs)}")


if __name__ == "__main__":
    main(sys.argv[1])
