"""Convert raw Planetoid files (e.g. cora.content / cora.cites) into a dataset directory.

    python scripts/planetoid_to_dir.py cora/cora.content cora/cora.cites data/cora
"""

import argparse

from fedgta.data import convert_planetoid


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("content")
    parser.add_argument("cites")
    parser.add_argument("out")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    graph = convert_planetoid(args.content, args.cites, args.out, args.seed)
    print(f"{graph.num_nodes} nodes, {graph.num_edges} edges, {graph.num_features} features, "
          f"{graph.num_classes} classes -> {args.out}")


if __name__ == "__main__":
    main()
