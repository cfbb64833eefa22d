"""Synthetic corpus generator for experiments and property tests.

Builds a two-level hierarchy (a few parents, each with a couple of children)
and documents whose token streams carry a repeated signature token for their
leaf label plus a weaker parent signature, padded out with shared filler
tokens. Separable by construction, so a working model should overfit it.
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass

import numpy as np

from .corpus import Document, save_corpus
from .hierarchy import ROOT, build_hierarchy


@dataclass(frozen=True)
class ToyCorpus:
    edges: tuple[tuple[str, str], ...]
    docs: tuple[Document, ...]
    leaf_signature: dict[str, str]     # leaf label -> its signature token
    parent_signature: dict[str, str]


def make_toy_corpus(
    n_parents: int = 3,
    children_per_parent: int = 2,
    docs_per_leaf: int = 10,
    vocab_size: int = 40,
    doc_len: int = 12,
    sig_repeats: int = 3,
    parent_sig_repeats: int = 2,
    seed: int = 0,
) -> ToyCorpus:
    """Generate hierarchy edges and documents with planted signature tokens.

    ``vocab_size`` counts distinct real tokens: one signature per leaf, one
    per parent, and shared fillers for the rest.
    """
    parents = [f"P{i}" for i in range(n_parents)]
    leaves = {p: [f"{p}c{j}" for j in range(children_per_parent)] for p in parents}
    edges = [(ROOT, p) for p in parents]
    for p in parents:
        edges.extend((p, leaf) for leaf in leaves[p])

    all_leaves = [leaf for p in parents for leaf in leaves[p]]
    n_signatures = len(all_leaves) + len(parents)
    if vocab_size <= n_signatures:
        raise ValueError(f"vocab_size must exceed {n_signatures} signature tokens")
    leaf_sig = {leaf: f"sig_{leaf}" for leaf in all_leaves}
    parent_sig = {p: f"sig_{p}" for p in parents}
    fillers = [f"w{i:02d}" for i in range(vocab_size - n_signatures)]

    rng = np.random.default_rng(seed)
    docs: list[Document] = []
    for p in parents:
        for leaf in leaves[p]:
            for k in range(docs_per_leaf):
                n_filler = max(0, doc_len - sig_repeats - parent_sig_repeats)
                tokens = (
                    [leaf_sig[leaf]] * sig_repeats
                    + [parent_sig[p]] * parent_sig_repeats
                    + list(rng.choice(fillers, size=n_filler))
                )
                perm = rng.permutation(len(tokens))
                tokens = [tokens[i] for i in perm]
                docs.append(Document(
                    id=f"{leaf}-{k:03d}",
                    tokens=tuple(tokens),
                    labels=frozenset({p, leaf}),
                ))
    return ToyCorpus(
        edges=tuple(edges),
        docs=tuple(docs),
        leaf_signature=leaf_sig,
        parent_signature=parent_sig,
    )


def write_toy_dataset(out_dir, seed: int = 0) -> None:
    """Write hierarchy + corpus files for the toy dataset into ``out_dir``."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    toy = make_toy_corpus(seed=seed)
    build_hierarchy(toy.edges)  # validates before writing
    with open(os.path.join(out_dir, "hierarchy.tsv"), "w", encoding="utf-8") as fh:
        fh.write("# toy label hierarchy\n")
        for parent, child in toy.edges:
            fh.write(f"{parent}\t{child}\n")
    save_corpus(toy.docs, os.path.join(out_dir, "corpus.jsonl"))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Write a toy dataset for the classifier.")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    write_toy_dataset(args.out, seed=args.seed)
    print(f"wrote toy hierarchy and corpus to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
