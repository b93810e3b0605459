#!/usr/bin/env python3
"""Build the bundled evaluation corpora under data/.

english.jsonl.xz: State of the Union addresses and Moby-Dick chapters, taken
from the Apache-2.0 stdlib-js dataset packages (`npm pack
@stdlib/datasets-sotu @stdlib/datasets-moby-dick`).

code.jsonl.xz: CPython standard-library modules (PSF license) and Rust crate
sources from the local cargo registry (MIT/Apache-2.0).

Documents are shuffled with a fixed seed so every stream prefix mixes sources.
"""
import argparse
import glob
import json
import lzma
import os
import random

MAX_DOC_CHARS = 120_000


def read(path):
    with open(path, encoding="utf-8") as f:
        return f.read()


def english_docs(npm_dir):
    docs = []
    for path in sorted(glob.glob(os.path.join(npm_dir, "stdlib-datasets-sotu-*/package/data/*.txt"))):
        docs.append(("sotu/" + os.path.basename(path), read(path).strip()))
    for path in sorted(glob.glob(os.path.join(npm_dir, "stdlib-datasets-moby-dick-*/package/data/*.txt"))):
        name = os.path.basename(path)
        if name in ("data.txt", "contents.txt"):
            continue
        docs.append(("moby-dick/" + name, read(path).strip()))
    return docs


def code_docs(python_root, cargo_src):
    docs = []
    for path in sorted(glob.glob(os.path.join(python_root, "**/*.py"), recursive=True)):
        rel = os.path.relpath(path, python_root)
        parts = rel.split(os.sep)
        if any(p in ("test", "tests", "idle_test", "pydoc_data", "site-packages", "dist-packages") for p in parts):
            continue
        try:
            text = read(path)
        except (UnicodeDecodeError, OSError):
            continue
        if text.strip():
            docs.append(("python/" + rel, text[:MAX_DOC_CHARS]))
    for path in sorted(glob.glob(os.path.join(cargo_src, "*/**/*.rs"), recursive=True)):
        rel = os.path.relpath(path, cargo_src)
        if rel.startswith("libc-") or "tables" in rel:
            continue
        try:
            text = read(path)
        except (UnicodeDecodeError, OSError):
            continue
        if text.strip():
            docs.append(("rust/" + rel, text[:MAX_DOC_CHARS]))
    return docs


def write(docs, out, seed):
    random.Random(seed).shuffle(docs)
    with lzma.open(out, "wt", encoding="utf-8", preset=9) as f:
        for doc_id, text in docs:
            f.write(json.dumps({"id": doc_id, "text": text}, ensure_ascii=False) + "\n")
    chars = sum(len(t) for _, t in docs)
    print(f"{out}: {len(docs)} documents, {chars} chars")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--npm-dir", required=True, help="directory holding the unpacked stdlib-js dataset tarballs")
    ap.add_argument("--python-root", default="/usr/lib/python3.10")
    ap.add_argument("--cargo-src", default=os.path.expanduser("~/.cargo/registry/src/index.crates.io-1949cf8c6b5b557f"))
    ap.add_argument("--out-dir", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)
    write(english_docs(args.npm_dir), os.path.join(args.out_dir, "english.jsonl.xz"), args.seed)
    write(code_docs(args.python_root, args.cargo_src), os.path.join(args.out_dir, "code.jsonl.xz"), args.seed)


if __name__ == "__main__":
    main()
