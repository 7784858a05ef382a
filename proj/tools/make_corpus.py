#!/usr/bin/env python3
# Copyright 2026 The diloco-cpp Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Builds data/sotu.txt from the U.S. State of the Union addresses.

The addresses are works of the U.S. federal government (public domain). The
text files come from the npm package @stdlib/datasets-sotu:

    npm pack @stdlib/datasets-sotu && tar xzf stdlib-datasets-sotu-*.tgz
    python3 tools/make_corpus.py package/data data/sotu.txt

Every --stride'th address is chunked at sentence boundaries into documents
of roughly --chunk bytes; documents are shuffled with a fixed seed so the
trailing validation split spans all eras.
"""
import argparse
import pathlib
import random
import re


def chunks(text, size):
    sentences = re.split(r"(?<=[.!?])\s+", " ".join(text.split()))
    cur = []
    cur_len = 0
    for s in sentences:
        cur.append(s)
        cur_len += len(s) + 1
        if cur_len >= size:
            yield " ".join(cur)
            cur, cur_len = [], 0
    if cur_len >= size // 4:
        yield " ".join(cur)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("src")
    ap.add_argument("dst")
    ap.add_argument("--stride", type=int, default=5)
    ap.add_argument("--chunk", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=1790)
    args = ap.parse_args()

    files = sorted(pathlib.Path(args.src).glob("*.txt"))[:: args.stride]
    docs = []
    for f in files:
        raw = f.read_bytes().decode("utf-8", errors="ignore")
        raw = raw.encode("ascii", errors="ignore").decode("ascii")
        docs.extend(chunks(raw, args.chunk))
    random.Random(args.seed).shuffle(docs)
    pathlib.Path(args.dst).write_text("\n\n".join(docs) + "\n")
    print(f"{len(files)} addresses, {len(docs)} documents")


if __name__ == "__main__":
    main()
