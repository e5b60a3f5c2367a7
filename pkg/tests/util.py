from __future__ import annotations

import json
from pathlib import Path


def write_jsonl(path: Path, objs) -> Path:
    with open(path, "w", encoding="utf-8") as f:
        for obj in objs:
            f.write(json.dumps(obj, ensure_ascii=False) + "\n")
    return path


def write_manifest(
    dirpath: Path,
    name: str = "toy",
    embedding_dim: int = 3,
    token_budget: int = 10_000,
    train_name: str = "train.jsonl",
    nbest_name: str = "nbest.jsonl",
) -> Path:
    path = dirpath / "manifest.json"
    path.write_text(
        json.dumps(
            {
                "name": name,
                "train_path": train_name,
                "nbest_path": nbest_name,
                "embedding_dim": embedding_dim,
                "token_budget": token_budget,
            }
        ),
        encoding="utf-8",
    )
    return path
