"""Evaluation reports: a complete (source x victim) grid of rank-k
accuracies plus protocol and attack metadata, serialized as a structured
text document."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .protocol import EvalProtocol

SCHEMA = "evalreport-v1"
CLEAN_SOURCE = "clean"


@dataclass
class EvalReport:
    sources: tuple[str, ...]
    victims: tuple[str, ...]
    cells: dict[tuple[str, str], dict[int, float]]
    protocol: EvalProtocol
    dataset: str
    attack_config_hash: str
    n_probes: int
    notes: str = ""

    def __post_init__(self):
        self.sources = tuple(self.sources)
        self.victims = tuple(self.victims)
        ks = None
        for s in self.sources:
            for v in self.victims:
                if (s, v) not in self.cells:
                    raise ValueError(f"missing cell ({s}, {v}); grid must be complete")
                cell = self.cells[(s, v)]
                if ks is None:
                    ks = tuple(sorted(cell))
                elif tuple(sorted(cell)) != ks:
                    raise ValueError("all cells must report the same rank set")
                for acc in cell.values():
                    if not 0.0 <= acc <= 1.0:
                        raise ValueError(f"accuracy {acc} outside [0, 1]")

    @property
    def rank_ks(self) -> tuple[int, ...]:
        first = next(iter(self.cells.values()))
        return tuple(sorted(first))

    def accuracy(self, source: str, victim: str, k: int) -> float:
        return self.cells[(source, victim)][k]

    def to_text(self) -> str:
        lines = [SCHEMA,
                 f"dataset: {self.dataset}",
                 f"protocol: {json.dumps(self.protocol.to_dict(), sort_keys=True)}",
                 f"attack_config_hash: {self.attack_config_hash}",
                 f"n_probes: {self.n_probes}",
                 f"notes: {self.notes}",
                 f"sources: {', '.join(self.sources)}",
                 f"victims: {', '.join(self.victims)}"]
        width = max([len(s) for s in self.sources] + [8])
        for k in self.rank_ks:
            lines.append("")
            lines.append(f"[rank {k}]")
            header = " | ".join([f"{'source':<{width}}"] + list(self.victims))
            lines.append(header)
            for s in self.sources:
                row = [f"{s:<{width}}"]
                for v in self.victims:
                    row.append(f"{self.cells[(s, v)][k]:.4f}".ljust(len(v)))
                lines.append(" | ".join(row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EvalReport":
        lines = text.splitlines()
        if not lines or lines[0] != SCHEMA:
            raise ValueError("not an eval report document")
        meta = {}
        i = 1
        while i < len(lines) and lines[i].strip():
            key, _, value = lines[i].partition(": ")
            meta[key] = value
            i += 1
        sources = tuple(s.strip() for s in meta["sources"].split(",") if s.strip())
        victims = tuple(v.strip() for v in meta["victims"].split(",") if v.strip())
        cells: dict[tuple[str, str], dict[int, float]] = {}
        k = None
        for line in lines[i:]:
            line = line.rstrip()
            if not line:
                continue
            if line.startswith("[rank "):
                k = int(line[6:-1])
                continue
            parts = [p.strip() for p in line.split("|")]
            if parts[0] == "source" or k is None:
                continue
            src = parts[0]
            for v, cell in zip(victims, parts[1:]):
                cells.setdefault((src, v), {})[k] = float(cell)
        return cls(sources=sources, victims=victims, cells=cells,
                   protocol=EvalProtocol.from_dict(json.loads(meta["protocol"])),
                   dataset=meta["dataset"],
                   attack_config_hash=meta["attack_config_hash"],
                   n_probes=int(meta["n_probes"]),
                   notes=meta.get("notes", ""))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls.from_text(Path(path).read_text())
