"""JSON-lines dataset manifests.

Line 1 is a header object (``"kind": "header"``) with the schema version,
realism level, split policy, generation config and its hash; every further
line is one :class:`DatasetEntry`.  Clip paths are relative to the
manifest's directory.
"""
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1
REALISM = ("synthetic", "hybrid", "real")
SPLITS = ("train", "val", "test")


def config_hash(config):
    """Short stable hash of a JSON-serializable config."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _num(x):
    # JSON has no inf/nan
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _unnum(x):
    if isinstance(x, str) and x in ("inf", "-inf", "nan"):
        return float(x)
    return x


@dataclass
class DatasetEntry:
    clip_id: str
    clip_path: str
    distance_m: float
    split: str = None
    fold: int = None
    snr_db: float = None
    rt60_s: float = None
    drr_db: float = None
    room_id: str = None
    source_id: str = None
    scene: dict = field(default=None)

    def __post_init__(self):
        if not self.distance_m > 0:
            raise ValueError(f"{self.clip_id}: distance_m must be > 0, got {self.distance_m}")
        if (self.split is None) == (self.fold is None):
            raise ValueError(f"{self.clip_id}: exactly one of split / fold must be set")
        if self.split is not None and self.split not in SPLITS:
            raise ValueError(f"{self.clip_id}: unknown split {self.split!r}")

    def to_json(self):
        return {k: _num(v) for k, v in asdict(self).items()}

    @classmethod
    def from_json(cls, d):
        return cls(**{k: _unnum(v) for k, v in d.items()})


class DatasetManifest:
    """Entries plus provenance.

    ``split_policy`` is ``{"kind": "folds", "n_folds": k}`` (entries carry a
    group index; fold ``i`` tests on group ``i``, validates on group
    ``i+1 mod k`` and trains on the rest) or ``{"kind": "ratio", ...}``
    (entries carry a fixed split).
    """

    def __init__(self, entries, realism, config, split_policy, root=None, report=None):
        if realism not in REALISM:
            raise ValueError(f"realism must be one of {REALISM}")
        self.entries = list(entries)
        self.realism = realism
        self.config = config
        self.split_policy = split_policy
        self.root = Path(root) if root is not None else None
        self.report = report or {}
        self.validate()

    @property
    def config_hash(self):
        return config_hash(self.config)

    @property
    def n_folds(self):
        return self.split_policy.get("n_folds", 1) if self.split_policy.get("kind") == "folds" else 1

    def validate(self):
        paths = [e.clip_path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise ValueError("manifest clip paths are not unique")
        kind = self.split_policy.get("kind")
        for e in self.entries:
            if kind == "folds" and e.fold is None:
                raise ValueError(f"{e.clip_id}: fold manifest entry without a fold")
            if kind == "ratio" and e.split is None:
                raise ValueError(f"{e.clip_id}: ratio manifest entry without a split")
        return self

    def subset(self, split, fold=0):
        """Entries of ``split`` ("train", "val", "test") for ``fold``."""
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        if self.split_policy.get("kind") != "folds":
            return [e for e in self.entries if e.split == split]
        k = self.n_folds
        if not 0 <= fold < k:
            raise ValueError(f"fold {fold} out of range for {k} folds")
        test, val = fold, (fold + 1) % k
        want = {"test": lambda g: g == test, "val": lambda g: g == val,
                "train": lambda g: g not in (test, val)}[split]
        return [e for e in self.entries if want(e.fold)]

    def resolve(self, entry):
        p = Path(entry.clip_path)
        return p if p.is_absolute() or self.root is None else self.root / p

    def header(self):
        return {"kind": "header", "schema_version": SCHEMA_VERSION, "realism": self.realism,
                "split_policy": self.split_policy, "config_hash": self.config_hash,
                "config": self.config, "n_entries": len(self.entries), "report": self.report}

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps(self.header(), sort_keys=True)]
        lines += [json.dumps(e.to_json(), sort_keys=True) for e in self.entries]
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
        tmp.replace(path)
        self.root = path.parent
        return path

    @classmethod
    def read(cls, path):
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            rows = [json.loads(line) for line in fh if line.strip()]
        if not rows or rows[0].get("kind") != "header":
            raise ValueError(f"{path}: missing manifest header line")
        head = rows[0]
        if head.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported schema version {head.get('schema_version')}")
        entries = [DatasetEntry.from_json(r) for r in rows[1:]]
        return cls(entries, head["realism"], head["config"], head["split_policy"], root=path.parent,
                   report=head.get("report"))


def read_header(path):
    """The header object of a manifest, or None if unreadable."""
    try:
        with open(path, encoding="utf-8") as fh:
            head = json.loads(fh.readline())
    except (OSError, ValueError):
        return None
    return head if isinstance(head, dict) and head.get("kind") == "header" else None
