"""
Data service: dataset files, split protocol and synthetic graphs.

Formats
    edges.tsv     `u<TAB>v[<TAB>w]` per line, 0-based, each undirected edge once, `#` comments
    features.txt  header `n d`, then n rows of d whitespace-separated reals
    features.bin  magic `ALTPFEAT`, uint32 version, uint64 n, uint64 d, n*d little-endian f64
    labels.tsv    `node_id<TAB>class` per line, one line per node
"""

import logging
import struct
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import networkx as nx
import numpy as np

from altprop.core.config import settings
from altprop.core.exceptions import DataError
from altprop.models.dataset import Dataset, Split
from altprop.models.sparse import DenseMatrix, SparseGraph
from altprop.services.graph_service import build_graph

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"ALTPFEAT"
FEATURE_VERSION = 1
_FEATURE_HEADER = struct.Struct("<8sIQQ")

EDGE_FILE = "edges.tsv"
FEATURE_FILE = "features.txt"
FEATURE_BIN_FILE = "features.bin"
LABEL_FILE = "labels.tsv"

VAL_COUNT = 500
TEST_COUNT = 1000

PathLike = Union[str, Path]


def _content_lines(path: Path) -> List[Tuple[int, List[str]]]:
    if not path.is_file():
        raise DataError("File not found", details={"path": str(path)})
    lines = []
    with open(path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            stripped = line.split("#", 1)[0].strip()
            if stripped:
                lines.append((number, stripped.split()))
    return lines


class DataService:
    """Service for dataset IO, splits and synthetic graphs."""

    def read_edges(self, path: PathLike) -> Tuple[List[Tuple[int, int]], Optional[List[float]]]:
        """Parse an edge list; every malformed line is reported by number."""
        path = Path(path)
        edges: List[Tuple[int, int]] = []
        weights: List[float] = []
        for number, parts in _content_lines(path):
            if len(parts) not in (2, 3):
                raise DataError("Malformed edge line", details={"path": str(path), "line": number})
            try:
                edges.append((int(parts[0]), int(parts[1])))
                weights.append(float(parts[2]) if len(parts) == 3 else 1.0)
            except ValueError as exc:
                raise DataError("Malformed edge line", details={"path": str(path), "line": number}) from exc
        weighted = any(w != 1.0 for w in weights)
        return edges, weights if weighted else None

    def read_features(self, path: PathLike) -> DenseMatrix:
        """Text or binary features, detected by the magic bytes."""
        path = Path(path)
        if not path.is_file():
            raise DataError("File not found", details={"path": str(path)})
        with open(path, "rb") as handle:
            head = handle.read(len(FEATURE_MAGIC))
        if head == FEATURE_MAGIC:
            return self._read_binary_features(path)

        lines = _content_lines(path)
        if not lines or len(lines[0][1]) != 2:
            raise DataError("Feature header must be `n d`", details={"path": str(path), "line": 1})
        try:
            n, d = int(lines[0][1][0]), int(lines[0][1][1])
        except ValueError as exc:
            raise DataError("Feature header must be `n d`",
                            details={"path": str(path), "line": lines[0][0]}) from exc
        rows = lines[1:]
        if len(rows) != n:
            raise DataError(
                "Feature row count does not match header",
                details={"path": str(path), "declared": n, "found": len(rows)}
            )
        X = np.empty((n, d))
        for i, (number, parts) in enumerate(rows):
            if len(parts) != d:
                raise DataError("Feature row has wrong width",
                                details={"path": str(path), "line": number, "expected": d, "found": len(parts)})
            try:
                X[i] = [float(p) for p in parts]
            except ValueError as exc:
                raise DataError("Malformed feature value", details={"path": str(path), "line": number}) from exc
        return X

    def _read_binary_features(self, path: Path) -> DenseMatrix:
        data = path.read_bytes()
        if len(data) < _FEATURE_HEADER.size:
            raise DataError("Truncated feature file", details={"path": str(path)})
        _, version, n, d = _FEATURE_HEADER.unpack_from(data)
        if version != FEATURE_VERSION:
            raise DataError("Unsupported feature file version", details={"version": version})
        expected = _FEATURE_HEADER.size + 8 * n * d
        if len(data) != expected:
            raise DataError("Feature file size mismatch",
                            details={"path": str(path), "expected_bytes": expected, "found_bytes": len(data)})
        values = np.frombuffer(data, dtype="<f8", offset=_FEATURE_HEADER.size, count=n * d)
        return values.reshape(n, d).astype(np.float64)

    def read_labels(self, path: PathLike, n: int) -> np.ndarray:
        path = Path(path)
        y = np.full(n, -1, dtype=np.int64)
        for number, parts in _content_lines(path):
            if len(parts) != 2:
                raise DataError("Malformed label line", details={"path": str(path), "line": number})
            try:
                node, cls = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise DataError("Malformed label line", details={"path": str(path), "line": number}) from exc
            if not 0 <= node < n:
                raise DataError("Label node id out of range",
                                details={"path": str(path), "line": number, "node": node, "n": n})
            if cls < 0:
                raise DataError("Negative class index", details={"path": str(path), "line": number})
            y[node] = cls
        missing = int(np.count_nonzero(y < 0))
        if missing:
            raise DataError(
                "Label rows do not match feature rows",
                details={"path": str(path), "feature_rows": n, "label_rows": n - missing}
            )
        return y

    def load_dataset(
        self,
        edge_path: PathLike,
        feature_path: PathLike,
        label_path: PathLike,
        normalize_features: bool = True,
        name: Optional[str] = None
    ) -> Dataset:
        """
        Load the three files into a Dataset.

        Args:
            normalize_features: scale each feature row to unit L1 norm (all-zero rows stay zero)
        """
        X = self.read_features(feature_path)
        n = X.shape[0]
        y = self.read_labels(label_path, n)
        edges, weights = self.read_edges(edge_path)
        graph = build_graph(edges, n, weights)
        if normalize_features:
            X = self.normalize_rows(X)
        dataset = Dataset(graph=graph, X=X, y=y, c=int(y.max()) + 1 if n else 0,
                          name=name or Path(edge_path).parent.name or "dataset")
        logger.info(
            f"Dataset loaded | Name: {dataset.name} | Nodes: {dataset.n} | "
            f"Edges: {graph.n_edges} | Features: {dataset.d} | Classes: {dataset.c}"
        )
        return dataset

    def load_directory(self, directory: PathLike, normalize_features: bool = True) -> Dataset:
        directory = Path(directory)
        features = directory / FEATURE_BIN_FILE
        if not features.is_file():
            features = directory / FEATURE_FILE
        return self.load_dataset(directory / EDGE_FILE, features, directory / LABEL_FILE,
                                 normalize_features=normalize_features, name=directory.name)

    @staticmethod
    def normalize_rows(X: DenseMatrix) -> DenseMatrix:
        sums = np.abs(X).sum(axis=1, keepdims=True)
        return np.divide(X, sums, out=np.zeros_like(X, dtype=np.float64), where=sums > 0)

    def save_dataset(self, dataset: Dataset, directory: PathLike, binary_features: bool = False) -> Path:
        """Write a dataset in the documented formats; text reals use 17 significant digits."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)

        A = dataset.graph.adjacency.scipy.tocoo()
        upper = A.row < A.col
        with open(directory / EDGE_FILE, "w", encoding="utf-8") as handle:
            handle.write("# u\tv[\tw]\n")
            for u, v, w in zip(A.row[upper], A.col[upper], A.data[upper]):
                handle.write(f"{u}\t{v}\n" if w == 1.0 else f"{u}\t{v}\t{w!r}\n")

        if binary_features:
            n, d = dataset.X.shape
            with open(directory / FEATURE_BIN_FILE, "wb") as handle:
                handle.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, n, d))
                handle.write(np.ascontiguousarray(dataset.X, dtype="<f8").tobytes())
        else:
            with open(directory / FEATURE_FILE, "w", encoding="utf-8") as handle:
                handle.write(f"{dataset.n} {dataset.d}\n")
                np.savetxt(handle, dataset.X, fmt="%.17g")

        with open(directory / LABEL_FILE, "w", encoding="utf-8") as handle:
            for node, cls in enumerate(dataset.y):
                handle.write(f"{node}\t{cls}\n")
        return directory

    def make_split(self, dataset: Dataset, per_class: Union[int, float], seed: int = 0) -> Split:
        """
        Per-class uniform train sample, then validation/test from the remainder.

        Counts: 500 validation / 1000 test, or half/half when fewer than 1500 nodes remain.
        Fractions: half of the remainder for validation, the rest for test.
        """
        rng = np.random.default_rng(seed)
        fraction = isinstance(per_class, float)
        train: List[np.ndarray] = []
        warnings: List[str] = []
        for j in range(dataset.c):
            nodes = np.flatnonzero(dataset.y == j)
            want = max(1, int(round(per_class * nodes.size))) if fraction else int(per_class)
            if nodes.size < want:
                message = f"class {j} has {nodes.size} nodes, fewer than the {want} requested"
                logger.warning(f"Split shortfall | Seed: {seed} | {message}")
                warnings.append(message)
                want = nodes.size
            train.append(rng.choice(nodes, size=want, replace=False))

        train_idx = np.sort(np.concatenate(train)).astype(np.int64) if train else np.empty(0, dtype=np.int64)
        rest = rng.permutation(np.setdiff1d(np.arange(dataset.n), train_idx))
        if not fraction and rest.size >= VAL_COUNT + TEST_COUNT:
            val, test = rest[:VAL_COUNT], rest[VAL_COUNT:VAL_COUNT + TEST_COUNT]
        else:
            half = rest.size // 2
            val, test = rest[:half], rest[half:]
        return Split(
            train_idx=train_idx,
            val_idx=np.sort(val).astype(np.int64),
            test_idx=np.sort(test).astype(np.int64),
            label_rate=per_class,
            seed=seed,
            warnings=warnings
        )

    def generate_sbm(
        self,
        n: int,
        c: int,
        p_in: float,
        p_out: float,
        feature_dim: int = 16,
        feature_noise: float = 1.0,
        seed: int = 0
    ) -> Dataset:
        """Planted partition graph with Gaussian features around per-class means."""
        for name, p in (("p_in", p_in), ("p_out", p_out)):
            if not 0.0 <= p <= 1.0:
                raise DataError(f"{name} must lie in [0, 1]", details={name: p})
        if c < 1 or n < c:
            raise DataError("Need at least one node per block", details={"n": n, "c": c})

        sizes = [n // c + (1 if j < n % c else 0) for j in range(c)]
        probs = [[p_in if a == b else p_out for b in range(c)] for a in range(c)]
        G = nx.stochastic_block_model(sizes, probs, seed=seed)
        y = np.repeat(np.arange(c), sizes).astype(np.int64)

        rng = np.random.default_rng(seed)
        means = rng.standard_normal((c, feature_dim))
        X = means[y] + feature_noise * rng.standard_normal((n, feature_dim))
        graph = build_graph(list(G.edges()), n)
        return Dataset(graph=graph, X=X, y=y, c=c, name=f"sbm-{n}-{c}")

    def random_graph(self, n: int, p: float, seed: int = 0) -> SparseGraph:
        """Erdős–Rényi G(n, p)."""
        G = nx.gnp_random_graph(n, p, seed=seed)
        return build_graph(list(G.edges()), n)

    def parse_sbm_spec(self, spec: str) -> Dict[str, float]:
        """`sbm:n=400,c=4,p_in=0.05,p_out=0.005,d=16,noise=1,seed=0` -> generate_sbm kwargs."""
        fields = {"n": 400, "c": 4, "p_in": 0.05, "p_out": 0.005, "d": 16, "noise": 1.0, "seed": 0}
        body = spec.split(":", 1)[1] if ":" in spec else ""
        for item in filter(None, (part.strip() for part in body.split(","))):
            key, _, value = item.partition("=")
            if key not in fields:
                raise DataError(f"Unknown SBM parameter: {key}", details={"spec": spec})
            try:
                fields[key] = float(value)
            except ValueError as exc:
                raise DataError(f"Invalid SBM parameter: {key}", details={"spec": spec}) from exc
        return fields

    def resolve(self, spec: str, normalize_features: bool = True) -> Dataset:
        """A dataset directory (absolute, relative, or under the data dir) or an `sbm:` spec."""
        path = Path(spec)
        if not path.is_dir():
            path = Path(settings.data_dir) / spec
        if path.is_dir():
            return self.load_directory(path, normalize_features)
        if spec == "sbm" or spec.startswith("sbm:"):
            f = self.parse_sbm_spec(spec)
            dataset = self.generate_sbm(int(f["n"]), int(f["c"]), f["p_in"], f["p_out"],
                                        int(f["d"]), f["noise"], int(f["seed"]))
            if normalize_features:
                dataset = Dataset(graph=dataset.graph, X=self.normalize_rows(dataset.X),
                                  y=dataset.y, c=dataset.c, name=dataset.name)
            return dataset
        raise DataError("Dataset directory not found", details={"dataset": spec})

    def convert_planetoid(self, content_path: PathLike, cites_path: PathLike, out_dir: PathLike) -> Dataset:
        """
        Convert a Planetoid-style export (`<name>.content`, `<name>.cites`).

        content lines: `paper_id f_1 ... f_d class_label`; cites lines: `cited citing`.
        Node ids follow content order; class ids follow sorted label names (written to
        classes.txt); citations naming unknown papers are skipped with a warning.
        """
        ids: Dict[str, int] = {}
        rows: List[List[float]] = []
        names: List[str] = []
        for number, parts in _content_lines(Path(content_path)):
            if len(parts) < 3:
                raise DataError("Malformed content line", details={"line": number})
            if parts[0] in ids:
                raise DataError("Duplicate paper id", details={"line": number, "id": parts[0]})
            if rows and len(parts) - 2 != len(rows[0]):
                raise DataError("Feature count mismatch", details={"line": number, "expected": len(rows[0])})
            ids[parts[0]] = len(ids)
            try:
                rows.append([float(v) for v in parts[1:-1]])
            except ValueError as exc:
                raise DataError("Malformed content line", details={"line": number}) from exc
            names.append(parts[-1])

        classes = sorted(set(names))
        class_ids = {name: j for j, name in enumerate(classes)}
        edges = []
        skipped = 0
        for number, parts in _content_lines(Path(cites_path)):
            if len(parts) != 2:
                raise DataError("Malformed cites line", details={"line": number})
            if parts[0] in ids and parts[1] in ids:
                edges.append((ids[parts[0]], ids[parts[1]]))
            else:
                skipped += 1
        if skipped:
            logger.warning(f"Convert | Skipped citations with unknown ids: {skipped}")

        n = len(ids)
        dataset = Dataset(
            graph=build_graph(edges, n),
            X=np.asarray(rows, dtype=np.float64).reshape(n, -1),
            y=np.asarray([class_ids[name] for name in names], dtype=np.int64),
            c=len(classes),
            name=Path(out_dir).name
        )
        self.save_dataset(dataset, out_dir)
        with open(Path(out_dir) / "classes.txt", "w", encoding="utf-8") as handle:
            handle.writelines(f"{j}\t{name}\n" for j, name in enumerate(classes))
        return dataset


data_service = DataService()
