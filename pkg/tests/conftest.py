"""
Pytest fixtures for testing.
"""

from pathlib import Path

import numpy as np
import pytest

from altprop.models.dataset import Dataset, LabelData, Split
from altprop.models.sparse import SparseGraph
from altprop.schemas.config import TrainConfig
from altprop.services.data_service import data_service
from altprop.services.graph_service import build_graph


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def edge_graph() -> SparseGraph:
    """Two nodes joined by one edge."""
    return build_graph([(0, 1)], 2)


@pytest.fixture
def path_graph() -> SparseGraph:
    """P3 path 0 - 1 - 2."""
    return build_graph([(0, 1), (1, 2)], 3)


@pytest.fixture
def two_node_files(tmp_path: Path) -> Path:
    """2-node fixture dataset on disk: one edge, d=3, c=2."""
    (tmp_path / "edges.tsv").write_text("# tiny\n0\t1\n")
    (tmp_path / "features.txt").write_text("2 3\n1 0 1\n0 2 2\n")
    (tmp_path / "labels.tsv").write_text("0\t0\n1\t1\n")
    return tmp_path


@pytest.fixture
def sbm_dataset() -> Dataset:
    """Small homophilous planted-partition dataset."""
    return data_service.generate_sbm(n=120, c=3, p_in=0.15, p_out=0.01,
                                     feature_dim=8, feature_noise=1.0, seed=7)


@pytest.fixture
def sbm_labels(sbm_dataset: Dataset) -> LabelData:
    """Five labels per class on the small SBM."""
    return LabelData.from_split(sbm_dataset, data_service.make_split(sbm_dataset, 5, seed=0))


@pytest.fixture
def fast_config() -> TrainConfig:
    """Short schedule for unit tests."""
    return TrainConfig().with_overrides(
        pretrain_epochs=20, epochs=40, rounds=4, k=5, m=10, hidden=16, dropout=0.0
    )


def manual_split(train, val, test, rate=1) -> Split:
    """Split from explicit index lists."""
    return Split(
        train_idx=np.asarray(train, dtype=np.int64),
        val_idx=np.asarray(val, dtype=np.int64),
        test_idx=np.asarray(test, dtype=np.int64),
        label_rate=rate
    )
