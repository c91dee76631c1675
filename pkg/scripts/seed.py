"""
Fixture seeding script: writes synthetic SBM datasets in the documented formats.
"""

import sys
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from altprop.core.config import settings
from altprop.services.data_service import data_service

FIXTURES = {
    "sbm_homophilous": dict(n=600, c=4, p_in=0.05, p_out=0.004, feature_dim=32, feature_noise=2.0),
    "sbm_heterophilous": dict(n=600, c=2, p_in=0.0, p_out=0.02, feature_dim=32, feature_noise=2.0),
    "sbm_tiny": dict(n=60, c=3, p_in=0.3, p_out=0.02, feature_dim=8, feature_noise=0.5),
}


def seed_datasets(root: Path, seed: int = 0) -> None:
    """Write every fixture dataset under `root`."""
    for name, params in FIXTURES.items():
        dataset = data_service.generate_sbm(seed=seed, **params)
        directory = data_service.save_dataset(dataset, root / name)
        print(f"Wrote {name}: {dataset.n} nodes, {dataset.graph.n_edges} edges -> {directory}")


if __name__ == "__main__":
    seed_datasets(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(settings.data_dir))
