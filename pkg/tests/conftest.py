import numpy as np
import pytest

from semedit.encoder import init_encoder, save_checkpoint
from semedit.mesh import Mesh
from semedit.templates import get_template_spec

CUBE_VERTS = np.array([
    [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0],
])
CUBE_FACES = np.array([
    [0, 2, 1], [0, 3, 2],      # z = 0
    [4, 5, 6], [4, 6, 7],      # z = 1
    [0, 1, 5], [0, 5, 4],      # y = 0
    [3, 6, 2], [3, 7, 6],      # y = 1
    [0, 4, 7], [0, 7, 3],      # x = 0
    [1, 2, 6], [1, 6, 5],      # x = 1
])


@pytest.fixture
def cube_mesh() -> Mesh:
    return Mesh(CUBE_VERTS, CUBE_FACES)


@pytest.fixture
def cube_obj(tmp_path, cube_mesh):
    path = tmp_path / "cube.obj"
    lines = [f"v {v[0]:g} {v[1]:g} {v[2]:g}" for v in CUBE_VERTS]
    lines += [f"f {f[0]+1} {f[1]+1} {f[2]+1}" for f in CUBE_FACES]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="session")
def chair_spec():
    return get_template_spec("chair")


@pytest.fixture(scope="session")
def random_chair_checkpoint(tmp_path_factory):
    """Untrained (random-init) chair checkpoint; enough for pipeline tests
    whose guarantees do not depend on encoder accuracy."""
    spec = get_template_spec("chair")
    w = init_encoder(spec, seed=123)
    path = tmp_path_factory.mktemp("ckpt") / "chair_random.bin"
    save_checkpoint(w, path, step=0)
    return path


def brute_force_knn(points: np.ndarray, query: np.ndarray, k: int):
    """Reference oracle: full scan, sort by (squared distance, index)."""
    d2 = ((query[None, :] - points) ** 2).sum(axis=1)
    order = sorted(range(len(points)), key=lambda i: (d2[i], i))[:k]
    return [(i, d2[i]) for i in order]


def brute_force_chamfer(a: np.ndarray, b: np.ndarray) -> float:
    """Reference oracle: O(n^2) double loop via broadcasting."""
    d_ab = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return float(d_ab.min(axis=1).sum() + d_ab.min(axis=0).sum())
