"""semedit: semantic 3D shape editing with learned template parameters.

Encode a shape into the semantic parameters of a procedural template, edit
those parameters, and transfer the implied deformation back onto the
original mesh with its detail intact.
"""

from .mesh import Mesh, NormalizeTransform, PointCloud, compute_vertex_normals, normalize, sample_points
from .meshio import load_mesh, save_mesh, save_obj, save_ply
from .spatial import SpatialIndex, chamfer, knn
from .templates import (
    Edit,
    ParamDescriptor,
    ParamVector,
    SyntheticMesh,
    TemplateSpec,
    builtin_class_ids,
    decode,
    decoder_jacobian,
    edit_params,
    get_template_spec,
    sample_params,
)
from .encoder import EncoderWeights, encode_clouds, forward, init_encoder, load_checkpoint, save_checkpoint
from .dataset import Dataset, TrainingExample, build_dataset
from .training import AdamState, MveReport, TrainConfig, evaluate_mve, train, train_step
from .deform import DeformationField, EditSession, WeightConfig, apply_field, build_field, edit_shape

__version__ = "0.1.0"
