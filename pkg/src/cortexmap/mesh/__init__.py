from .transforms import RigidTransform2D
from .volume import (
    BACKGROUND,
    GRAY,
    WHITE,
    LabelVolume,
    load_volume,
    reconstruct_stack,
    save_volume,
)
from .segment import segment_section
from .laplace import ScalarField, solve_laplace
from .marching import marching_cubes
from .meshes import (
    TriangleMesh,
    filter_components,
    load_obj,
    load_ply,
    save_obj,
    save_ply,
    split_by_plane,
)
from .remesh import remesh_isotropic
from .graph_build import graph_node_positions_from_sections, mesh_to_graph
