"""Quality assessment toolkit for textured dynamic meshes.

Distortion synthesis, orbit rendering, full-reference metrics, geometry and
colour features, subjective score processing and a learned quality rater.
"""

__version__ = "0.1.0"

from meshqa.mesh_io import MeshFrame, MeshSequence, TextureMap, load_sequence, parse_obj, read_manifest, write_obj

__all__ = [
    "MeshFrame",
    "MeshSequence",
    "TextureMap",
    "__version__",
    "load_sequence",
    "parse_obj",
    "read_manifest",
    "write_obj",
]
