"""
coopfusion - Late Collaborative 3D Object Fusion

Association and fusion of object-level 3D detections exchanged between
agents: CSBA-3D association, WLS-3D fusion, baseline late-fusion methods,
a pseudo-collaborative data generator and nuScenes-style metrics with
false-positive penalties.

Python: 3.9+
"""

__version__ = "1.0.0"

__title__ = "coopfusion"
__description__ = "Late collaborative 3D object fusion library and benchmark"

# Version info tuple for programmatic access
__version_info__ = tuple(map(int, __version__.split('.')))

from .core.model import (
    BBox3D, Category, CoopFusionError, Detection, DiagCovariance7, Frame, FusedObject,
)
from .core.association import CsbaParams, associate_multi, associate_pairwise, pair_cost
from .core.fusion import fuse_frame, wls_fuse

__all__ = [
    'BBox3D',
    'Category',
    'CoopFusionError',
    'CsbaParams',
    'Detection',
    'DiagCovariance7',
    'Frame',
    'FusedObject',
    'associate_multi',
    'associate_pairwise',
    'fuse_frame',
    'pair_cost',
    'wls_fuse',
    '__version__',
    '__version_info__',
]
