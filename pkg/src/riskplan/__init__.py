"""Occlusion-aware risk-field trajectory planning on occupancy grids."""

from .dynamics import ControlInput, VehicleBounds, VehicleParams, VehicleState
from .geometry import Polygon2, VisibilityRegion, point_in_polygon, visibility_region
from .grid import (
    CellSet,
    GridSpec,
    OccupancyGrid,
    StructuringElement,
    cells_of_set,
    complement,
    dilate,
    intersect,
    occupancy_matrix,
    union,
    world_to_cell,
)
from .occlusion import (
    AreaDef,
    AreaSegment,
    HiddenClassParams,
    HiddenSetState,
    build_structuring_element,
    init_hidden,
    merge_areas,
    predict_hidden,
    update_hidden,
)
from .planner import PlannerConfig, PlanResult, RecedingHorizonPlanner, solve, total_cost
from .riskfield import (
    ContinuousRiskField,
    DiscreteRiskField,
    EntityFields,
    RiskKernelMatrix,
    RiskKernelParams,
    build_entity_fields,
    convolve,
    fit_spline,
    sample_kernel,
)

__version__ = "0.1.0"
