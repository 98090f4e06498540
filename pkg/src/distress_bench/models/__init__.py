from .dataset import Dataset, design_columns, panel_dataset
from .registry import (
    DEFAULT_GRIDS,
    DISPLAY_NAMES,
    FAMILIES,
    ModelSpec,
    TrainedModel,
    expand_grid,
    predict,
    train,
)

__all__ = [
    "DEFAULT_GRIDS",
    "DISPLAY_NAMES",
    "FAMILIES",
    "Dataset",
    "ModelSpec",
    "TrainedModel",
    "design_columns",
    "expand_grid",
    "panel_dataset",
    "predict",
    "train",
]
