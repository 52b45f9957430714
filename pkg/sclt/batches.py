"""
Sample batches: one pipeline stage sampled at ``n`` heights in ``N`` coordinates.
"""

from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from typing_extensions import Any, Dict, Literal, Optional, TypeAlias

Stage: TypeAlias = Literal[
    "X_T", "X0_T", "M_T", "M_T_surrogate", "Q_T", "R_T", "R1_T", "Z_tilde", "X_tilde", "Y_T"
]

STAGES = ("X_T", "X0_T", "M_T", "M_T_surrogate", "Q_T", "R_T", "R1_T", "Z_tilde", "X_tilde", "Y_T")


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """
    An ``n x N`` matrix of real samples of one stage.

    ``flags`` marks rows to leave out of couplings (near-zero L values); ``meta`` is
    the parameter snapshot the batch was produced under.
    """

    stage: str
    data: npt.NDArray[np.float64]
    seed: int
    meta: Dict[str, Any] = field(default_factory=dict)
    flags: Optional[npt.NDArray[np.bool_]] = None

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ValueError(f"Unknown stage {self.stage}")

        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"Sample data must be two-dimensional, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError(f"Stage {self.stage} contains non-finite samples")
        if "N" in self.meta and self.meta["N"] != data.shape[1]:
            raise ValueError(f"Batch has {data.shape[1]} coordinates but meta says {self.meta['N']}")

        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    @property
    def N(self) -> int:
        return int(self.data.shape[1])

    def excluded(self) -> npt.NDArray[np.bool_]:
        return np.zeros(self.n, dtype=bool) if self.flags is None else self.flags
