"""Dense spectra and the M-matrix verdict."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

M_MATRIX_TOL = 1e-10


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    min_real_part: float
    is_m_matrix: bool

    @classmethod
    def of(cls, matrix, tol: float = M_MATRIX_TOL) -> SpectrumReport:
        ev = np.linalg.eigvals(np.asarray(matrix, dtype=float))
        m = float(ev.real.min())
        return cls(ev, m, bool(m >= -tol))

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "min_real_part": self.min_real_part,
            "is_m_matrix": self.is_m_matrix,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())
