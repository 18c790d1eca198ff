"""
Power-law fitting

Ordinary least squares of log y on log z (natural logarithms). The RMS error
is the root mean squared log residual of the fitted line.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy import stats

from errors import DegenerateFitError, DomainError, InputFormatError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PointSet:
    """(z, y) pairs in the order they were measured"""

    z: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64).reshape(-1)
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if z.shape != y.shape:
            raise ValueError(f"abscissa has {z.size} values, ordinate has {y.size}")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return int(self.z.size)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[float, float]]) -> "PointSet":
        pairs = list(pairs)
        if not pairs:
            return cls(np.zeros(0), np.zeros(0))
        z, y = zip(*pairs)
        return cls(np.array(z), np.array(y))

    def pairs(self) -> List[Tuple[float, float]]:
        return list(zip(self.z.tolist(), self.y.tolist()))

    def positive(self) -> "PointSet":
        """Only the points inside the log domain"""
        keep = (self.z > 0) & (self.y > 0)
        return PointSet(self.z[keep], self.y[keep])


@dataclass(frozen=True)
class PowerLawFit:
    """y = coefficient * z ** exponent"""

    exponent: float
    coefficient: float
    rms_error: float
    n_points: int

    def predict(self, z) -> np.ndarray:
        return self.coefficient * np.power(np.asarray(z, dtype=np.float64), self.exponent)

    def to_dict(self) -> Dict:
        return {
            "exponent": self.exponent,
            "coefficient": self.coefficient,
            "rms_error": self.rms_error,
            "n_points": self.n_points,
        }


def fit_power_law(points: PointSet) -> PowerLawFit:
    """
    Fit y = c * z^k by least squares in log-log space

    Args:
        points: At least two distinct abscissae, all coordinates > 0

    Returns:
        PowerLawFit with the slope, exp(intercept) and the log-space RMS error

    Raises:
        DomainError: a coordinate is not strictly positive (index of the first one)
        DegenerateFitError: fewer than two distinct abscissae
    """
    bad = np.flatnonzero(~((points.z > 0) & (points.y > 0)))
    if bad.size:
        index = int(bad[0])
        raise DomainError(
            f"point {index} ({points.z[index]!r}, {points.y[index]!r}) is outside the log domain",
            index=index,
        )
    if np.unique(points.z).size < 2:
        raise DegenerateFitError(f"need at least 2 distinct abscissae, got {np.unique(points.z).size}")

    log_z = np.log(points.z)
    log_y = np.log(points.y)
    regression = stats.linregress(log_z, log_y)
    slope = float(regression.slope)
    intercept = float(regression.intercept)
    residual = log_y - (intercept + slope * log_z)
    rms = float(np.sqrt(np.mean(residual * residual)))
    return PowerLawFit(exponent=slope, coefficient=float(np.exp(intercept)),
                       rms_error=rms, n_points=len(points))


def try_fit(points: PointSet) -> Optional[PowerLawFit]:
    """fit_power_law, or None when the points cannot be fitted"""
    try:
        return fit_power_law(points)
    except (DegenerateFitError, DomainError) as e:
        logger.debug(f"No fit: {e}")
        return None


def write_points(points: PointSet, path: str, header: Optional[str] = None) -> str:
    """Two-column TSV "z<TAB>y"; floats are written with repr so they read back exactly"""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if header:
            for line in header.splitlines():
                f.write(f"# {line}\n")
        for z, y in points.pairs():
            f.write(f"{z!r}\t{y!r}\n")
    return path


def read_points(path: str) -> PointSet:
    pairs = []
    try:
        with open(path, "r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                fields = line.split("\t")
                if len(fields) != 2:
                    raise InputFormatError(f"line {line_number}: expected 2 columns, got {len(fields)}", path=path)
                try:
                    pairs.append((float(fields[0]), float(fields[1])))
                except ValueError:
                    raise InputFormatError(f"line {line_number}: not a number pair", path=path)
    except OSError as e:
        raise InputFormatError(f"cannot read points: {e.strerror}", path=path)
    return PointSet.from_pairs(pairs)
