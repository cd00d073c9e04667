"""Coordinates, distances, trap arrays and the discretized state space."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

EARTH_RADIUS_M = 6_371_000.0
MAX_PROJECTION_SPAN_M = 200_000.0


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self):
        if not (-180.0 <= self.lon <= 180.0) or not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"invalid coordinates lon={self.lon}, lat={self.lat}")


@dataclass(frozen=True)
class PlanePoint:
    x: float
    y: float


def haversine_distance(a: GeoPoint, b: GeoPoint, radius: float = EARTH_RADIUS_M) -> float:
    """Great-circle distance in metres between two points."""
    lat1, lat2 = math.radians(a.lat), math.radians(b.lat)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon - a.lon)
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * radius * math.asin(min(1.0, math.sqrt(h)))


def haversine_array(lon, lat, ref_lon, ref_lat, radius=EARTH_RADIUS_M):
    """Vectorized haversine from arrays of lon/lat (degrees) to one reference."""
    lon = np.radians(np.asarray(lon, dtype=float))
    lat = np.radians(np.asarray(lat, dtype=float))
    rlon, rlat = math.radians(ref_lon), math.radians(ref_lat)
    h = np.sin((lat - rlat) / 2) ** 2 + np.cos(lat) * math.cos(rlat) * np.sin((lon - rlon) / 2) ** 2
    return 2 * radius * np.arcsin(np.minimum(1.0, np.sqrt(h)))


@dataclass(frozen=True)
class Projection:
    """Equirectangular projection about a fixed origin."""

    origin: GeoPoint
    radius: float = EARTH_RADIUS_M

    def forward(self, lon, lat):
        lon = np.asarray(lon, dtype=float)
        lat = np.asarray(lat, dtype=float)
        coslat = math.cos(math.radians(self.origin.lat))
        x = self.radius * np.radians(lon - self.origin.lon) * coslat
        y = self.radius * np.radians(lat - self.origin.lat)
        return x, y

    def inverse(self, x, y):
        coslat = math.cos(math.radians(self.origin.lat))
        lon = self.origin.lon + np.degrees(np.asarray(x, dtype=float) / (self.radius * coslat))
        lat = self.origin.lat + np.degrees(np.asarray(y, dtype=float) / self.radius)
        return lon, lat

    def metadata(self) -> dict:
        return {
            "projection": "equirectangular",
            "origin_lon": self.origin.lon,
            "origin_lat": self.origin.lat,
            "earth_radius_m": self.radius,
        }


def project_to_plane(points: list[GeoPoint], origin: GeoPoint) -> list[PlanePoint]:
    """Project lon/lat points to local metres about ``origin``.

    Raises ValueError when the points span more than 200 km, where the
    equirectangular approximation stops being adequate.
    """
    if not points:
        return []
    lon = np.array([p.lon for p in points])
    lat = np.array([p.lat for p in points])
    proj = Projection(origin)
    x, y = proj.forward(lon, lat)
    _check_span(x, y)
    return [PlanePoint(float(a), float(b)) for a, b in zip(x, y)]


def _check_span(x, y):
    span = math.hypot(np.ptp(x), np.ptp(y)) if len(x) else 0.0
    if span > MAX_PROJECTION_SPAN_M:
        raise ValueError(
            f"points span {span / 1000:.1f} km; local projection supports at most "
            f"{MAX_PROJECTION_SPAN_M / 1000:.0f} km"
        )


@dataclass
class TrapArray:
    """J detectors with planar coordinates (metres) and optional covariates.

    ``covariates`` maps a name to a vector of length J or a J x K matrix.
    ``lon``/``lat`` are kept when the traps came from geographic input.
    """

    ids: list[str]
    xy: np.ndarray
    covariates: dict[str, np.ndarray] = field(default_factory=dict)
    lon: np.ndarray | None = None
    lat: np.ndarray | None = None
    projection: Projection | None = None

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        if len(self.ids) == 0:
            raise ValueError("trap array is empty")
        if len(self.ids) != len(self.xy):
            raise ValueError("trap ids and coordinates differ in length")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("trap identifiers are not unique")
        if not np.all(np.isfinite(self.xy)):
            raise ValueError("trap coordinates must be finite")
        for name, v in self.covariates.items():
            v = np.asarray(v, dtype=float)
            if v.shape[0] != len(self.ids) or v.ndim > 2:
                raise ValueError(f"trap covariate {name!r} has shape {v.shape}, expected ({self.n_traps},) or ({self.n_traps}, K)")
            self.covariates[name] = v

    @property
    def n_traps(self) -> int:
        return len(self.ids)

    def index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.ids)}

    def mean_spacing(self) -> float:
        """Mean nearest-neighbour distance between traps (nan for one trap)."""
        if self.n_traps < 2:
            return float("nan")
        d, _ = cKDTree(self.xy).query(self.xy, k=2)
        return float(d[:, 1].mean())

    @classmethod
    def from_lonlat(cls, ids, lon, lat, covariates=None, origin: GeoPoint | None = None):
        lon = np.asarray(lon, dtype=float)
        lat = np.asarray(lat, dtype=float)
        for a, b in zip(lon, lat):
            GeoPoint(float(a), float(b))
        if origin is None:
            origin = GeoPoint(float(lon.mean()), float(lat.mean()))
        proj = Projection(origin)
        x, y = proj.forward(lon, lat)
        _check_span(x, y)
        return cls(list(ids), np.column_stack([x, y]), dict(covariates or {}), lon, lat, proj)


@dataclass
class StateSpace:
    """G candidate activity-centre points, each representing ``cell_area`` m²."""

    xy: np.ndarray
    cell_area: float
    covariates: dict[str, np.ndarray] = field(default_factory=dict)
    projection: Projection | None = None

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        if len(self.xy) < 1:
            raise ValueError("state space needs at least one point")
        if not self.cell_area > 0:
            raise ValueError("cell_area must be positive")
        if len(np.unique(self.xy, axis=0)) != len(self.xy):
            raise ValueError("state-space points must be distinct")
        for name, v in self.covariates.items():
            v = np.asarray(v, dtype=float)
            if v.shape[-1] != self.n_points:
                raise ValueError(f"state-space covariate {name!r} has length {v.shape[-1]}, expected {self.n_points}")
            self.covariates[name] = v

    @property
    def n_points(self) -> int:
        return len(self.xy)

    @property
    def area(self) -> float:
        return self.n_points * self.cell_area

    def lonlat(self):
        if self.projection is None:
            raise ValueError("state space has no geographic projection")
        return self.projection.inverse(self.xy[:, 0], self.xy[:, 1])


def build_state_space(traps: TrapArray, buffer: float, spacing: float, clip: bool = False) -> StateSpace:
    """Square lattice over the trap bounding box grown by ``buffer``.

    With ``clip`` the lattice keeps only points within ``buffer`` of some trap,
    which lets the point count be tuned more finely than a full rectangle.
    """
    if traps is None or traps.n_traps == 0:
        raise ValueError("cannot build a state space without traps")
    if not buffer > 0 or not spacing > 0:
        raise ValueError("buffer and spacing must be positive")
    if spacing > buffer:
        warnings.warn("lattice spacing exceeds buffer; integration will be coarse", stacklevel=2)
    lo = traps.xy.min(axis=0) - buffer
    hi = traps.xy.max(axis=0) + buffer
    # ceil so the last row reaches max + buffer even when coordinates carry rounding noise
    counts = np.ceil((hi - lo) / spacing - 1e-6).astype(int) + 1
    gx = lo[0] + spacing * np.arange(counts[0])
    gy = lo[1] + spacing * np.arange(counts[1])
    xx, yy = np.meshgrid(gx, gy)
    xy = np.column_stack([xx.ravel(), yy.ravel()])
    if clip:
        d, _ = cKDTree(traps.xy).query(xy)
        xy = xy[d <= buffer + 1e-6 * spacing]
    return StateSpace(xy, spacing * spacing, projection=traps.projection)


def idw_interpolate(sample_xy, sample_values, target_xy, power: float = 2.0, k_neighbors: int = 12) -> np.ndarray:
    """Inverse-distance-weighted interpolation over the k nearest samples.

    A target that coincides with a sample takes that sample's value exactly.
    """
    sample_xy = np.asarray(sample_xy, dtype=float).reshape(-1, 2)
    values = np.asarray(sample_values, dtype=float).ravel()
    target_xy = np.asarray(target_xy, dtype=float).reshape(-1, 2)
    if len(sample_xy) == 0:
        raise ValueError("IDW needs at least one sample")
    if len(values) != len(sample_xy):
        raise ValueError("sample values and coordinates differ in length")
    if not power > 0 or k_neighbors < 1:
        raise ValueError("power must be positive and k_neighbors at least 1")
    k = min(k_neighbors, len(sample_xy))
    dist, idx = cKDTree(sample_xy).query(target_xy, k=k)
    dist = dist.reshape(len(target_xy), k)
    idx = idx.reshape(len(target_xy), k)
    out = np.empty(len(target_xy))
    hit = dist[:, 0] == 0.0
    out[hit] = values[idx[hit, 0]]
    d = dist[~hit]
    w = d ** (-power)
    out[~hit] = (w * values[idx[~hit]]).sum(axis=1) / w.sum(axis=1)
    return out


def proximity_covariate(reference: GeoPoint, lon, lat) -> np.ndarray:
    """Haversine distance (metres) from ``reference`` to each target."""
    return haversine_array(lon, lat, reference.lon, reference.lat)


def squared_distances(trap_xy, point_xy) -> np.ndarray:
    """J x G matrix of squared planar distances."""
    diff = np.asarray(trap_xy, float)[:, None, :] - np.asarray(point_xy, float)[None, :, :]
    return np.einsum("jgc,jgc->jg", diff, diff)
