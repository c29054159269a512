"""Geospatial data model: tagged features in a local metric frame.

Geographic input (GeoJSON, WGS84 degrees) is projected onto a local
tangent plane around a fixed origin so that all downstream geometry is
plain meters.  The projection is equirectangular, which is accurate to
well below the map perturbation noise for extents up to a few tens of
kilometers.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

EARTH_RADIUS_M = 6_371_000.0

GEOMETRY_KINDS = ("point", "polyline", "polygon")

_TAG_RE = re.compile(r"[a-z][a-z0-9_]*\Z")


class GeoInputError(ValueError):
    """Malformed geospatial input: coordinates, documents, or geometry."""


def project_to_local(lat: float, lon: float, origin: tuple[float, float]) -> tuple[float, float]:
    """Project geographic degrees to local meters around ``origin``.

    Equirectangular: x = R*cos(lat0)*dlon, y = R*dlat, with angles in
    radians and R the mean Earth radius.  The inverse is
    :func:`local_to_geographic`.
    """
    if not (abs(lat) <= 90.0 and abs(lon) <= 180.0):
        raise GeoInputError(f"coordinates out of range: lat={lat}, lon={lon}")
    lat0, lon0 = origin
    if not (abs(lat0) <= 90.0 and abs(lon0) <= 180.0):
        raise GeoInputError(f"origin out of range: {origin}")
    x = EARTH_RADIUS_M * math.cos(math.radians(lat0)) * math.radians(lon - lon0)
    y = EARTH_RADIUS_M * math.radians(lat - lat0)
    return x, y


def local_to_geographic(x: float, y: float, origin: tuple[float, float]) -> tuple[float, float]:
    """Inverse of :func:`project_to_local`."""
    lat0, lon0 = origin
    lat = lat0 + math.degrees(y / EARTH_RADIUS_M)
    lon = lon0 + math.degrees(x / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return lat, lon


@dataclass(frozen=True, eq=False)
class GeoFeature:
    """One tagged geometric feature in local meters.

    ``kind`` is one of ``point``, ``polyline``, ``polygon``.  Polygon
    vertex lists are closed (first equals last, at least 4 entries),
    polylines have at least 2 vertices, points exactly 1.
    """

    id: str
    kind: str
    vertices: np.ndarray  # (n, 2) float, local meters
    tags: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "tags", frozenset(self.tags))
        v = self.vertices
        if v.ndim != 2 or v.shape[1] != 2 or not np.all(np.isfinite(v)):
            raise GeoInputError(f"feature {self.id!r}: vertices must be a finite (n, 2) array")
        if self.kind == "point":
            if len(v) != 1:
                raise GeoInputError(f"feature {self.id!r}: point needs exactly 1 vertex")
        elif self.kind == "polyline":
            if len(v) < 2:
                raise GeoInputError(f"feature {self.id!r}: polyline needs >= 2 vertices")
        elif self.kind == "polygon":
            if len(v) < 4 or not np.array_equal(v[0], v[-1]):
                raise GeoInputError(
                    f"feature {self.id!r}: polygon must be closed with >= 4 vertices"
                )
        else:
            raise GeoInputError(f"feature {self.id!r}: unknown geometry kind {self.kind!r}")
        if not self.tags:
            raise GeoInputError(f"feature {self.id!r}: needs at least one tag")
        for tag in self.tags:
            if not _TAG_RE.match(tag):
                raise GeoInputError(f"feature {self.id!r}: invalid tag {tag!r}")

    def centroid(self) -> np.ndarray:
        # For closed polygons the duplicated last vertex is excluded.
        v = self.vertices[:-1] if self.kind == "polygon" else self.vertices
        return v.mean(axis=0)

    def translated(self, offset: np.ndarray) -> "GeoFeature":
        return GeoFeature(self.id, self.kind, self.vertices + offset, self.tags)

    def transformed(self, rotation: float, offset: np.ndarray) -> "GeoFeature":
        """Rotate about the centroid by ``rotation`` radians, then translate."""
        c, s = math.cos(rotation), math.sin(rotation)
        rot = np.array([[c, -s], [s, c]])
        center = self.centroid()
        moved = (self.vertices - center) @ rot.T + center + offset
        return GeoFeature(self.id, self.kind, moved, self.tags)


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Immutable collection of tagged features with metric bounds.

    ``bounds`` is ((xmin, xmax), (ymin, ymax), (zmin, zmax)) in meters.
    The map is safe to share read-only across workers.
    """

    origin: tuple[float, float]  # (lat, lon) degrees
    features: tuple[GeoFeature, ...]
    bounds: tuple[tuple[float, float], tuple[float, float], tuple[float, float]]
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))

    @property
    def tags(self) -> frozenset[str]:
        out: set[str] = set()
        for f in self.features:
            out |= f.tags
        return frozenset(out)

    def features_with_tag(self, tag: str) -> list[GeoFeature]:
        """All features carrying ``tag``, stable-ordered by id."""
        return sorted((f for f in self.features if tag in f.tags), key=lambda f: f.id)

    def with_features(self, features) -> "FeatureMap":
        return FeatureMap(self.origin, tuple(features), self.bounds, self.warnings)


def features_with_tag(feature_map: FeatureMap, tag: str) -> list[GeoFeature]:
    return feature_map.features_with_tag(tag)


def _clip_polygon(ring: np.ndarray, box: tuple[float, float, float, float]) -> np.ndarray | None:
    """Sutherland-Hodgman clip of a closed ring against an axis box.

    Returns a closed ring or None when nothing remains.
    """
    xmin, xmax, ymin, ymax = box
    planes = (
        (0, 1.0, xmin),  # x >= xmin
        (0, -1.0, -xmax),  # x <= xmax
        (1, 1.0, ymin),
        (1, -1.0, -ymax),
    )
    pts = [tuple(p) for p in ring[:-1]]
    for axis, sign, bound in planes:
        if not pts:
            return None
        out: list[tuple[float, float]] = []
        prev = pts[-1]
        prev_in = sign * prev[axis] >= bound
        for cur in pts:
            cur_in = sign * cur[axis] >= bound
            if cur_in != prev_in:
                t = (bound / sign - prev[axis]) / (cur[axis] - prev[axis])
                cross = (
                    prev[0] + t * (cur[0] - prev[0]),
                    prev[1] + t * (cur[1] - prev[1]),
                )
                out.append(cross)
            if cur_in:
                out.append(cur)
            prev, prev_in = cur, cur_in
        pts = out
    # drop consecutive duplicates introduced by clipping
    dedup: list[tuple[float, float]] = []
    for p in pts:
        if not dedup or p != dedup[-1]:
            dedup.append(p)
    if len(dedup) > 1 and dedup[0] == dedup[-1]:
        dedup.pop()
    if len(dedup) < 3:
        return None
    dedup.append(dedup[0])
    return np.array(dedup)


def _clip_segment(p: np.ndarray, q: np.ndarray, box) -> tuple[np.ndarray, np.ndarray] | None:
    """Liang-Barsky clip of segment p-q; returns clipped endpoints or None."""
    xmin, xmax, ymin, ymax = box
    d = q - p
    t0, t1 = 0.0, 1.0
    for delta, lo, hi, coord in ((d[0], xmin, xmax, p[0]), (d[1], ymin, ymax, p[1])):
        if delta == 0.0:
            if coord < lo or coord > hi:
                return None
            continue
        ta, tb = (lo - coord) / delta, (hi - coord) / delta
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return None
    return p + t0 * d, p + t1 * d


def _clip_polyline(vertices: np.ndarray, box) -> list[np.ndarray]:
    """Clip a polyline to a box, returning the remaining pieces."""
    pieces: list[list[np.ndarray]] = []
    current: list[np.ndarray] = []
    for a, b in zip(vertices[:-1], vertices[1:]):
        clipped = _clip_segment(a, b, box)
        if clipped is None:
            if len(current) >= 2:
                pieces.append(current)
            current = []
            continue
        ca, cb = clipped
        if current and np.allclose(current[-1], ca):
            current.append(cb)
        else:
            if len(current) >= 2:
                pieces.append(current)
            current = [ca, cb]
    if len(current) >= 2:
        pieces.append(current)
    return [np.array(p) for p in pieces if np.linalg.norm(np.diff(p, axis=0), axis=1).sum() > 0]


def load_geojson(text: str) -> FeatureMap:
    """Build a :class:`FeatureMap` from a GeoJSON FeatureCollection.

    The collection must carry a top-level ``origin: [lat, lon]`` member;
    geometry coordinates follow the GeoJSON convention ``[lon, lat]``.
    An optional top-level ``bounds: [xmin, xmax, ymin, ymax(, zmin, zmax)]``
    (local meters) clips features; without it the bounds are the loaded
    feature extent.  Features without tags are dropped with a warning.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GeoInputError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise GeoInputError("document is not a GeoJSON FeatureCollection")
    origin_raw = doc.get("origin")
    if not (isinstance(origin_raw, (list, tuple)) and len(origin_raw) == 2):
        raise GeoInputError("FeatureCollection needs a top-level 'origin': [lat, lon]")
    origin = (float(origin_raw[0]), float(origin_raw[1]))

    warnings: list[str] = []
    loaded: list[GeoFeature] = []
    seen_ids: set[str] = set()
    for index, feat in enumerate(doc.get("features", [])):
        props = feat.get("properties") or {}
        tags_raw = props.get("tags")
        if not tags_raw:
            warnings.append(f"feature {index}: no tags, dropped")
            continue
        try:
            tags = frozenset(str(t).strip().lower() for t in tags_raw)
        except TypeError as exc:
            raise GeoInputError(f"feature {index}: tags must be an array of strings") from exc
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        fid = str(feat.get("id", props.get("id", f"feature-{index}")))
        if fid in seen_ids:
            fid = f"{fid}-{index}"
        seen_ids.add(fid)
        try:
            if gtype == "Point":
                kind, rings = "point", [[coords]]
            elif gtype == "LineString":
                kind, rings = "polyline", [coords]
            elif gtype == "Polygon":
                if len(coords) > 1:
                    raise GeoInputError(
                        f"feature {index} ({fid!r}): polygons with interior rings are unsupported"
                    )
                kind, rings = "polygon", [coords[0]]
            else:
                raise GeoInputError(
                    f"feature {index} ({fid!r}): unsupported geometry type {gtype!r}"
                )
            local = np.array(
                [project_to_local(float(lat), float(lon), origin) for lon, lat in rings[0]]
            )
        except GeoInputError:
            raise
        except (TypeError, ValueError, IndexError) as exc:
            raise GeoInputError(f"feature {index} ({fid!r}): malformed geometry: {exc}") from exc
        loaded.append(GeoFeature(fid, kind, local, tags))

    bounds_raw = doc.get("bounds")
    if bounds_raw is not None:
        vals = [float(v) for v in bounds_raw]
        if len(vals) == 4:
            vals += [0.0, 0.0]
        if len(vals) != 6:
            raise GeoInputError("'bounds' must have 4 or 6 entries")
        bounds = ((vals[0], vals[1]), (vals[2], vals[3]), (vals[4], vals[5]))
        box = (vals[0], vals[1], vals[2], vals[3])
        clipped: list[GeoFeature] = []
        for f in loaded:
            if f.kind == "polygon":
                ring = _clip_polygon(f.vertices, box)
                if ring is not None:
                    clipped.append(GeoFeature(f.id, f.kind, ring, f.tags))
                else:
                    warnings.append(f"feature {f.id!r}: outside bounds, dropped")
            elif f.kind == "polyline":
                pieces = _clip_polyline(f.vertices, box)
                if not pieces:
                    warnings.append(f"feature {f.id!r}: outside bounds, dropped")
                for n, piece in enumerate(pieces):
                    pid = f.id if len(pieces) == 1 else f"{f.id}#{n}"
                    clipped.append(GeoFeature(pid, f.kind, piece, f.tags))
            else:
                x, y = f.vertices[0]
                if box[0] <= x <= box[1] and box[2] <= y <= box[3]:
                    clipped.append(f)
                else:
                    warnings.append(f"feature {f.id!r}: outside bounds, dropped")
        loaded = clipped
    else:
        if loaded:
            allv = np.vstack([f.vertices for f in loaded])
            bounds = (
                (float(allv[:, 0].min()), float(allv[:, 0].max())),
                (float(allv[:, 1].min()), float(allv[:, 1].max())),
                (0.0, 0.0),
            )
        else:
            bounds = ((0.0, 0.0), (0.0, 0.0), (0.0, 0.0))

    return FeatureMap(origin, tuple(loaded), bounds, tuple(warnings))


def waypoints_to_geojson(
    waypoints: np.ndarray, origin: tuple[float, float], properties: dict | None = None
) -> dict:
    """Encode a local-meter waypoint sequence as a GeoJSON document.

    Coordinates become ``[lon, lat, altitude]``; the document carries the
    projection ``origin`` so paths round-trip back to local meters.
    """
    waypoints = np.asarray(waypoints, dtype=float)
    coords = []
    for x, y, z in waypoints:
        lat, lon = local_to_geographic(x, y, origin)
        coords.append([lon, lat, z])
    return {
        "type": "FeatureCollection",
        "origin": [origin[0], origin[1]],
        "features": [
            {
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": coords},
                "properties": properties or {},
            }
        ],
    }


def waypoints_from_geojson(text: str) -> tuple[np.ndarray, dict]:
    """Decode a path document written by :func:`waypoints_to_geojson`.

    Returns the waypoints in local meters and the feature properties.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GeoInputError(f"not valid JSON: {exc}") from exc
    if doc.get("type") != "FeatureCollection" or "origin" not in doc:
        raise GeoInputError("path document must be a FeatureCollection with an 'origin'")
    origin = (float(doc["origin"][0]), float(doc["origin"][1]))
    for feat in doc.get("features", []):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "LineString":
            continue
        pts = []
        for entry in geom["coordinates"]:
            lon, lat = float(entry[0]), float(entry[1])
            z = float(entry[2]) if len(entry) > 2 else 0.0
            x, y = project_to_local(lat, lon, origin)
            pts.append((x, y, z))
        if len(pts) < 1:
            raise GeoInputError("path LineString has no coordinates")
        return np.array(pts), feat.get("properties") or {}
    raise GeoInputError("no LineString feature in path document")
