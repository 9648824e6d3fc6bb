"""Exact sector geometry at interface corners.

Rational corner patterns (p+, p-), the dihedral fold maps that build the
corner reflection operators, edge mirrors, C^2 cut-off profiles, and the
domain specification consumed by the mesh builder.  Sector bookkeeping is
exact (ints / Fractions); floats enter only in the final affine-map synthesis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    """Invalid geometric data (non-rational angle, bad polygon, map misuse)."""


# ---------------------------------------------------------------------------
# corner patterns


def reduce_sector_counts(q: Fraction) -> tuple[int, int]:
    """Minimal (p_plus, p_minus) with even sum for plus-cone aperture q = alpha/2pi.

    With q = a/b in lowest terms: b even gives (a, b-a) (both odd since
    gcd(a,b)=1); b odd forces the doubled pattern (2a, 2(b-a)).
    """
    if not 0 < q < 1:
        raise GeometryError(f"aperture fraction must lie in (0,1), got {q}")
    a, b = q.numerator, q.denominator
    if b % 2 == 0:
        return a, b - a
    return 2 * a, 2 * (b - a)


@dataclass(frozen=True)
class CornerPattern:
    """Rational sector pattern at one interface corner.

    The local frame puts theta = 0 on the first plus-side ray (along the
    incoming polygon edge); sector j covers local angles [j*beta, (j+1)*beta),
    j = 0..p_plus-1 in the plus cone and j = p_plus..p-1 in the minus cone.
    """

    corner: tuple[float, float]
    q: Fraction  # alpha / 2pi, exact
    p_plus: int
    p_minus: int
    frame_angle: float  # global direction of the theta=0 ray

    def __post_init__(self):
        if self.p_plus < 1 or self.p_minus < 1:
            raise GeometryError("sector counts must be positive")
        if (self.p_plus + self.p_minus) % 2:
            raise GeometryError("p_plus + p_minus must be even")
        if Fraction(self.p_plus, self.p_plus + self.p_minus) != self.q:
            raise GeometryError(
                f"sector counts ({self.p_plus},{self.p_minus}) do not realize q={self.q}"
            )

    @property
    def p(self) -> int:
        return self.p_plus + self.p_minus

    @property
    def beta(self) -> float:
        return TWO_PI / self.p

    @property
    def alpha(self) -> float:
        """Plus-cone aperture 2*pi*q (float)."""
        return TWO_PI * self.q.numerator / self.q.denominator

    def ray_angle(self, j: int) -> float:
        """Global direction of sector ray j (ray j bounds sectors j-1 | j)."""
        return self.frame_angle + j * self.beta

    def ray_point(self, j: int, radius: float) -> np.ndarray:
        a = self.ray_angle(j)
        return np.array(self.corner) + radius * np.array([math.cos(a), math.sin(a)])

    def local_angle(self, point) -> float:
        d = np.asarray(point, dtype=float) - np.asarray(self.corner)
        return (math.atan2(d[1], d[0]) - self.frame_angle) % TWO_PI

    def sector_of(self, point) -> int:
        """Sector index of a point (by its local angle; corner itself maps to 0)."""
        return min(int(self.local_angle(point) / self.beta), self.p - 1)

    def is_minus_sector(self, j: int) -> bool:
        return j >= self.p_plus


def corner_pattern(q, corner=(0.0, 0.0), frame_angle=0.0) -> CornerPattern:
    """Minimal even-sum sector pattern for a plus-cone aperture alpha = 2*pi*q."""
    q = Fraction(q)
    p_plus, p_minus = reduce_sector_counts(q)
    return CornerPattern(
        corner=(float(corner[0]), float(corner[1])),
        q=q,
        p_plus=p_plus,
        p_minus=p_minus,
        frame_angle=float(frame_angle),
    )


# ---------------------------------------------------------------------------
# dihedral angle maps and fold construction


@dataclass(frozen=True)
class AngularMap:
    """Element of the dihedral group on local sector angles.

    reflect: theta -> c*beta - theta (axis along the half-ray c/2*beta);
    rotate:  theta -> theta + c*beta.  c is kept canonical mod p (p*beta=2pi).
    """

    reflect: bool
    c: int
    p: int

    def __post_init__(self):
        object.__setattr__(self, "c", self.c % self.p)

    def apply(self, theta):
        beta = TWO_PI / self.p
        if self.reflect:
            return self.c * beta - np.asarray(theta)
        return np.asarray(theta) + self.c * beta

    def image_sector(self, j: int) -> int:
        """Sector onto which sector j is carried (half-open sector convention)."""
        if self.reflect:
            return (self.c - 1 - j) % self.p
        return (j + self.c) % self.p

    def after(self, other: "AngularMap") -> "AngularMap":
        """Composition self o other."""
        if self.p != other.p:
            raise GeometryError("cannot compose maps of different sector groups")
        if self.reflect:
            return AngularMap(not other.reflect, self.c - other.c, self.p)
        return AngularMap(other.reflect, self.c + other.c, self.p)

    def inverse(self) -> "AngularMap":
        return self if self.reflect else AngularMap(False, -self.c, self.p)


def _fold_core(P: int, Q: int) -> list[list[tuple[AngularMap, int, int]]]:
    """Fold maps from the first P sectors onto the last Q, in local indices.

    Returns, per target sector P+k, a list of (map, sign, source_sector).  The
    first target sector folds the source cone accordion-style: reflect across
    the interface ray P, then re-reflect across rays P-1, P-2, ..., with signs
    alternating +1, -1, ...  Each later target sector composes the previous
    one with the reflection across the shared ray, which makes the pieces
    match there automatically.
    """
    p = P + Q
    rho = AngularMap(True, 2 * P, p)
    maps = [(rho, 1, P - 1)]
    for j in range(2, P + 1):
        rho = AngularMap(not rho.reflect, 2 * (P - j + 1) - rho.c, p)
        maps.append((rho, (-1) ** (j + 1), P - j))
    rows = [maps]
    for k in range(1, Q):
        mirror = AngularMap(True, 2 * (P + k), p)
        rows.append([(g.after(mirror), z, s) for (g, z, s) in rows[-1]])
    return rows


def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _reflection(axis_angle: float) -> np.ndarray:
    c, s = math.cos(2.0 * axis_angle), math.sin(2.0 * axis_angle)
    return np.array([[c, s], [s, -c]])


@dataclass(frozen=True, eq=False)
class SectorMap:
    """Affine isometry x -> F x + y between two cones/strips at the interface.

    source_sector is the geometric domain (the cone on which the reflected
    field is being defined), target_sector the geometric image (the cone where
    the input field lives): reflection operators act by pullback,
    (R w)(x) = sum_m sign_m * w(F_m x + y_m) for x in the source sector.
    Edge mirrors carry source_sector = target_sector = -1.
    """

    F: np.ndarray
    y: np.ndarray
    sign: int
    source_sector: int
    target_sector: int
    angular: AngularMap | None = None

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.F.T + self.y

    @property
    def orientation(self) -> int:
        return int(round(float(np.linalg.det(self.F))))


def _synth(pattern: CornerPattern, ang: AngularMap, sign: int, src: int, tgt: int) -> SectorMap:
    # rotations commute with the frame change; reflection axes pick up frame_angle
    if ang.reflect:
        F = _reflection(pattern.frame_angle + 0.5 * ang.c * pattern.beta)
    else:
        F = _rotation(ang.c * pattern.beta)
    corner = np.array(pattern.corner, dtype=float)
    return SectorMap(F=F, y=corner - F @ corner, sign=sign,
                     source_sector=src, target_sector=tgt, angular=ang)


def fold_maps(pattern: CornerPattern, direction: str) -> tuple[SectorMap, ...]:
    """Sector maps implementing the corner reflection in the given direction.

    direction 'plus-to-minus': per minus sector, p_plus maps pulling back onto
    the plus cone with alternating signs.  'minus-to-plus': per plus sector,
    p_minus maps onto the minus cone.  Patterns with p_plus and p_minus both
    even admit no such alternating fold (the trace condition on the second
    interface ray pins an unpaired coefficient to zero), so they are rejected.
    """
    key = direction.replace("_", "-")
    if key not in ("plus-to-minus", "minus-to-plus"):
        raise GeometryError(f"unknown fold direction {direction!r}")
    if pattern.p_plus % 2 == 0 and pattern.p_minus % 2 == 0:
        raise GeometryError(
            "no alternating fold exists for patterns with p_plus, p_minus both even"
        )
    p = pattern.p
    out = []
    if key == "plus-to-minus":
        for k, row in enumerate(_fold_core(pattern.p_plus, pattern.p_minus)):
            for ang, z, src in row:
                out.append(_synth(pattern, ang, z, pattern.p_plus + k, src))
    else:
        # conjugate the reversed-role fold by nu: theta -> -theta, under which
        # sector j reads p-1-j and (reflect|rotate, c) reads (same, -c)
        for k, row in enumerate(_fold_core(pattern.p_minus, pattern.p_plus)):
            for ang, z, src in row:
                nu_ang = AngularMap(ang.reflect, -ang.c, p)
                out.append(
                    _synth(pattern, nu_ang, z, p - 1 - (pattern.p_minus + k), p - 1 - src)
                )
    return tuple(out)


def edge_reflection(a, b) -> SectorMap:
    """Reflection across the line through a and b (sign +1, involution)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    L = float(np.hypot(*d))
    if L < 1e-14:
        raise GeometryError("degenerate edge")
    F = _reflection(math.atan2(d[1], d[0]))
    return SectorMap(F=F, y=a - F @ a, sign=1, source_sector=-1, target_sector=-1)


# ---------------------------------------------------------------------------
# cut-off profiles (quintic C^2 transitions)


def _smoothstep(t):
    """Quintic step: 0 for t<=0, 1 for t>=1, C^2 at both knots."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (6.0 * t - 15.0))


@dataclass(frozen=True)
class CutoffProfile:
    """Radial (corner) or tensor (edge) C^2 bump.

    Value 1 inside r1, 0 outside r2, quintic in between.  Edge profiles decay
    the same way in the tangential coordinate at 0.5/0.9 of half_length.
    """

    kind: str  # "corner" | "edge"
    center: tuple[float, float]
    axis: tuple[float, float] = (0.0, 0.0)
    half_length: float = 0.0
    r1: float = 0.0
    r2: float = 1.0
    degree: int = 5

    def __post_init__(self):
        if self.kind not in ("corner", "edge"):
            raise GeometryError(f"unknown cutoff kind {self.kind!r}")
        if not 0.0 < self.r1 < self.r2:
            raise GeometryError("cutoff radii must satisfy 0 < r1 < r2")


def corner_cutoff(center, patch_radius: float) -> CutoffProfile:
    """Radial profile: identically 1 up to 0.5*R, supported in 0.9*R."""
    return CutoffProfile(kind="corner", center=(float(center[0]), float(center[1])),
                         r1=0.5 * patch_radius, r2=0.9 * patch_radius)


def edge_cutoff(a, b, halfwidth: float) -> CutoffProfile:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    L = float(np.hypot(*d))
    if L < 1e-14:
        raise GeometryError("degenerate edge")
    mid = 0.5 * (a + b)
    return CutoffProfile(kind="edge", center=(mid[0], mid[1]),
                         axis=(d[0] / L, d[1] / L), half_length=0.5 * L,
                         r1=0.5 * halfwidth, r2=0.9 * halfwidth)


def cutoff_eval(profile: CutoffProfile, point):
    """Evaluate the bump at one point (2,) or many (N,2); values in [0,1]."""
    x = np.asarray(point, dtype=float)
    d = x - np.asarray(profile.center)
    if profile.kind == "corner":
        r = np.linalg.norm(d, axis=-1)
        return _smoothstep((profile.r2 - r) / (profile.r2 - profile.r1))
    ax = np.asarray(profile.axis)
    s = np.abs(d @ ax)
    n = np.abs(d @ np.array([-ax[1], ax[0]]))
    s1, s2 = 0.5 * profile.half_length, 0.9 * profile.half_length
    return (_smoothstep((profile.r2 - n) / (profile.r2 - profile.r1))
            * _smoothstep((s2 - s) / (s2 - s1)))


# ---------------------------------------------------------------------------
# domain specification


def _angle_fraction(theta: float, max_den: int = 192) -> Fraction:
    q = Fraction(theta / TWO_PI).limit_denominator(max_den)
    if abs(float(q) * TWO_PI - theta) > 1e-9:
        raise GeometryError(
            f"corner angle {theta:.12g} is not a rational multiple of 2*pi "
            f"(denominator <= {max_den}, tolerance 1e-9)"
        )
    return q


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 1e-14) - (v < -1e-14)

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


@dataclass(frozen=True)
class DomainSpec:
    """Rectangle with a polygonal inclusion and interface-patch parameters.

    outer_rect = (lower-left, upper-right); interface_polygon lists the corners
    counterclockwise (enclosing the minus material).  patch_radius_corner is
    the circumradius R of the regular corner polygons; patch_halfwidth_edge is
    the per-side height of the edge trapezoids.  Passing None for the latter
    anchors it at the corner-patch chord midpoints, R*sin(beta)/2 with the
    most restrictive beta, so patches tile without overlap.
    """

    outer_rect: tuple[tuple[float, float], tuple[float, float]]
    interface_polygon: tuple[tuple[float, float], ...]
    patch_radius_corner: float
    patch_halfwidth_edge: float | None = None
    patterns: tuple[CornerPattern, ...] = field(init=False)

    def __post_init__(self):
        (x0, y0), (x1, y1) = self.outer_rect
        if not (x1 > x0 and y1 > y0):
            raise GeometryError("outer rectangle has empty interior")
        poly = tuple((float(px), float(py)) for px, py in self.interface_polygon)
        object.__setattr__(self, "interface_polygon", poly)
        object.__setattr__(self, "outer_rect",
                           ((float(x0), float(y0)), (float(x1), float(y1))))
        n = len(poly)
        if n < 3:
            raise GeometryError("interface polygon needs at least 3 corners")

        area2 = sum(poly[i][0] * poly[(i + 1) % n][1] - poly[(i + 1) % n][0] * poly[i][1]
                    for i in range(n))
        if area2 <= 0:
            raise GeometryError("interface polygon must be counterclockwise")
        for i in range(n):
            a, b = poly[i], poly[(i + 1) % n]
            if math.hypot(b[0] - a[0], b[1] - a[1]) < 1e-14:
                raise GeometryError("interface polygon has a zero-length edge")
            for j in range(i + 1, n):
                if j in (i, (i + 1) % n) or (j + 1) % n == i:
                    continue
                if _segments_cross(a, b, poly[j], poly[(j + 1) % n]):
                    raise GeometryError("interface polygon is self-intersecting")

        R = float(self.patch_radius_corner)
        if R <= 0:
            raise GeometryError("patch_radius_corner must be positive")
        pats = []
        for i in range(n):
            c = poly[i]
            d_prev = np.array(poly[i - 1]) - np.array(c)
            d_next = np.array(poly[(i + 1) % n]) - np.array(c)
            a_prev = math.atan2(d_prev[1], d_prev[0])
            a_next = math.atan2(d_next[1], d_next[0])
            theta_int = (a_prev - a_next) % TWO_PI  # interior (minus) wedge
            q = 1 - _angle_fraction(theta_int)  # plus-cone aperture fraction
            pp, pm = reduce_sector_counts(q)
            pats.append(CornerPattern(corner=c, q=q, p_plus=pp, p_minus=pm,
                                      frame_angle=a_prev))
            # patch disks must stay strictly inside the rectangle
            if min(c[0] - x0, x1 - c[0], c[1] - y0, y1 - c[1]) <= R:
                raise GeometryError(f"corner patch at {c} leaves the rectangle")
        for i in range(n):
            for j in range(i + 1, n):
                d = math.dist(poly[i], poly[j])
                if d <= 2.0 * R:
                    raise GeometryError(
                        f"corner patches at {poly[i]} and {poly[j]} overlap (2R >= {d:.6g})"
                    )
        object.__setattr__(self, "patterns", tuple(pats))

        anchored = min(0.5 * R * math.sin(pat.beta) for pat in pats)
        if self.patch_halfwidth_edge is None:
            object.__setattr__(self, "patch_halfwidth_edge", anchored)
        else:
            hw = float(self.patch_halfwidth_edge)
            if not 0.0 < hw <= anchored + 1e-12:
                raise GeometryError(
                    f"patch_halfwidth_edge {hw:.6g} exceeds the anchored bound {anchored:.6g}"
                )
            object.__setattr__(self, "patch_halfwidth_edge", hw)

    @property
    def edges(self) -> tuple[tuple[tuple[float, float], tuple[float, float]], ...]:
        poly = self.interface_polygon
        return tuple((poly[i], poly[(i + 1) % len(poly)]) for i in range(len(poly)))

    @property
    def rect_bounds(self) -> tuple[float, float, float, float]:
        (x0, y0), (x1, y1) = self.outer_rect
        return x0, y0, x1, y1


def make_reference_domain(patch_radius: float = 0.3,
                          patch_halfwidth: float | None = None) -> DomainSpec:
    """The experiment domain: rectangle (-0.5,1.5)x(-0.5,1.3) around the
    equilateral triangle (0,0), (1,0), (cos pi/3, sin pi/3); every corner has
    plus-cone aperture 5*pi/3, i.e. pattern (5,1)."""
    tri = ((0.0, 0.0), (1.0, 0.0), (math.cos(math.pi / 3), math.sin(math.pi / 3)))
    return DomainSpec(outer_rect=((-0.5, -0.5), (1.5, 1.3)), interface_polygon=tri,
                      patch_radius_corner=patch_radius,
                      patch_halfwidth_edge=patch_halfwidth)


def write_domain(spec: DomainSpec, path) -> None:
    """Plain-text domain file: one item per line, full float precision."""
    lines = ["signfem-domain v1"]
    for tag, (px, py) in (("rect-lo", spec.outer_rect[0]), ("rect-hi", spec.outer_rect[1])):
        lines.append(f"{tag} {px!r} {py!r}")
    for px, py in spec.interface_polygon:
        lines.append(f"corner {px!r} {py!r}")
    lines.append(f"patch-radius-corner {spec.patch_radius_corner!r}")
    lines.append(f"patch-halfwidth-edge {spec.patch_halfwidth_edge!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_domain(path) -> DomainSpec:
    rect_lo = rect_hi = None
    corners: list[tuple[float, float]] = []
    radius = halfwidth = None
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "signfem-domain v1":
            raise GeometryError(f"not a domain file (header {header!r})")
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            tag, vals = parts[0], [float(v) for v in parts[1:]]
            if tag == "rect-lo":
                rect_lo = (vals[0], vals[1])
            elif tag == "rect-hi":
                rect_hi = (vals[0], vals[1])
            elif tag == "corner":
                corners.append((vals[0], vals[1]))
            elif tag == "patch-radius-corner":
                radius = vals[0]
            elif tag == "patch-halfwidth-edge":
                halfwidth = vals[0]
            else:
                raise GeometryError(f"unknown domain file tag {tag!r}")
    if rect_lo is None or rect_hi is None or radius is None or not corners:
        raise GeometryError("incomplete domain file")
    return DomainSpec(outer_rect=(rect_lo, rect_hi), interface_polygon=tuple(corners),
                      patch_radius_corner=radius, patch_halfwidth_edge=halfwidth)
