"""
Procedural six-tuple renderer.

Analytic 2.5D scenes: a sphere or box primitive standing on a ground plane,
seen through a fixed oblique parallel projection. Image column maps to world
x, image rows go up with height z and with ground depth y (foreshortened by
GROUND_FORESHORTENING). Optional background occluders (spheres) belong to the
real scene and appear identically in composite and ground truth. Lighting is a
single directional light with an ambient term; shadows are hard, ray-cast
against the primitive and occluder volumes, and fall on visible ground only.

World frame: x right, y into the scene, z up. A light at azimuth phi and
elevation theta lies in direction (cos theta cos phi, cos theta sin phi, sin theta).
"""
import math
from typing import NamedTuple, Tuple

import numpy as np

from sigan.core import DEFAULT_ENVMAP_SHAPE, SixTuple, freeze
from sigan.utils import ContractError, GenerationError, derive_seed

__all__ = [
    'DirectionalLight',
    'Occluder',
    'SceneSpec',
    'light_direction',
    'lambert_shade',
    'envmap_from_light',
    'object_mask',
    'cast_shadow_mask',
    'occluder_mask',
    'occluder_shadow_mask',
    'render_six_tuple',
    'sample_spec',
    'sample_spec_pair',
    'object_area_ratio',
    'occluder_area_ratio',
]

GROUND_FORESHORTENING = 0.5
LOBE_SIGMA = 0.2
MIN_AREA_RATIO = 0.05
MAX_AREA_RATIO = 0.3
MAX_RETRIES = 64
MAX_OCCLUDERS = 2
OCCLUDER_SCALE = (0.16, 0.3)
OCCLUDER_GAP = 2.0
PRIMITIVES = ('sphere', 'box')


class DirectionalLight(NamedTuple):
    """Single directional light plus ambient term."""
    azimuth: float
    elevation: float
    intensity: float
    ambient: float
    color: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def validate(self):
        if not 0 < self.elevation <= math.pi / 2 + 1e-12:
            raise ContractError('light elevation must lie in (0, pi/2], got {}'.format(self.elevation))
        if not 0 <= self.azimuth < 2 * math.pi:
            raise ContractError('light azimuth must lie in [0, 2pi), got {}'.format(self.azimuth))
        if self.intensity < 0 or not 0 <= self.ambient <= 1:
            raise ContractError('invalid light intensity/ambient ({}, {})'.format(self.intensity, self.ambient))
        if len(self.color) != 3 or min(self.color) < 0 or max(self.color) > 1:
            raise ContractError('light color must be an RGB triple in [0, 1], got {}'.format(self.color))
        return self

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d['color'] = tuple(float(c) for c in d.get('color', (1.0, 1.0, 1.0)))
        return cls(**d)


class Occluder(NamedTuple):
    """Background sphere resting on the ground, part of the real scene.

    center is the centre of its image silhouette (x = column, y = row); radius
    is in pixels.
    """
    center: Tuple[float, float]
    radius: float
    albedo: Tuple[float, float, float]

    @classmethod
    def from_dict(cls, d):
        return cls(center=tuple(float(x) for x in d['center']), radius=float(d['radius']),
                   albedo=tuple(float(a) for a in d['albedo']))


class SceneSpec(NamedTuple):
    """Parameters of one procedural scene.

    object_center is the centre of the primitive's image silhouette in pixel
    coordinates (x = column, y = row); object_scale is the silhouette width as a
    fraction of the image side.
    """
    primitive: str
    object_center: Tuple[float, float]
    object_scale: float
    albedo_object: Tuple[float, float, float]
    albedo_ground: Tuple[float, float, float]
    scene_light: DirectionalLight
    object_light: DirectionalLight
    seed: int
    side: int
    checker: int = 0
    envmap_shape: Tuple[int, int] = DEFAULT_ENVMAP_SHAPE
    occluders: Tuple[Occluder, ...] = ()

    @property
    def radius(self):
        return self.object_scale * self.side / 2.0

    @property
    def silhouette_height(self):
        """Height of the silhouette in pixels."""

        if self.primitive == 'box':
            return 2.0 * self.radius * (1.0 + GROUND_FORESHORTENING)
        return 2.0 * self.radius

    @property
    def base_row(self):
        """Image row where the primitive touches the ground (front edge)."""

        return self.object_center[1] + self.silhouette_height / 2.0

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d['scene_light'] = DirectionalLight.from_dict(d['scene_light'])
        d['object_light'] = DirectionalLight.from_dict(d['object_light'])
        for key in ('object_center', 'albedo_object', 'albedo_ground', 'envmap_shape'):
            if key in d:
                d[key] = tuple(d[key])
        d['occluders'] = tuple(Occluder.from_dict(o) for o in d.get('occluders') or ())
        return cls(**d)


def light_direction(light):
    """Unit vector pointing from the scene towards the light."""

    ce = math.cos(light.elevation)
    return np.array([ce * math.cos(light.azimuth), ce * math.sin(light.azimuth), math.sin(light.elevation)])


def lambert_shade(normal, light, albedo):
    """Lambertian shading with clamped ambient + diffuse irradiance.

    Args:
        normal: unit normal (3,) or array of unit normals (..., 3)
        light: DirectionalLight
        albedo: RGB albedo (3,) or (..., 3)

    Returns:
        shaded RGB in [0, 1], albedo * color * clamp(intensity * max(0, n.l) + ambient, 0, 1)

    Raises:
        ContractError: a normal is not of unit length
    """

    n = np.asarray(normal, dtype=np.float64)
    lengths = np.linalg.norm(n, axis=-1)
    if np.any(np.abs(lengths - 1.0) > 1e-6):
        raise ContractError('lambert_shade expects unit normals (got length {:.6f})'.format(
            float(lengths.flat[np.argmax(np.abs(lengths - 1.0))])))

    ndotl = np.maximum(0.0, n @ light_direction(light))
    irradiance = np.clip(light.intensity * ndotl + light.ambient, 0.0, 1.0)
    return np.asarray(albedo, dtype=np.float64) * np.asarray(light.color, dtype=np.float64) * np.asarray(irradiance)[..., None]


def envmap_from_light(light, shape=DEFAULT_ENVMAP_SHAPE):
    """Analytic equirectangular radiance map of a directional light.

    Ambient radiance everywhere plus a Gaussian lobe (angular sigma LOBE_SIGMA)
    of peak intensity * color around the light direction.

    Args:
        light: DirectionalLight
        shape: (H_e, W_e) with W_e == 2 * H_e

    Returns:
        float32 EnvMap (3, H_e, W_e)
    """

    h_e, w_e = shape
    if w_e != 2 * h_e:
        raise ContractError('envmap shape must be (H, 2H), got {}'.format(shape))

    elevation = math.pi / 2 - math.pi * (np.arange(h_e) + 0.5) / h_e
    azimuth = 2 * math.pi * (np.arange(w_e) + 0.5) / w_e
    el, az = np.meshgrid(elevation, azimuth, indexing='ij')
    dirs = np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1)

    cos_angle = np.clip(dirs @ light_direction(light), -1.0, 1.0)
    lobe = np.exp(-np.arccos(cos_angle) ** 2 / (2 * LOBE_SIGMA ** 2))

    color = np.asarray(light.color, dtype=np.float64)[:, None, None]
    radiance = light.ambient * color + light.intensity * color * lobe[None]
    return freeze(radiance)


def _pixel_grid(side):
    """Pixel centre coordinates (x = column, y = row)."""

    centres = np.arange(side, dtype=np.float64) + 0.5
    return np.meshgrid(centres, centres, indexing='xy')


def _disc(side, center, r):
    x, y = _pixel_grid(side)
    return (x - center[0]) ** 2 + (y - center[1]) ** 2 <= r ** 2


def _sphere_normals(x, y, center, r):
    """Unit normals of a sphere seen at pixel centres (x, y) of its silhouette."""

    dx = (x - center[0]) / r
    dz = (center[1] - y) / r
    dy = -np.sqrt(np.clip(1.0 - dx ** 2 - dz ** 2, 0.0, 1.0))
    n = np.stack([dx, dy, dz], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def object_mask(spec):
    """Rasterized silhouette of the primitive (pixel centres inside)."""

    x, y = _pixel_grid(spec.side)
    cx, cy = spec.object_center
    r = spec.radius
    if spec.primitive == 'sphere':
        inside = _disc(spec.side, spec.object_center, r)
    else:
        inside = (np.abs(x - cx) <= r) & (np.abs(y - cy) <= spec.silhouette_height / 2.0)
    return inside.astype(np.float32)


def occluder_mask(spec):
    """Union of the occluder silhouettes."""

    inside = np.zeros((spec.side, spec.side), dtype=bool)
    for occ in spec.occluders:
        inside |= _disc(spec.side, occ.center, occ.radius)
    return inside.astype(np.float32)


def _object_normals(spec, mask):
    """Per-pixel unit normals of the visible primitive surface.

    Returns:
        (side, side, 3) array, zero outside the mask
    """

    x, y = _pixel_grid(spec.side)
    cy = spec.object_center[1]
    r = spec.radius
    normals = np.zeros((spec.side, spec.side, 3))
    inside = mask > 0

    if spec.primitive == 'sphere':
        normals[inside] = _sphere_normals(x[inside], y[inside], spec.object_center, r)
    else:
        # top face is the upper band of the silhouette
        top_edge = cy - spec.silhouette_height / 2.0
        top = inside & (y < top_edge + 2.0 * r * GROUND_FORESHORTENING)
        normals[inside] = (0.0, -1.0, 0.0)
        normals[top] = (0.0, 0.0, 1.0)
    return normals


def _ground_points(spec):
    """World (x, y) ground coordinates for every pixel."""

    x, y = _pixel_grid(spec.side)
    return x, (spec.side - y) / GROUND_FORESHORTENING


def _object_anchor(spec):
    """World centre of the primitive volume (X0, Y0, Z0)."""

    r = spec.radius
    ground_y = (spec.side - spec.base_row) / GROUND_FORESHORTENING
    if spec.primitive == 'box':
        ground_y += r
    return spec.object_center[0], ground_y, r


def _occluder_anchor(occ, side):
    """World centre of an occluder sphere resting on the ground."""

    base_row = occ.center[1] + occ.radius
    return occ.center[0], (side - base_row) / GROUND_FORESHORTENING, occ.radius


def _sphere_hit(gx, gy, anchor, r, l):
    """Ground points whose ray towards the light hits the sphere."""

    vx, vy, vz = anchor[0] - gx, anchor[1] - gy, anchor[2]
    t = vx * l[0] + vy * l[1] + vz * l[2]
    dist2 = vx ** 2 + vy ** 2 + vz ** 2 - t ** 2
    return (t > 0) & (dist2 <= r ** 2)


def _visible_ground(spec):
    return (object_mask(spec) == 0) & (occluder_mask(spec) == 0)


def cast_shadow_mask(spec, light):
    """Hard shadow of the primitive on the ground plane.

    A ground pixel is shadowed when the ray towards the light hits the
    primitive volume. Object and occluder pixels are excluded.

    Args:
        spec: SceneSpec
        light: DirectionalLight casting the shadow

    Returns:
        float32 Mask
    """

    gx, gy = _ground_points(spec)
    x0, y0, z0 = _object_anchor(spec)
    r = spec.radius
    l = light_direction(light)

    if spec.primitive == 'sphere':
        hit = _sphere_hit(gx, gy, (x0, y0, z0), r, l)
    else:
        t_near = np.zeros_like(gx)
        t_far = np.full_like(gx, np.inf)
        origin = (gx, gy, np.zeros_like(gx))
        lo = (x0 - r, y0 - r, 0.0)
        hi = (x0 + r, y0 + r, 2.0 * r)
        for axis in range(3):
            o = origin[axis]
            if abs(l[axis]) < 1e-12:
                outside = (o < lo[axis]) | (o > hi[axis])
                t_far = np.where(outside, -np.inf, t_far)
                continue
            t1 = (lo[axis] - o) / l[axis]
            t2 = (hi[axis] - o) / l[axis]
            t_near = np.maximum(t_near, np.minimum(t1, t2))
            t_far = np.minimum(t_far, np.maximum(t1, t2))
        hit = t_near <= t_far

    return (hit & _visible_ground(spec)).astype(np.float32)


def occluder_shadow_mask(spec, light):
    """Hard shadows of the occluders on visible ground.

    Returns:
        float32 Mask, all zero without occluders
    """

    gx, gy = _ground_points(spec)
    l = light_direction(light)
    hit = np.zeros((spec.side, spec.side), dtype=bool)
    for occ in spec.occluders:
        hit |= _sphere_hit(gx, gy, _occluder_anchor(occ, spec.side), occ.radius, l)
    return (hit & _visible_ground(spec)).astype(np.float32)


def _shade_occluders(spec):
    """Occluder pixels shaded by the scene light (side, side, 3)."""

    x, y = _pixel_grid(spec.side)
    shaded = np.zeros((spec.side, spec.side, 3))
    for occ in spec.occluders:
        disc = _disc(spec.side, occ.center, occ.radius)
        normals = _sphere_normals(x[disc], y[disc], occ.center, occ.radius)
        shaded[disc] = lambert_shade(normals, spec.scene_light, occ.albedo)
    return shaded


def _ground_albedo(spec):
    """Per-pixel ground albedo (side, side, 3), optionally checkered."""

    albedo = np.broadcast_to(np.asarray(spec.albedo_ground, dtype=np.float64),
                             (spec.side, spec.side, 3)).copy()
    if spec.checker > 0:
        rows, cols = np.indices((spec.side, spec.side))
        dark = ((rows // spec.checker + cols // spec.checker) % 2) == 1
        albedo[dark] *= 0.6
    return albedo


def render_six_tuple(spec, sample_id=None):
    """Renders the composite/ground-truth pair for a scene.

    The composite shows the object shaded under object_light pasted without a
    shadow; the ground truth shows it shaded under scene_light with its cast
    shadow. Both reuse the identical background rendering, occluders and their
    shadows included.

    Args:
        spec: SceneSpec
        sample_id: identifier stored in the tuple (default derived from seed)

    Returns:
        SixTuple
    """

    spec.scene_light.validate()
    spec.object_light.validate()
    _check_spec(spec)

    mask = object_mask(spec)
    shadow = cast_shadow_mask(spec, spec.scene_light) > 0
    inside = mask > 0
    up = np.array([0.0, 0.0, 1.0])

    ground_albedo = _ground_albedo(spec)
    background = lambert_shade(up, spec.scene_light, ground_albedo)
    shadowed = ground_albedo * np.asarray(spec.scene_light.color) * min(max(spec.scene_light.ambient, 0.0), 1.0)
    if spec.occluders:
        occ_shadow = occluder_shadow_mask(spec, spec.scene_light) > 0
        occ = occluder_mask(spec) > 0
        background[occ_shadow] = shadowed[occ_shadow]
        background[occ] = _shade_occluders(spec)[occ]

    normals = _object_normals(spec, mask)
    obj_scene = lambert_shade(normals[inside], spec.scene_light, spec.albedo_object)
    obj_pasted = lambert_shade(normals[inside], spec.object_light, spec.albedo_object)

    gt = background.copy()
    gt[shadow] = shadowed[shadow]
    gt[inside] = obj_scene

    composite = background.copy()
    composite[inside] = obj_pasted

    return SixTuple(
        composite=freeze(np.clip(composite, 0, 1).transpose(2, 0, 1)),
        object_mask=freeze(mask),
        background_mask=freeze(1.0 - mask),
        object_illum=envmap_from_light(spec.object_light, spec.envmap_shape),
        background_illum=envmap_from_light(spec.scene_light, spec.envmap_shape),
        gt_harmonized=freeze(np.clip(gt, 0, 1).transpose(2, 0, 1)),
        sample_id=sample_id if sample_id is not None else 'scene_{:010d}'.format(spec.seed))


def object_area_ratio(spec):
    """Fraction of image pixels covered by the object silhouette."""

    return float(object_mask(spec).mean())


def occluder_area_ratio(spec):
    """Fraction of image pixels covered by occluder silhouettes."""

    return float(occluder_mask(spec).mean())


def _check_spec(spec):
    """Raises ContractError if the footprint/ratio invariants don't hold."""

    if spec.primitive not in PRIMITIVES:
        raise ContractError('unknown primitive {!r}'.format(spec.primitive))
    cx, cy = spec.object_center
    half_w, half_h = spec.radius, spec.silhouette_height / 2.0
    if cx - half_w < 0 or cx + half_w > spec.side or cy - half_h < 0 or cy + half_h > spec.side:
        raise ContractError('object footprint leaves the image (centre {}, scale {})'.format(
            spec.object_center, spec.object_scale))
    ratio = object_area_ratio(spec)
    if not MIN_AREA_RATIO <= ratio <= MAX_AREA_RATIO:
        raise ContractError('object area ratio {:.4f} outside [{}, {}]'.format(ratio, MIN_AREA_RATIO, MAX_AREA_RATIO))
    for occ in spec.occluders:
        (ox, oy), r = occ.center, occ.radius
        if r <= 0 or ox - r < 0 or ox + r > spec.side or oy - r < 0 or oy + r > spec.side:
            raise ContractError('occluder leaves the image (centre {}, radius {})'.format(occ.center, r))
    if spec.occluders and np.any((object_mask(spec) > 0) & (occluder_mask(spec) > 0)):
        raise ContractError('occluders overlap the object silhouette')


def _sample_light(rng):
    """Draws a random directional light."""

    return DirectionalLight(azimuth=float(rng.uniform(0, 2 * math.pi)),
                            elevation=float(rng.uniform(math.radians(20), math.radians(80))),
                            intensity=float(rng.uniform(0.45, 1.0)),
                            ambient=float(rng.uniform(0.1, 0.4)),
                            color=tuple(float(c) for c in rng.uniform(0.75, 1.0, size=3)))


def _occluder_clear(spec, placed, occ):
    """True when occ keeps OCCLUDER_GAP pixels from the object box and other occluders."""

    (ox, oy), r = occ.center, occ.radius
    cx, cy = spec.object_center
    dx = max(abs(ox - cx) - spec.radius, 0.0)
    dy = max(abs(oy - cy) - spec.silhouette_height / 2.0, 0.0)
    if math.hypot(dx, dy) <= r + OCCLUDER_GAP:
        return False
    return all(math.hypot(ox - p.center[0], oy - p.center[1]) > r + p.radius + OCCLUDER_GAP for p in placed)


def _sample_occluders(seed, spec):
    """Up to MAX_OCCLUDERS background spheres clear of the object.

    Uses its own seed stream; object and lights are unaffected.
    """

    rng = np.random.default_rng(derive_seed(seed, 'occluders'))
    side = spec.side
    placed = []
    for _ in range(int(rng.integers(MAX_OCCLUDERS + 1))):
        for _ in range(MAX_RETRIES):
            r = float(rng.uniform(*OCCLUDER_SCALE)) * side / 2.0
            occ = Occluder(center=(float(rng.uniform(r + 1, side - r - 1)), float(rng.uniform(r + 1, side - r - 1))),
                           radius=r, albedo=tuple(float(a) for a in rng.uniform(0.3, 0.9, size=3)))
            if _occluder_clear(spec, placed, occ):
                placed.append(occ)
                break
    return tuple(placed)


def sample_spec(seed, side, envmap_shape=DEFAULT_ENVMAP_SHAPE):
    """Draws a deterministic pseudo-random SceneSpec.

    Args:
        seed: integer seed
        side: image side, divisible by 32
        envmap_shape: illumination map shape stored in the spec

    Returns:
        SceneSpec satisfying the footprint and area-ratio invariants

    Raises:
        ContractError: side not divisible by 32
        GenerationError: no valid scene within MAX_RETRIES draws
    """

    if side <= 0 or side % 32:
        raise ContractError('image side must be a positive multiple of 32, got {}'.format(side))

    rng = np.random.default_rng(derive_seed(seed, 'scene'))
    for _ in range(MAX_RETRIES):
        primitive = PRIMITIVES[int(rng.integers(len(PRIMITIVES)))]
        scale = float(rng.uniform(0.28, 0.42))
        radius = scale * side / 2.0
        height = 2.0 * radius * (1.0 + GROUND_FORESHORTENING) if primitive == 'box' else 2.0 * radius
        cx = float(rng.uniform(radius + 1, side - radius - 1))
        cy = float(rng.uniform(height / 2.0 + 1, side - height / 2.0 - 1))
        albedo_object = tuple(float(a) for a in rng.uniform(0.3, 1.0, size=3))
        albedo_ground = tuple(float(a) for a in rng.uniform(0.35, 0.9, size=3))
        checker = int(rng.choice([0, 0, side // 8, side // 16]))
        scene_light = _sample_light(rng)
        object_light = _sample_light(rng)

        spec = SceneSpec(primitive=primitive, object_center=(cx, cy), object_scale=scale,
                         albedo_object=albedo_object, albedo_ground=albedo_ground,
                         scene_light=scene_light, object_light=object_light,
                         seed=int(seed), side=int(side), checker=checker,
                         envmap_shape=tuple(envmap_shape))
        try:
            _check_spec(spec)
        except ContractError:
            continue
        return spec._replace(occluders=_sample_occluders(seed, spec))

    raise GenerationError('could not satisfy footprint/area-ratio constraints for seed {} within {} draws'.format(
        seed, MAX_RETRIES))


def sample_spec_pair(seed, side, envmap_shape=DEFAULT_ENVMAP_SHAPE):
    """Paired mode: the same object and scene under two object illuminations.

    Returns:
        (spec_a, spec_b) sharing everything but object_light
    """

    spec = sample_spec(seed, side, envmap_shape)
    rng = np.random.default_rng(derive_seed(seed, 'partner'))
    partner_light = _sample_light(rng)
    return spec, spec._replace(object_light=partner_light)
