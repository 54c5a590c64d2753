"""test_scene.py: Test the procedural six-tuple renderer."""
# pylint: disable=invalid-name
import math
import unittest

import numpy as np

from sigan.core import validate_six_tuple
from sigan.scene.render import (DirectionalLight, Occluder, SceneSpec, cast_shadow_mask, envmap_from_light,
                                lambert_shade, light_direction, object_area_ratio, object_mask, occluder_area_ratio,
                                occluder_mask, occluder_shadow_mask, render_six_tuple, sample_spec,
                                sample_spec_pair)
from sigan.utils import ContractError, to_plain

from fake import manual_spec

class TestShading(unittest.TestCase):
    """Test class for shading and environment maps."""

    def test_lambert_examples(self):
        """Testing Lambert shading closed forms."""
        light = DirectionalLight(azimuth=0.5, elevation=0.7, intensity=0.8, ambient=0.2)
        l = light_direction(light)
        self.assertTrue(np.allclose(lambert_shade(l, light, (1, 1, 1)), (1, 1, 1)))

        perpendicular = np.cross(l, [0.0, 0.0, 1.0])
        perpendicular /= np.linalg.norm(perpendicular)
        self.assertTrue(np.allclose(lambert_shade(perpendicular, light, (1, 1, 1)), (0.2, 0.2, 0.2)))

        light = DirectionalLight(azimuth=0.0, elevation=math.pi / 4, intensity=1.0, ambient=0.0)
        shaded = lambert_shade((1.0, 0.0, 0.0), light, (1, 0, 0))
        self.assertTrue(np.allclose(shaded, (math.sqrt(2) / 2, 0, 0)))

    def test_lambert_array(self):
        """Testing vectorized shading and clamping."""
        light = DirectionalLight(azimuth=1.0, elevation=1.0, intensity=2.0, ambient=0.5)
        normals = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
        shaded = lambert_shade(normals, light, (0.5, 0.5, 0.5))
        self.assertEqual(shaded.shape, (2, 3))
        self.assertTrue(np.allclose(shaded[0], 0.5))
        self.assertTrue(np.allclose(shaded[1], 0.25))

    def test_lambert_non_unit(self):
        """Testing rejection of non-unit normals."""
        light = DirectionalLight(azimuth=0.0, elevation=1.0, intensity=1.0, ambient=0.0)
        with self.assertRaises(ContractError):
            lambert_shade((0.0, 0.0, 2.0), light, (1, 1, 1))

    def test_envmap_zenith(self):
        """Testing zenith light maps to the top row."""
        env = envmap_from_light(DirectionalLight(azimuth=0.0, elevation=math.pi / 2, intensity=1.0, ambient=0.1))
        self.assertEqual(env.shape, (3, 16, 32))
        for c in range(3):
            row, _ = np.unravel_index(np.argmax(env[c]), env[c].shape)
            self.assertEqual(row, 0)

    def test_envmap_azimuth(self):
        """Testing azimuth to column mapping."""
        env = envmap_from_light(DirectionalLight(azimuth=math.pi, elevation=math.pi / 4, intensity=1.0, ambient=0.1),
                                (16, 32))
        _, col = np.unravel_index(np.argmax(env[0]), env[0].shape)
        self.assertIn(col, (15, 16))

    def test_envmap_ambient_only(self):
        """Testing constant map without the lobe."""
        env = envmap_from_light(DirectionalLight(azimuth=1.0, elevation=0.5, intensity=0.0, ambient=0.3))
        self.assertTrue(np.allclose(env, 0.3))
        self.assertEqual(env.dtype, np.float32)

    def test_envmap_intensity(self):
        """Testing total radiance grows with intensity."""
        totals = [float(envmap_from_light(DirectionalLight(azimuth=2.0, elevation=0.6, intensity=i, ambient=0.2)).sum())
                  for i in (0.0, 0.25, 0.5, 1.0, 2.0)]
        self.assertTrue(all(b > a for a, b in zip(totals[:-1], totals[1:])))

    def test_envmap_shape_error(self):
        """Testing envmap shape contract."""
        with self.assertRaises(ContractError):
            envmap_from_light(DirectionalLight(azimuth=0.0, elevation=1.0, intensity=1.0, ambient=0.1), (16, 16))


class TestShadow(unittest.TestCase):
    """Test class for cast shadows."""

    def test_vertical_light(self):
        """Testing shadow under a zenith light stays in the object's columns."""
        for primitive in ('sphere', 'box'):
            spec = manual_spec(math.pi / 2, primitive=primitive, scale=0.25)
            shadow = cast_shadow_mask(spec, spec.scene_light)
            if primitive == 'sphere':
                # a box hides its own footprint
                self.assertTrue(shadow.any())
            cols = np.nonzero(shadow)[1] + 0.5
            cx = spec.object_center[0]
            self.assertTrue(np.all(np.abs(cols - cx) <= spec.radius + 1e-9))

    def test_elevation_monotone(self):
        """Testing lower light casts a longer shadow."""
        for primitive in ('sphere', 'box'):
            low = manual_spec(math.radians(30), primitive=primitive, scale=0.25)
            high = manual_spec(math.radians(60), primitive=primitive, scale=0.25)
            n_low = int(cast_shadow_mask(low, low.scene_light).sum())
            n_high = int(cast_shadow_mask(high, high.scene_light).sum())
            self.assertGreater(n_high, 0)
            self.assertGreater(n_low, n_high)

    def test_disjoint(self):
        """Testing shadow and object never overlap."""
        for seed in range(100):
            spec = sample_spec(seed, 64)
            shadow = cast_shadow_mask(spec, spec.scene_light)
            self.assertEqual(float((shadow * object_mask(spec)).sum()), 0.0)


class TestRender(unittest.TestCase):
    """Test class for six-tuple rendering."""

    def test_same_light(self):
        """Testing identical lights only differ in the shadow."""
        spec = manual_spec(math.radians(40))
        spec = spec._replace(object_light=spec.scene_light)
        t = render_six_tuple(spec)
        shadow = cast_shadow_mask(spec, spec.scene_light)
        differs = np.any(t.composite != t.gt_harmonized, axis=0)
        self.assertTrue(differs.any())
        self.assertFalse(np.any(differs & (shadow == 0)))

    def test_seed_42(self):
        """Testing a sampled scene at side 64."""
        spec = sample_spec(42, 64)
        t = render_six_tuple(spec)
        self.assertEqual(validate_six_tuple(t), [])
        ratio = float(np.count_nonzero(t.object_mask)) / t.object_mask.size
        self.assertTrue(0.05 <= ratio <= 0.3)
        self.assertEqual(ratio, object_area_ratio(spec))
        self.assertEqual(t.sample_id, 'scene_0000000042')

    def test_exact_outside(self):
        """Testing composite equals gt outside object and shadow."""
        for seed in range(100):
            spec = sample_spec(seed, 64)
            t = render_six_tuple(spec)
            shadow = cast_shadow_mask(spec, spec.scene_light)
            self.assertEqual(validate_six_tuple(t, shadow), [], 'seed {}'.format(seed))
            outside = (t.object_mask == 0) & (shadow == 0)
            self.assertTrue(np.array_equal(t.composite[:, outside], t.gt_harmonized[:, outside]))
            self.assertTrue(np.array_equal(t.background_mask, 1 - t.object_mask))

    def test_pure(self):
        """Testing rendering is deterministic."""
        spec = sample_spec(7, 64)
        a = render_six_tuple(spec, 'a')
        b = render_six_tuple(spec, 'a')
        for x, y in zip(a, b):
            if isinstance(x, np.ndarray):
                self.assertTrue(np.array_equal(x, y))
        self.assertFalse(a.composite.flags.writeable)

    def test_invalid_spec(self):
        """Testing footprint check."""
        spec = manual_spec(1.0, center=(3.0, 20.0))
        with self.assertRaises(ContractError):
            render_six_tuple(spec)


class TestSampling(unittest.TestCase):
    """Test class for scene sampling."""

    def test_deterministic(self):
        """Testing same seed gives same spec."""
        self.assertEqual(sample_spec(3, 64), sample_spec(3, 64))
        self.assertNotEqual(sample_spec(3, 64), sample_spec(4, 64))

    def test_diversity(self):
        """Testing scene light diversity."""
        lights = {(sample_spec(seed, 64).scene_light.azimuth, sample_spec(seed, 64).scene_light.elevation)
                  for seed in range(100)}
        self.assertGreaterEqual(len(lights), 95)

    def test_ratios(self):
        """Testing area ratios of sampled scenes."""
        for seed in range(100):
            spec = sample_spec(seed, 64)
            ratio = float(np.count_nonzero(object_mask(spec))) / 64 ** 2
            self.assertTrue(0.05 <= ratio <= 0.3, 'seed {}: {}'.format(seed, ratio))

    def test_side(self):
        """Testing side contract."""
        with self.assertRaises(ContractError):
            sample_spec(0, 48)
        self.assertEqual(sample_spec(0, 128).side, 128)

    def test_pair(self):
        """Testing paired scenes share everything but the object light."""
        a, b = sample_spec_pair(5, 64)
        self.assertEqual(a, sample_spec(5, 64))
        self.assertEqual(a._replace(object_light=b.object_light), b)
        self.assertNotEqual(a.object_light, b.object_light)
        ta, tb = render_six_tuple(a), render_six_tuple(b)
        self.assertTrue(np.array_equal(ta.gt_harmonized, tb.gt_harmonized))
        self.assertTrue(np.array_equal(ta.object_mask, tb.object_mask))


class TestOccluders(unittest.TestCase):
    """Test class for background occluders."""

    occluder = Occluder(center=(32.0, 50.0), radius=6.0, albedo=(0.4, 0.7, 0.5))

    def test_shadow_direction(self):
        """Testing occluder shadows fall away from the light."""
        cols = {}
        for azimuth in (0.0, math.pi):
            spec = manual_spec(0.6, azimuth=azimuth, occluders=[self.occluder])
            shadow = occluder_shadow_mask(spec, spec.scene_light)
            self.assertTrue(shadow.any())
            self.assertFalse(np.any((shadow > 0) & (occluder_mask(spec) > 0)))
            cols[azimuth] = float(np.nonzero(shadow)[1].mean())
        self.assertLess(cols[0.0], 32)
        self.assertGreater(cols[math.pi], 32)

    def test_no_occluders(self):
        """Testing scenes without occluders have empty occluder masks."""
        spec = manual_spec(0.6)
        self.assertFalse(occluder_mask(spec).any())
        self.assertFalse(occluder_shadow_mask(spec, spec.scene_light).any())
        self.assertEqual(occluder_area_ratio(spec), 0.0)

    def test_shared_background(self):
        """Testing occluders and their shadows are identical in composite and gt."""
        spec = manual_spec(0.6, azimuth=0.0, occluders=[self.occluder])
        t = render_six_tuple(spec)
        object_shadow = cast_shadow_mask(spec, spec.scene_light) > 0
        occ = occluder_mask(spec) > 0
        occ_shadow = (occluder_shadow_mask(spec, spec.scene_light) > 0) & ~object_shadow
        self.assertFalse(np.any(object_shadow & occ))
        self.assertEqual(validate_six_tuple(t, object_shadow.astype(np.float32)), [])
        for region in (occ, occ_shadow):
            self.assertTrue(region.any())
            self.assertTrue(np.array_equal(t.composite[:, region], t.gt_harmonized[:, region]))
        # ground albedo 0.6 lit by ambient 0.2 only
        self.assertTrue(np.allclose(t.gt_harmonized[:, occ_shadow], 0.12, atol=1e-6))
        lit = ~(occ | occ_shadow | object_shadow | (t.object_mask > 0))
        self.assertTrue(np.all(t.gt_harmonized[:, lit] > 0.12 + 1e-3))

    def test_area_ratio(self):
        """Testing occluder area ratio."""
        spec = manual_spec(0.6, occluders=[self.occluder])
        ratio = occluder_area_ratio(spec)
        self.assertEqual(ratio, float(np.count_nonzero(occluder_mask(spec))) / 64 ** 2)
        self.assertTrue(0 < ratio < math.pi * 7 ** 2 / 64 ** 2)

    def test_overlap(self):
        """Testing occluders must stay clear of the object and inside the image."""
        overlapping = Occluder(center=(32.0, 30.0), radius=6.0, albedo=(0.5, 0.5, 0.5))
        with self.assertRaises(ContractError):
            render_six_tuple(manual_spec(0.6, occluders=[overlapping]))
        outside = Occluder(center=(2.0, 50.0), radius=6.0, albedo=(0.5, 0.5, 0.5))
        with self.assertRaises(ContractError):
            render_six_tuple(manual_spec(0.6, occluders=[outside]))

    def test_sampled(self):
        """Testing sampled scenes place between zero and two clear occluders."""
        counts = []
        for seed in range(60):
            spec = sample_spec(seed, 64)
            counts.append(len(spec.occluders))
            self.assertFalse(np.any((object_mask(spec) > 0) & (occluder_mask(spec) > 0)), 'seed {}'.format(seed))
        self.assertEqual(set(counts), {0, 1, 2})

    def test_pair_shares_occluders(self):
        """Testing paired scenes share their occluders."""
        a, b = sample_spec_pair(5, 64)
        self.assertEqual(a.occluders, b.occluders)

    def test_from_dict(self):
        """Testing scene parameters survive their plain form."""
        for seed in range(10):
            spec = sample_spec(seed, 64)
            self.assertEqual(SceneSpec.from_dict(to_plain(spec)), spec)
