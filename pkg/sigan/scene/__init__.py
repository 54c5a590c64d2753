"""Procedural six-tuple generation and the on-disk dataset format."""
from sigan.scene.render import (DirectionalLight, Occluder, SceneSpec, cast_shadow_mask, envmap_from_light,
                                lambert_shade, render_six_tuple, sample_spec, sample_spec_pair)
from sigan.scene.store import (DatasetManifest, DatasetStats, SixTupleStore, compute_stats,
                               read_sample, split, write_sample)
