"""test_evaluate.py: Test image metrics and checkpoint evaluation."""
# pylint: disable=invalid-name
import math
import os
from pathlib import Path
import shutil
import tempfile
import unittest

import numpy as np
import pandas as pd
from PIL import Image as PILImage

from sigan.evaluate import MetricReport, evaluate, gaussian_window, load_generator, psnr, relight, rmse, score_images, ssim
from sigan.model.checkpoint import data_digest
from sigan.scene.store import SixTupleStore
from sigan.scripts.gen import generate
from sigan.train import TrainConfig, TrainState
from sigan.utils import CheckpointMismatchError, ContractError, jload

from fake import TINY_ENVMAP, naive_rmse, reference_ssim, tiny_config

class TestMetrics(unittest.TestCase):
    """Test class for RMSE, PSNR and SSIM."""

    def test_rmse(self):
        """Testing RMSE closed forms and the loop oracle."""
        zero = np.zeros((3, 8, 8))
        self.assertEqual(rmse(zero, zero), 0.0)
        self.assertAlmostEqual(rmse(zero, np.full((3, 8, 8), 0.1)), 0.1, places=12)
        rng = np.random.default_rng(0)
        for _ in range(5):
            a, b = rng.uniform(size=(2, 3, 16, 16))
            self.assertLess(abs(rmse(a, b) - naive_rmse(a, b)), 1e-12)
            self.assertEqual(rmse(a, b), rmse(b, a))
        with self.assertRaises(ContractError):
            rmse(zero, np.zeros((3, 8, 4)))

    def test_psnr(self):
        """Testing PSNR closed forms."""
        zero = np.zeros((3, 8, 8))
        self.assertAlmostEqual(psnr(zero, np.full((3, 8, 8), 0.1)), 20.0, places=9)
        self.assertAlmostEqual(psnr(zero, np.full((3, 8, 8), 0.01)), 40.0, places=9)
        self.assertEqual(psnr(zero, zero), math.inf)

    def test_window(self):
        """Testing the Gaussian window."""
        w = gaussian_window()
        self.assertEqual(w.numel(), 11)
        self.assertAlmostEqual(float(w.sum()), 1.0, places=12)
        self.assertEqual(int(w.argmax()), 5)
        self.assertTrue(np.allclose(w.numpy(), w.numpy()[::-1]))

    def test_ssim_closed_forms(self):
        """Testing identity and constant images."""
        rng = np.random.default_rng(1)
        a = rng.uniform(size=(3, 32, 32))
        self.assertAlmostEqual(ssim(a, a), 1.0, places=9)
        value = ssim(np.full((3, 32, 32), 0.7), np.full((3, 32, 32), 0.3))
        self.assertAlmostEqual(value, 0.4201 / 0.5801, places=7)
        self.assertLess(abs(value - 0.7243), 1e-3)
        self.assertAlmostEqual(ssim(a[0], a[0]), 1.0, places=9)

    def test_ssim_oracle(self):
        """Testing SSIM against the per-window reference."""
        rng = np.random.default_rng(2)
        for _ in range(20):
            a, b = rng.uniform(size=(2, 3, 32, 32))
            self.assertLess(abs(ssim(a, b) - reference_ssim(a, b)), 1e-6)

    def test_ssim_contract(self):
        """Testing symmetry, range and size contract."""
        rng = np.random.default_rng(3)
        a, b = rng.uniform(size=(2, 3, 24, 24))
        self.assertAlmostEqual(ssim(a, b), ssim(b, a), places=12)
        self.assertLessEqual(ssim(a, b), 1.0)
        with self.assertRaises(ContractError):
            ssim(np.zeros((3, 10, 10)), np.zeros((3, 10, 10)))
        with self.assertRaises(ContractError):
            ssim(np.zeros((3, 16, 16)), np.zeros((3, 16, 12)))

    def test_noise(self):
        """Testing metrics degrade with noise."""
        levels = (0.02, 0.05, 0.1, 0.2)
        scores = {k: np.zeros(len(levels)) for k in ('rmse', 'ssim', 'psnr')}
        for seed in range(10):
            rng = np.random.default_rng(seed)
            gt = rng.uniform(0.2, 0.8, size=(3, 32, 32))
            for ix, level in enumerate(levels):
                noisy = gt + rng.normal(0, level, size=gt.shape)
                for k, v in score_images(noisy, gt).items():
                    scores[k][ix] += v / 10
        self.assertTrue(np.all(np.diff(scores['rmse']) > 0))
        self.assertTrue(np.all(np.diff(scores['ssim']) < 0))
        self.assertTrue(np.all(np.diff(scores['psnr']) < 0))

    def test_report_dict(self):
        """Testing infinite values in the JSON report."""
        frame = pd.DataFrame({'psnr': [math.inf]}, index=pd.Index(['a'], name='sample_id'))
        report = MetricReport(config_digest='x', per_sample=frame, aggregate={'psnr': math.inf}, baseline={})
        d = report.to_dict()
        self.assertEqual(d['aggregate']['psnr'], 'inf')
        self.assertEqual(d['per_sample'], [{'sample_id': 'a', 'psnr': 'inf'}])
        self.assertEqual(d['region'], 'whole_image')


class TestEvaluate(unittest.TestCase):
    """Test class for checkpoint evaluation."""

    @classmethod
    def setUpClass(cls):
        cls.tmpdir = tempfile.mkdtemp()
        cls.data = os.path.join(cls.tmpdir, 'data')
        generate(cls.data, 4, seed=1, side=64, envmap_shape=TINY_ENVMAP, quiet=True)
        cls.config = TrainConfig(model=tiny_config(64))
        cls.ckpt = TrainState(cls.config).save(os.path.join(cls.tmpdir, 'ckpt.h5'), data_digest(64, TINY_ENVMAP))

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmpdir)

    def test_report(self):
        """Testing per-sample scores, aggregate and baseline."""
        out = Path(self.tmpdir).joinpath('report')
        report = evaluate(self.ckpt, self.data, out_dir=out, grids=True)
        frame = report.per_sample
        self.assertEqual(list(frame.index), ['sample_{:05d}'.format(ix) for ix in range(4)])
        for k in ('rmse', 'ssim', 'psnr'):
            self.assertLess(abs(report.aggregate[k] - frame[k].mean()), 1e-12)
            self.assertLess(abs(report.baseline[k] - frame['baseline_' + k].mean()), 1e-12)
        self.assertEqual(report.config_digest, self.config.model_config().digest())

        store = SixTupleStore(self.data)
        t = store.read('sample_00002')
        baseline = score_images(t.composite, t.gt_harmonized)
        self.assertAlmostEqual(frame.loc['sample_00002', 'baseline_rmse'], baseline['rmse'], places=12)
        self.assertGreater(baseline['rmse'], 0.0)

        self.assertEqual(jload(out.joinpath('report.json'))['config_digest'], report.config_digest)
        csv = pd.read_csv(str(out.joinpath('per_sample.csv')), index_col=0)
        self.assertEqual(len(csv), 4)
        with PILImage.open(str(out.joinpath('grids', 'sample_00000.png'))) as img:
            self.assertEqual(img.size, (192, 64))

    def test_subset(self):
        """Testing evaluation of given ids."""
        report = evaluate(self.ckpt, self.data, test_ids=['sample_00001'])
        self.assertEqual(list(report.per_sample.index), ['sample_00001'])
        with self.assertRaises(ContractError):
            evaluate(self.ckpt, self.data, test_ids=[])

    def test_mismatch(self):
        """Testing digest checks."""
        with self.assertRaises(CheckpointMismatchError) as cm:
            evaluate(self.ckpt, self.data, expected_config=tiny_config(64, base_channels=8))
        self.assertIn('digest', str(cm.exception))

        other = os.path.join(self.tmpdir, 'other')
        generate(other, 1, seed=1, side=64, envmap_shape=(4, 8), quiet=True)
        with self.assertRaises(CheckpointMismatchError) as cm:
            evaluate(self.ckpt, other)
        self.assertIn('digest', str(cm.exception))

    def test_relight(self):
        """Testing inference outputs."""
        generator, ckpt = load_generator(self.ckpt)
        self.assertFalse(generator.training)
        self.assertEqual(ckpt.header['config_digest'], self.config.model_config().digest())
        store = SixTupleStore(self.data)
        (relit, obj, bg), = relight(generator, [store.read('sample_00000')])
        self.assertEqual(relit.shape, (3, 64, 64))
        self.assertEqual(obj.shape, (3,) + TINY_ENVMAP)
        self.assertEqual(bg.shape, (3,) + TINY_ENVMAP)
        self.assertTrue(np.all((relit >= 0) & (relit <= 1)))


if __name__ == '__main__':
    unittest.main()
