"""test_train.py: Test the training loop, resume and ablation plumbing."""
# pylint: disable=invalid-name
import math
import os
import shutil
import tempfile
import unittest

import numpy as np
import torch

from sigan.core import AblationFlags, ModelConfig
from sigan.evaluate import evaluate
from sigan.model.batch import collate
from sigan.scene.render import render_six_tuple, sample_spec_pair
from sigan.scripts.gen import generate
from sigan.train import (ABLATION_ROWS, TrainConfig, TrainState, ablation_flags, ablation_matrix, epoch_order, fit,
                         read_loss_log, train_step)
from sigan.utils import ConfigurationError

from fake import TINY_ENVMAP, tiny_config

SLOW = os.environ.get('SIGAN_SLOW') == '1'


def _config(flags=None, **kwargs):
    params = dict(epochs=2, batch_size=1, checkpoint_every=0, log_every=0, model=tiny_config(64),
                  flags=flags if flags is not None else AblationFlags())
    params.update(kwargs)
    return TrainConfig(**params)


def _pair_batches(seed=0):
    a, b = sample_spec_pair(seed, 64, TINY_ENVMAP)
    return collate([render_six_tuple(a, 'a')]), collate([render_six_tuple(b, 'b')])


class TestTrainConfig(unittest.TestCase):
    """Test class for TrainConfig."""

    def test_defaults(self):
        """Testing default hyper-parameters."""
        config = TrainConfig()
        self.assertEqual(config.learning_rate, 1e-4)
        self.assertEqual(config.adam_betas, (0.9, 0.999))
        self.assertEqual(config.batch_size, 1)
        self.assertEqual(config.flags, AblationFlags())
        self.assertEqual(config.clip_norm(), 0.0)
        self.assertEqual(_config().clip_norm(), 10.0)
        self.assertEqual(_config(grad_clip=0).clip_norm(), 0.0)
        self.assertEqual(_config(grad_clip=2.5).clip_norm(), 2.5)

    def test_model_config(self):
        """Testing flags are copied into the model configuration."""
        config = _config(AblationFlags.basic())
        self.assertEqual(config.model_config().ablation, AblationFlags.basic())
        self.assertNotEqual(config.model_config().digest(), _config().model_config().digest())

    def test_validate(self):
        """Testing invalid values."""
        self.assertEqual(_config().validate(), _config())
        for kwargs in ({'epochs': 0}, {'batch_size': 0}, {'learning_rate': 0.0}, {'adam_betas': (1.0, 0.9)},
                       {'grad_clip': -1.0}, {'checkpoint_every': -1}):
            with self.assertRaises(ConfigurationError):
                _config(**kwargs).validate()

    def test_from_dict(self):
        """Testing partial dicts and unknown keys."""
        config = TrainConfig.from_dict({'epochs': 3, 'adam_betas': [0.5, 0.9],
                                        'flags': AblationFlags.basic()._asdict(),
                                        'model': tiny_config(64).to_dict()})
        self.assertEqual(config.epochs, 3)
        self.assertEqual(config.adam_betas, (0.5, 0.9))
        self.assertEqual(config.flags, AblationFlags.basic())
        self.assertEqual(config.model, tiny_config(64))
        self.assertEqual(TrainConfig.from_dict(config.to_dict()), config)
        with self.assertRaises(ConfigurationError):
            TrainConfig.from_dict({'epochs': 3, 'learning_rat': 1e-3})


class TestAblation(unittest.TestCase):
    """Test class for the ablation matrix."""

    def test_matrix(self):
        """Testing the ten configurations."""
        matrix = ablation_matrix(_config())
        self.assertEqual(len(matrix), 10)
        self.assertEqual(matrix[0].flags, AblationFlags.basic())
        self.assertEqual(matrix[-1].flags, AblationFlags())
        self.assertEqual(len({c.flags for c in matrix}), 10)
        for config in matrix:
            self.assertEqual(config.model, tiny_config(64))
        self.assertEqual([c.flags.use_iem for c in matrix], [False] + [True] * 7 + [False, True])

    def test_lookup(self):
        """Testing lookup by name and index."""
        self.assertEqual(ablation_flags('basic'), AblationFlags.basic())
        self.assertEqual(ablation_flags('full'), AblationFlags())
        self.assertEqual(ablation_flags(9), AblationFlags())
        self.assertEqual(ablation_flags('1'), ABLATION_ROWS['msa_iem'])
        for row in ('everything', 10, '-1'):
            with self.assertRaises(ConfigurationError):
                ablation_flags(row)


class TestTrainStep(unittest.TestCase):
    """Test class for single training steps."""

    @classmethod
    def setUpClass(cls):
        cls.batch, cls.partner = _pair_batches(0)

    def test_generator_updated(self):
        """Testing one step moves the generator."""
        state = TrainState(_config())
        before = [p.detach().clone() for p in state.generator.parameters()]
        _, report = train_step(state, self.batch, self.partner)
        self.assertEqual(state.step, 1)
        changed = [not torch.equal(a, b) for a, b in zip(before, state.generator.parameters())]
        self.assertTrue(any(changed))
        self.assertEqual(report.non_finite(), [])
        self.assertGreater(report.l_adv_d, 0.0)
        self.assertGreater(report.l_nonillu, 0.0)
        self.assertGreater(report.l_per, 0.0)
        self.assertIn('l_total', state.rolling)

    def test_basic_gating(self):
        """Testing disabled terms stay zero and the discriminator is untouched."""
        state = TrainState(_config(AblationFlags.basic()))
        self.assertIsNone(state.extractor)
        before = [p.detach().clone() for p in state.discriminator.parameters()]
        _, report = train_step(state, self.batch, self.partner)
        for a, b in zip(before, state.discriminator.parameters()):
            self.assertTrue(torch.equal(a, b))
        self.assertEqual((report.l_nonillu, report.l_per, report.l_adv_g, report.l_adv_d), (0.0, 0.0, 0.0, 0.0))
        self.assertGreater(report.l_illu, 0.0)
        self.assertTrue(math.isclose(report.l_total, 25.0 * report.l_illu, rel_tol=1e-5))

    def test_no_partner(self):
        """Testing l_nonillu without a partner batch."""
        state = TrainState(_config())
        _, report = train_step(state, self.batch)
        self.assertEqual(report.l_nonillu, 0.0)

    def test_every_row(self):
        """Testing finite losses and gated terms for every ablation row."""
        for config in ablation_matrix(_config()):
            state = TrainState(config)
            flags = config.flags
            for _ in range(2):
                _, report = train_step(state, self.batch, self.partner)
                self.assertEqual(report.non_finite(), [], flags.label())
                if not flags.use_l_per:
                    self.assertEqual(report.l_per, 0.0)
                if not flags.use_l_nonillu:
                    self.assertEqual(report.l_nonillu, 0.0)
                if not flags.use_l_adv:
                    self.assertEqual(report.l_adv_g, 0.0)
                    self.assertEqual(report.l_adv_d, 0.0)

    def test_deterministic(self):
        """Testing identical states give identical losses."""
        reports = []
        for _ in range(2):
            state = TrainState(_config())
            reports.append([train_step(state, self.batch, self.partner)[1] for _ in range(3)])
        self.assertEqual(reports[0], reports[1])

    def test_epoch_order(self):
        """Testing epoch permutations."""
        order = epoch_order(0, 0, 16)
        self.assertEqual(sorted(order.tolist()), list(range(16)))
        self.assertTrue(np.array_equal(order, epoch_order(0, 0, 16)))
        self.assertFalse(np.array_equal(order, epoch_order(0, 1, 16)))
        self.assertFalse(np.array_equal(order, epoch_order(1, 0, 16)))


class TestFit(unittest.TestCase):
    """Test class for fit and resume."""

    @classmethod
    def setUpClass(cls):
        cls.tmpdir = tempfile.mkdtemp()
        cls.data = os.path.join(cls.tmpdir, 'data')
        generate(cls.data, 8, seed=0, side=64, paired=True, envmap_shape=TINY_ENVMAP, quiet=True)
        cls.config = _config(checkpoint_every=4)
        cls.run_a = os.path.join(cls.tmpdir, 'a')
        cls.final = fit(cls.config, cls.data, cls.run_a, quiet=True)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmpdir)

    def test_outputs(self):
        """Testing loss log and checkpoints."""
        losses = read_loss_log(os.path.join(self.run_a, 'loss_log.jsonl'))
        self.assertEqual(len(losses), 32)
        self.assertEqual(list(losses.index), list(range(1, 33)))
        self.assertEqual(list(losses.columns), ['l_illu', 'l_nonillu', 'l_per', 'l_adv_g', 'l_adv_d', 'l_total'])
        self.assertTrue(np.all(np.isfinite(losses.values)))
        self.assertTrue((losses['l_nonillu'] > 0).all())
        self.assertTrue(os.path.exists(str(self.final)))
        self.assertTrue(os.path.exists(os.path.join(self.run_a, 'checkpoint_0000004.h5')))
        self.assertTrue(os.path.exists(os.path.join(self.run_a, 'train_config.json')))
        self.assertEqual(TrainState.restore(self.final).step, 32)

    def test_resume(self):
        """Testing a resumed run reproduces the loss log."""
        run_b = os.path.join(self.tmpdir, 'b')
        os.makedirs(run_b)
        ckpt = os.path.join(run_b, 'start.h5')
        shutil.copy(os.path.join(self.run_a, 'checkpoint_0000004.h5'), ckpt)
        fit(self.config, self.data, run_b, resume=ckpt, quiet=True)

        full = read_loss_log(os.path.join(self.run_a, 'loss_log.jsonl'))
        resumed = read_loss_log(os.path.join(run_b, 'loss_log.jsonl'))
        self.assertEqual(list(resumed.index), list(range(5, 33)))
        self.assertTrue(np.allclose(resumed.values, full.loc[5:].values, rtol=1e-6, atol=1e-9))

    def test_rerun(self):
        """Testing identical seeds give identical loss logs."""
        run_c = os.path.join(self.tmpdir, 'c')
        fit(self.config._replace(epochs=1, checkpoint_every=0), self.data, run_c, quiet=True)
        with open(os.path.join(run_c, 'loss_log.jsonl'), 'r') as fp:
            rerun = fp.read().splitlines()
        with open(os.path.join(self.run_a, 'loss_log.jsonl'), 'r') as fp:
            full = fp.read().splitlines()
        self.assertEqual(rerun, full[:16])

    def test_mismatch(self):
        """Testing dataset and model shapes must agree."""
        with self.assertRaises(ConfigurationError):
            fit(_config(model=tiny_config(64, envmap_shape=(4, 8))), self.data, os.path.join(self.tmpdir, 'd'),
                quiet=True)
        with self.assertRaises(ConfigurationError):
            fit(self.config, self.data, os.path.join(self.tmpdir, 'e'), train_ids=[], quiet=True)


@unittest.skipUnless(SLOW, 'set SIGAN_SLOW=1 to run')
class TestLongRuns(unittest.TestCase):
    """Test class for the overfit and ablation smoke runs."""

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        self.data = os.path.join(self.tmpdir, 'data')
        generate(self.data, 8, seed=0, side=64, paired=True, envmap_shape=TINY_ENVMAP, quiet=True)

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def test_overfit(self):
        """Testing the full model overfits 16 samples."""
        model = ModelConfig(image_side=64, envmap_shape=TINY_ENVMAP, base_channels=16, max_channels=128)
        config = TrainConfig(epochs=125, model=model, checkpoint_every=0, log_every=500)
        out = os.path.join(self.tmpdir, 'overfit')
        final = fit(config, self.data, out, quiet=True)

        losses = read_loss_log(os.path.join(out, 'loss_log.jsonl'))['l_total']
        self.assertLess(losses.loc[1900:2000].mean(), 0.5 * losses.loc[50:150].mean())
        report = evaluate(final, self.data)
        self.assertLess(report.aggregate['rmse'], report.baseline['rmse'])

    def test_ablation_smoke(self):
        """Testing 50 steps of every ablation row."""
        for ix, config in enumerate(ablation_matrix(_config(epochs=4))):
            out = os.path.join(self.tmpdir, 'row{}'.format(ix))
            fit(config, self.data, out, quiet=True)
            losses = read_loss_log(os.path.join(out, 'loss_log.jsonl'))
            self.assertGreaterEqual(len(losses), 50)
            self.assertTrue(np.all(np.isfinite(losses.values)))
            for flag, column in (('use_l_per', 'l_per'), ('use_l_nonillu', 'l_nonillu'), ('use_l_adv', 'l_adv_g'),
                                 ('use_l_adv', 'l_adv_d')):
                if not getattr(config.flags, flag):
                    self.assertTrue((losses[column] == 0).all(), '{} {}'.format(config.flags.label(), column))


if __name__ == '__main__':
    unittest.main()
