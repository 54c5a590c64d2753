"""
Adversarial training of the relighting generator.

Each step first updates the discriminator on (gt, mask) versus
(generated, mask) and then the generator on the weighted total loss. The
sample order of an epoch is a pure function of (seed, epoch), so a run resumed
from a checkpoint reproduces the loss log of an uninterrupted run.
"""
from collections import OrderedDict
import json
import logging
import math
from pathlib import Path
from typing import NamedTuple, Optional, Tuple
import warnings

import numpy as np
import pandas as pd
from progress.bar import Bar
import torch

from sigan.core import AblationFlags, LossWeights, ModelConfig
from sigan.losses import LossReport, PerceptualExtractor, l_adv, l_illu, l_nonillu, l_per, total_loss
from sigan.model.batch import collate
from sigan.model.checkpoint import (data_digest, load_checkpoint, restore_module, restore_optimizer,
                                    save_checkpoint)
from sigan.model.discriminator import Discriminator
from sigan.model.generator import Generator
from sigan.scene.store import SixTupleStore
from sigan.utils import (CheckpointMismatchError, ConfigurationError, TrainingError, derive_seed,
                         jdump, to_plain)

__all__ = [
    'LOSS_LOG',
    'TrainConfig',
    'TrainState',
    'train_step',
    'epoch_order',
    'fit',
    'read_loss_log',
    'ABLATION_ROWS',
    'ablation_flags',
    'ablation_matrix',
]

log = logging.getLogger(__name__)

LOSS_LOG = 'loss_log.jsonl'
LOG_FIELDS = ('l_illu', 'l_nonillu', 'l_per', 'l_adv_g', 'l_adv_d', 'l_total')
AUTO_CLIP_NORM = 10.0
AUTO_CLIP_MAX_SIDE = 128
ROLLING_DECAY = 0.95

ABLATION_ROWS = OrderedDict([
    ('basic', AblationFlags.basic()),
    ('msa_iem', AblationFlags(use_msa=True, use_iem=True, use_l_per=False, use_l_nonillu=False, use_l_adv=False)),
    ('adv_iem', AblationFlags(use_msa=False, use_iem=True, use_l_per=False, use_l_nonillu=False, use_l_adv=True)),
    ('per_iem', AblationFlags(use_msa=False, use_iem=True, use_l_per=True, use_l_nonillu=False, use_l_adv=False)),
    ('per_nonillu_adv_iem', AblationFlags(use_msa=False, use_iem=True, use_l_per=True, use_l_nonillu=True, use_l_adv=True)),
    ('msa_adv_nonillu_iem', AblationFlags(use_msa=True, use_iem=True, use_l_per=False, use_l_nonillu=True, use_l_adv=True)),
    ('msa_per_nonillu_iem', AblationFlags(use_msa=True, use_iem=True, use_l_per=True, use_l_nonillu=True, use_l_adv=False)),
    ('msa_adv_per_iem', AblationFlags(use_msa=True, use_iem=True, use_l_per=True, use_l_nonillu=False, use_l_adv=True)),
    ('msa_per_nonillu_adv', AblationFlags(use_msa=True, use_iem=False, use_l_per=True, use_l_nonillu=True, use_l_adv=True)),
    ('full', AblationFlags()),
])


class TrainConfig(NamedTuple):
    """Training hyper-parameters.

    flags is authoritative for the ablation switches; it is copied into the
    model configuration by model_config(). grad_clip None selects the
    automatic setting (10.0 below image side 128, off otherwise), 0 disables.
    """
    epochs: int = 80
    batch_size: int = 1
    learning_rate: float = 1e-4
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    weights: LossWeights = LossWeights()
    flags: AblationFlags = AblationFlags()
    seed: int = 0
    checkpoint_every: int = 1000
    log_every: int = 50
    grad_clip: Optional[float] = None
    d_first: bool = True
    model: ModelConfig = ModelConfig()

    def model_config(self):
        return self.model._replace(ablation=self.flags)

    def clip_norm(self):
        if self.grad_clip is None:
            return AUTO_CLIP_NORM if self.model.image_side < AUTO_CLIP_MAX_SIDE else 0.0
        return float(self.grad_clip)

    def validate(self):
        """Checks the configuration.

        Raises:
            ConfigurationError: invalid value
        """

        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError('epochs and batch_size must be positive, got {} and {}'.format(
                self.epochs, self.batch_size))
        if not self.learning_rate > 0:
            raise ConfigurationError('learning_rate must be positive, got {}'.format(self.learning_rate))
        if len(self.adam_betas) != 2 or not all(0 <= b < 1 for b in self.adam_betas):
            raise ConfigurationError('adam_betas must be two values in [0, 1), got {}'.format(self.adam_betas))
        if self.checkpoint_every < 0 or self.log_every < 0:
            raise ConfigurationError('checkpoint_every and log_every must not be negative')
        if self.grad_clip is not None and self.grad_clip < 0:
            raise ConfigurationError('grad_clip must not be negative, got {}'.format(self.grad_clip))
        self.weights.validate()
        self.model_config().validate()
        return self

    def to_dict(self):
        return to_plain(self)

    @classmethod
    def from_dict(cls, d):
        """Builds a TrainConfig from a (possibly partial) dict.

        Raises:
            ConfigurationError: unknown keys
        """

        d = dict(d)
        unknown = set(d) - set(cls._fields)
        if unknown:
            raise ConfigurationError('unknown training configuration keys: {}'.format(', '.join(sorted(unknown))))
        if 'weights' in d:
            d['weights'] = LossWeights.from_dict(d['weights'])
        if 'flags' in d:
            d['flags'] = AblationFlags.from_dict(d['flags'])
        if 'model' in d:
            d['model'] = ModelConfig.from_dict(d['model'])
        if 'adam_betas' in d:
            d['adam_betas'] = tuple(float(b) for b in d['adam_betas'])
        return cls(**d)


class TrainState(object):
    """Networks, optimisers, step counter and rolling loss averages."""

    def __init__(self, config):
        """Creates a fresh state.

        Args:
            config: TrainConfig
        """

        self.config = config
        model_config = config.model_config()
        self.generator = Generator(model_config, seed=config.seed)
        self.discriminator = Discriminator(model_config, seed=config.seed)
        if config.flags.use_l_per:
            self.extractor = PerceptualExtractor(model_config.perceptual_width, seed=config.seed,
                                                 weights=model_config.perceptual_weights)
        else:
            self.extractor = None
        self.opt_g = torch.optim.Adam(self.generator.parameters(), lr=config.learning_rate,
                                      betas=tuple(config.adam_betas))
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=config.learning_rate,
                                      betas=tuple(config.adam_betas))
        self.step = 0
        self.rolling = {}

    def update_rolling(self, report):
        for key, value in report._asdict().items():
            prev = self.rolling.get(key)
            self.rolling[key] = value if prev is None else ROLLING_DECAY * prev + (1 - ROLLING_DECAY) * value

    def save(self, path, data_digest_=None):
        return save_checkpoint(path, self.generator, self.discriminator, self.opt_g, self.opt_d,
                               data_digest_=data_digest_, train_config=self.config,
                               step=self.step, rolling=self.rolling)

    @classmethod
    def restore(cls, path, config=None):
        """Rebuilds a state from a checkpoint.

        Args:
            path: checkpoint file
            config: TrainConfig to continue with (default: the stored one)

        Raises:
            CheckpointMismatchError: checkpoint model differs from config
        """

        ckpt = load_checkpoint(path)
        if config is None:
            if not ckpt.header.get('train_config'):
                raise CheckpointMismatchError(path, 'checkpoint holds no training configuration')
            config = TrainConfig.from_dict(ckpt.header['train_config'])
        if ckpt.header['config_digest'] != config.model_config().digest():
            raise CheckpointMismatchError(path, 'config digest {} does not match training config digest {}'.format(
                ckpt.header['config_digest'], config.model_config().digest()))

        state = cls(config)
        restore_module(state.generator, ckpt.generator, path)
        restore_module(state.discriminator, ckpt.discriminator, path)
        restore_optimizer(state.opt_g, ckpt.optim_g)
        restore_optimizer(state.opt_d, ckpt.optim_d)
        state.step = ckpt.step
        state.rolling = {k: float(v) for k, v in ckpt.header.get('rolling', {}).items()}
        return state


def _clip(parameters, norm):
    if norm > 0:
        torch.nn.utils.clip_grad_norm_(parameters, norm)


def _update_discriminator(state, batch, fake):
    d_real = state.discriminator(batch.gt_harmonized, batch.object_mask)
    d_fake = state.discriminator(fake, batch.object_mask)
    d_loss, _ = l_adv(d_real, d_fake)
    if not torch.isfinite(d_loss):
        raise TrainingError('non-finite l_adv_d at step {}'.format(state.step + 1))
    state.opt_d.zero_grad()
    d_loss.backward()
    _clip(state.discriminator.parameters(), state.config.clip_norm())
    state.opt_d.step()
    return float(d_loss.item())


def train_step(state, batch, partner=None):
    """One discriminator update followed by one generator update.

    Args:
        state: TrainState (modified in place)
        batch: TensorBatch
        partner: TensorBatch with the paired samples of batch (same object
            under a different illumination), required for l_nonillu

    Returns:
        (state, LossReport)

    Raises:
        TrainingError: a loss term is not finite
    """

    config = state.config
    flags = config.flags
    generator = state.generator
    generator.train()
    state.discriminator.train()

    out = generator(batch.composite, batch.object_mask, batch.background_mask)

    d_loss = 0.0
    if flags.use_l_adv and config.d_first:
        d_loss = _update_discriminator(state, batch, out.relit.detach())

    zero = out.relit.new_zeros(())
    terms = OrderedDict()
    terms['l_illu'] = l_illu(out.obj_illum_pred, batch.object_illum, out.bg_illum_pred, batch.background_illum)
    terms['l_nonillu'] = zero
    if flags.use_l_nonillu and partner is not None:
        partner_out = generator(partner.composite, partner.object_mask, partner.background_mask)
        terms['l_nonillu'] = l_nonillu(out.bottleneck.f_noillu_obj, partner_out.bottleneck.f_noillu_obj)
    terms['l_per'] = l_per(out, batch, state.extractor) if flags.use_l_per else zero
    terms['l_adv_g'] = zero
    if flags.use_l_adv:
        d_fake = state.discriminator(out.relit, batch.object_mask)
        _, terms['l_adv_g'] = l_adv(torch.ones_like(d_fake), d_fake)

    for name, value in terms.items():
        if not torch.isfinite(value):
            raise TrainingError('non-finite {} at step {}'.format(name, state.step + 1))

    total = total_loss(LossReport(**terms), config.weights, flags)
    if not torch.isfinite(total):
        raise TrainingError('non-finite l_total at step {}'.format(state.step + 1))

    state.opt_g.zero_grad()
    total.backward()
    _clip(generator.parameters(), config.clip_norm())
    state.opt_g.step()

    if flags.use_l_adv and not config.d_first:
        d_loss = _update_discriminator(state, batch, out.relit.detach())

    state.step += 1
    report = LossReport(l_illu=float(terms['l_illu'].item()),
                        l_nonillu=float(terms['l_nonillu'].item()) if flags.use_l_nonillu else 0.0,
                        l_per=float(terms['l_per'].item()) if flags.use_l_per else 0.0,
                        l_adv_g=float(terms['l_adv_g'].item()) if flags.use_l_adv else 0.0,
                        l_adv_d=d_loss if flags.use_l_adv else 0.0,
                        l_total=float(total.item()))
    state.update_rolling(report)
    return state, report


def epoch_order(seed, epoch, n):
    """Sample permutation of an epoch."""

    return np.random.default_rng(derive_seed(seed, 'epoch', epoch)).permutation(n)


def _truncate_log(path, step):
    """Keeps the records up to step (inclusive)."""

    if not path.exists():
        return
    kept = []
    with open(str(path), 'r', encoding='utf-8') as fp:
        for line in fp:
            if line.strip() and json.loads(line)['step'] <= step:
                kept.append(line)
    with open(str(path), 'w', encoding='utf-8') as fp:
        fp.writelines(kept)


def read_loss_log(path):
    """Loss log as a pandas DataFrame indexed by step."""

    return pd.read_json(str(path), lines=True).set_index('step')


def fit(config, data_dir, out_dir, resume=None, train_ids=None, quiet=False):
    """Trains on a dataset directory.

    Args:
        config: TrainConfig
        data_dir: dataset directory
        out_dir: directory for checkpoints, loss log and the used configuration
        resume: checkpoint to continue from
        train_ids: subset of sample ids (default: all)
        quiet: no progress bar

    Returns:
        path of the final checkpoint
    """

    config.validate()
    store = SixTupleStore(data_dir)
    manifest = store.manifest
    model_config = config.model_config()
    if manifest.image_side != model_config.image_side or tuple(manifest.envmap_shape) != tuple(model_config.envmap_shape):
        raise ConfigurationError('dataset (side {}, envmap {}) does not match model (side {}, envmap {})'.format(
            manifest.image_side, tuple(manifest.envmap_shape), model_config.image_side, tuple(model_config.envmap_shape)))

    ids = list(train_ids) if train_ids is not None else store.ids
    if not ids:
        raise ConfigurationError('no training samples')

    needed = list(ids)
    for sample_id in ids:
        partner = manifest.partner(sample_id)
        if partner is not None and partner not in needed:
            needed.append(partner)
    cache = {sample_id: store.read(sample_id) for sample_id in needed}

    if config.flags.use_l_nonillu and any(manifest.partner(x) is None for x in ids):
        warnings.warn('l_nonillu is enabled but {} training sample(s) have no illumination partner; '
                      'the term is 0 for batches containing them'.format(
                          sum(manifest.partner(x) is None for x in ids)), Warning)

    torch.manual_seed(config.seed)
    if resume is not None:
        state = TrainState.restore(resume, config)
        log.info('Resuming from %s at step %s', resume, state.step)
    else:
        state = TrainState(config)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jdump(config, out_dir.joinpath('train_config.json'))
    ddig = data_digest(manifest.image_side, manifest.envmap_shape)

    log_path = out_dir.joinpath(LOSS_LOG)
    _truncate_log(log_path, state.step)

    n = len(ids)
    steps_per_epoch = int(math.ceil(n / float(config.batch_size)))
    total_steps = config.epochs * steps_per_epoch
    log.info('Training %s steps (%s samples, %s epochs, flags: %s)', total_steps, n, config.epochs, config.flags.label())

    bar = None
    if not quiet and total_steps > state.step:
        bar = Bar('Training', max=total_steps - state.step)

    with open(str(log_path), 'a', encoding='utf-8') as fp:
        while state.step < total_steps:
            epoch, pos = divmod(state.step, steps_per_epoch)
            order = epoch_order(config.seed, epoch, n)
            batch_ids = [ids[i] for i in order[pos * config.batch_size:(pos + 1) * config.batch_size]]
            batch = collate([cache[x] for x in batch_ids])

            partner_ids = [manifest.partner(x) for x in batch_ids]
            partner = None
            if config.flags.use_l_nonillu and all(p is not None for p in partner_ids):
                partner = collate([cache[p] for p in partner_ids])

            _, report = train_step(state, batch, partner)

            record = OrderedDict([('step', state.step)])
            record.update((k, getattr(report, k)) for k in LOG_FIELDS)
            fp.write(json.dumps(record) + '\n')

            if config.log_every and state.step % config.log_every == 0:
                log.info('step %s: l_total %.5f (rolling %.5f)', state.step, report.l_total, state.rolling['l_total'])
            if config.checkpoint_every and state.step % config.checkpoint_every == 0:
                fp.flush()
                state.save(out_dir.joinpath('checkpoint_{:07d}.h5'.format(state.step)), ddig)
            if bar is not None:
                bar.next()

    if bar is not None:
        bar.finish()

    final = state.save(out_dir.joinpath('checkpoint_final.h5'), ddig)
    log.info('Training finished, final checkpoint %s', final)
    return final


def ablation_flags(row):
    """Flags of an ablation row, by name or index.

    Raises:
        ConfigurationError: unknown row
    """

    names = list(ABLATION_ROWS)
    if isinstance(row, int) or (isinstance(row, str) and row.isdigit()):
        ix = int(row)
        if not 0 <= ix < len(names):
            raise ConfigurationError('ablation row index must lie in [0, {}), got {}'.format(len(names), ix))
        return ABLATION_ROWS[names[ix]]
    if row not in ABLATION_ROWS:
        raise ConfigurationError('unknown ablation row {!r}, choose from {}'.format(row, ', '.join(names)))
    return ABLATION_ROWS[row]


def ablation_matrix(base):
    """The ten ablation configurations, from Basic to the full model."""

    return [base._replace(flags=flags) for flags in ABLATION_ROWS.values()]
