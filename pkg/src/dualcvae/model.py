"""Social-DualCVAE: two encoders, pattern and latent prior/recognition pairs, one decoder."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .batch import SceneBatch
from .decoder import Decoder, integrate_displacements
from .encoder import Encoder, EncoderConfig
from .latent import GaussianHead, reparameterize
from .nn import Module
from .objective import LossBreakdown, LossWeights, total_loss
from .patterns import PatternClassifier, PatternConfig, PatternContext, gumbel_softmax, hard_sample


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    patterns: PatternConfig = field(default_factory=PatternConfig)
    z_dim: int = 16
    latent_hidden: int = 64
    decoder_hidden: int = 64
    decoder_embed: int = 32


@dataclass
class Streams:
    """Independent generators for each source of randomness in a forward pass."""
    gumbel: np.random.Generator
    epsilon: np.random.Generator
    dropout: np.random.Generator | None = None


class SocialDualCVAE(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        enc, pat = cfg.encoder, cfg.patterns
        d = enc.lstm_hidden
        self.prior_encoder = Encoder(enc, rng)
        self.recog_encoder = Encoder(enc, rng)
        self.prior_patterns = PatternClassifier(d, pat, rng)
        self.recog_patterns = PatternClassifier(d, pat, rng)
        self.context = PatternContext(pat, rng)
        self.prior_latent = GaussianHead(d, pat.context_dim, cfg.z_dim, rng, cfg.latent_hidden)
        self.recog_latent = GaussianHead(d, pat.context_dim, cfg.z_dim, rng, cfg.latent_hidden)
        self.decoder = Decoder(d, cfg.z_dim, pat.context_dim, rng, cfg.decoder_hidden, cfg.decoder_embed)

    def loss(self, batch: SceneBatch, weights: LossWeights, streams: Streams) -> LossBreakdown:
        """Training pass: recognition samples drive the decoder, priors are pulled toward them."""
        pairs = batch.pairs
        drop = streams.dropout if self.training else None
        tau = self.cfg.patterns.temperature
        h_x = self.prior_encoder(batch.observed, pairs, drop)
        h_xy = self.recog_encoder(batch.full, pairs, drop)
        p_c = self.prior_patterns(h_x, pairs)
        q_c = self.recog_patterns(h_xy, pairs)
        # recognition sample first so its noise does not depend on the prior draw
        c_q = gumbel_softmax(q_c.logits, tau, rng=streams.gumbel)
        c_p = gumbel_softmax(p_c.logits, tau, rng=streams.gumbel)
        ctx_q = self.context(c_q, pairs)
        ctx_p = self.context(c_p, pairs)
        q_z = self.recog_latent(h_xy, ctx_q)
        p_z = self.prior_latent(h_x, ctx_p)
        z = reparameterize(q_z, rng=streams.epsilon)
        disp = self.decoder(h_x, z, ctx_q, batch.last_displacement, batch.future.shape[1])
        y_hat = integrate_displacements(disp, batch.last_observed)
        return total_loss(batch.future, y_hat, q_z, p_z, q_c.probs, p_c.probs, weights,
                          pairs.ped_weights(), pairs.pair_weights())

    def sample(self, batch: SceneBatch, k: int, t_pred: int, streams_for) -> np.ndarray:
        """``K x M x t_pred x 2`` future positions drawn from the prior path.

        ``streams_for(k)`` returns the :class:`Streams` used for sample ``k``.
        Runs without recording a graph and with the current train/eval flag.
        """
        pairs = batch.pairs
        cfg = self.cfg.patterns
        out = np.empty((k, batch.num_peds, t_pred, 2))
        with T.no_grad():
            h_x = self.prior_encoder(batch.observed, pairs)
            logits = self.prior_patterns(h_x, pairs).logits
            for i in range(k):
                s = streams_for(i)
                c = hard_sample(logits) if cfg.hard_sample_at_test else gumbel_softmax(logits, cfg.temperature, rng=s.gumbel)
                ctx = self.context(c, pairs)
                z = reparameterize(self.prior_latent(h_x, ctx), rng=s.epsilon)
                disp = self.decoder(h_x, z, ctx, batch.last_displacement, t_pred)
                out[i] = integrate_displacements(disp, batch.last_observed).data
        return out

    def pattern_logits(self, batch: SceneBatch) -> np.ndarray:
        with T.no_grad():
            h_x = self.prior_encoder(batch.observed, batch.pairs)
            return self.prior_patterns(h_x, batch.pairs).logits.data
