//! The motion model: an interaction autoencoder (GRU encoder/decoder whose
//! encoder states are max-pooled across agents) and the autoregressive
//! recurrent residual cell that emits four K-way distributions per step.

pub mod layers;
pub mod tape;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::geometry::Velocity;
use crate::math::{exp, ln};
use crate::rng;
use layers::{relu, Gru, Linear, Lstm};

/// Velocities are multiplied by this before entering any network layer, so
/// that typical motions (a fraction of a percent of the frame per frame) land
/// near unit scale.
pub const VELOCITY_INPUT_SCALE: f64 = 100.0;

/// Probabilities are floored at this value before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Layer widths. The interaction width equals the encoder's hidden width since
/// interaction vectors are pooled encoder states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub k: usize,
    pub interaction_dim: usize,
    pub manet_embed_dim: usize,
    pub manet_hidden_dim: usize,
    pub artist_embed_dim: usize,
    pub artist_hidden_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            k: 1024,
            interaction_dim: 256,
            manet_embed_dim: 128,
            manet_hidden_dim: 256,
            artist_embed_dim: 512,
            artist_hidden_dim: 512,
        }
    }
}

impl ModelConfig {
    /// Small widths for desk-scale runs and tests.
    pub fn desk(k: usize, hidden: usize) -> Self {
        Self {
            k,
            interaction_dim: hidden,
            manet_embed_dim: hidden,
            manet_hidden_dim: hidden,
            artist_embed_dim: hidden,
            artist_hidden_dim: hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.k,
            self.interaction_dim,
            self.manet_embed_dim,
            self.manet_hidden_dim,
            self.artist_embed_dim,
            self.artist_hidden_dim,
        ];
        if dims.contains(&0) {
            return Err(Error::Config(
                "all model dimensions must be positive".into(),
            ));
        }
        if self.interaction_dim != self.manet_hidden_dim {
            return Err(Error::Config(format!(
                "interaction_dim ({}) must equal manet_hidden_dim ({})",
                self.interaction_dim, self.manet_hidden_dim
            )));
        }
        Ok(())
    }
}

/// All trainable arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub enc_embed: Linear,
    pub enc_gru: Gru,
    pub dec_embed: Linear,
    pub dec_gru: Gru,
    pub dec_out1: Linear,
    pub dec_out2: Linear,
    pub res_in: Linear,
    pub res_out: Linear,
    pub res_skip: Linear,
    pub fusion: Linear,
    pub lstm: Lstm,
    pub heads: [Linear; 4],
}

const HEAD_NAMES: [&str; 4] = ["x", "y", "w", "h"];

impl Weights {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (me, mh, ae, ah) = (
            cfg.manet_embed_dim,
            cfg.manet_hidden_dim,
            cfg.artist_embed_dim,
            cfg.artist_hidden_dim,
        );
        Self {
            enc_embed: Linear::zeros(4, me, true),
            enc_gru: Gru::zeros(me, mh),
            dec_embed: Linear::zeros(4, me, true),
            dec_gru: Gru::zeros(me, mh),
            dec_out1: Linear::zeros(mh, me, true),
            dec_out2: Linear::zeros(me, 4, true),
            res_in: Linear::zeros(4, ae, true),
            res_out: Linear::zeros(ae, ae, true),
            res_skip: Linear::zeros(4, ae, false),
            fusion: Linear::zeros(ae + cfg.interaction_dim, ah, true),
            lstm: Lstm::zeros(ah, ah),
            heads: core::array::from_fn(|_| Linear::zeros(ah, cfg.k, true)),
        }
    }

    /// Random initialisation, rounded to the `f32` grid.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut w = Self::zeros(cfg);
        let mut r = rng::seeded(seed);
        w.enc_embed.init(4, &mut r);
        w.enc_gru.init(&mut r);
        w.dec_embed.init(4, &mut r);
        w.dec_gru.init(&mut r);
        w.dec_out1.init(cfg.manet_hidden_dim, &mut r);
        w.dec_out2.init(cfg.manet_embed_dim, &mut r);
        w.res_in.init(4, &mut r);
        w.res_out.init(cfg.artist_embed_dim, &mut r);
        w.res_skip.init(4, &mut r);
        w.fusion
            .init(cfg.artist_embed_dim + cfg.interaction_dim, &mut r);
        w.lstm.init(&mut r);
        for h in w.heads.iter_mut() {
            h.init(cfg.artist_hidden_dim, &mut r);
        }
        w.snap_to_f32();
        w
    }

    fn layers(&self) -> Vec<(String, &Linear)> {
        let mut v: Vec<(String, &Linear)> = alloc::vec![
            ("manet.enc.embed".into(), &self.enc_embed),
            ("manet.enc.gru.ih".into(), &self.enc_gru.w_ih),
            ("manet.enc.gru.hh".into(), &self.enc_gru.w_hh),
            ("manet.dec.embed".into(), &self.dec_embed),
            ("manet.dec.gru.ih".into(), &self.dec_gru.w_ih),
            ("manet.dec.gru.hh".into(), &self.dec_gru.w_hh),
            ("manet.dec.out1".into(), &self.dec_out1),
            ("manet.dec.out2".into(), &self.dec_out2),
            ("artist.res.in".into(), &self.res_in),
            ("artist.res.out".into(), &self.res_out),
            ("artist.res.skip".into(), &self.res_skip),
            ("artist.fusion".into(), &self.fusion),
            ("artist.lstm.ih".into(), &self.lstm.w_ih),
            ("artist.lstm.hh".into(), &self.lstm.w_hh),
        ];
        for (n, h) in HEAD_NAMES.iter().zip(&self.heads) {
            v.push((format!("artist.head.{n}"), h));
        }
        v
    }

    fn layers_mut(&mut self) -> Vec<(String, &mut Linear)> {
        let [hx, hy, hw, hh] = &mut self.heads;
        alloc::vec![
            ("manet.enc.embed".into(), &mut self.enc_embed),
            ("manet.enc.gru.ih".into(), &mut self.enc_gru.w_ih),
            ("manet.enc.gru.hh".into(), &mut self.enc_gru.w_hh),
            ("manet.dec.embed".into(), &mut self.dec_embed),
            ("manet.dec.gru.ih".into(), &mut self.dec_gru.w_ih),
            ("manet.dec.gru.hh".into(), &mut self.dec_gru.w_hh),
            ("manet.dec.out1".into(), &mut self.dec_out1),
            ("manet.dec.out2".into(), &mut self.dec_out2),
            ("artist.res.in".into(), &mut self.res_in),
            ("artist.res.out".into(), &mut self.res_out),
            ("artist.res.skip".into(), &mut self.res_skip),
            ("artist.fusion".into(), &mut self.fusion),
            ("artist.lstm.ih".into(), &mut self.lstm.w_ih),
            ("artist.lstm.hh".into(), &mut self.lstm.w_hh),
            ("artist.head.x".into(), hx),
            ("artist.head.y".into(), hy),
            ("artist.head.w".into(), hw),
            ("artist.head.h".into(), hh),
        ]
    }

    /// Every array as `(name, shape, values)` in a fixed order.
    pub fn named_arrays(&self) -> Vec<(String, Vec<usize>, &Vec<f64>)> {
        let mut out = Vec::new();
        for (prefix, layer) in self.layers() {
            for (suffix, shape, data) in layer.arrays() {
                out.push((format!("{prefix}.{suffix}"), shape, data));
            }
        }
        out
    }

    pub fn named_arrays_mut(&mut self) -> Vec<(String, Vec<usize>, &mut Vec<f64>)> {
        let mut out = Vec::new();
        for (prefix, layer) in self.layers_mut() {
            for (suffix, shape, data) in layer.arrays_mut() {
                out.push((format!("{prefix}.{suffix}"), shape, data));
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_arrays().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_arrays()
            .iter()
            .all(|(_, _, d)| d.iter().all(|v| v.is_finite()))
    }

    /// Round every value to the nearest `f32`.
    pub fn snap_to_f32(&mut self) {
        for (_, _, d) in self.named_arrays_mut() {
            for v in d.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }
}

/// Recurrent state for one tracklet.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Max-pooled interaction vector.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRep(pub Vec<f64>);

impl InteractionRep {
    pub fn zeros(dim: usize) -> Self {
        Self(alloc::vec![0.0; dim])
    }
}

/// Four categorical distributions over motion classes.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    pub probs: [Vec<f64>; 4],
}

impl StepDistribution {
    pub fn uniform(k: usize) -> Self {
        Self {
            probs: core::array::from_fn(|_| alloc::vec![1.0 / k as f64; k]),
        }
    }

    pub fn from_logits(logits: [Vec<f64>; 4]) -> Self {
        Self {
            probs: logits.map(|l| softmax(&l)),
        }
    }

    pub fn k(&self) -> usize {
        self.probs[0].len()
    }

    /// Floored log-probability of one class of one component.
    pub fn log_prob(&self, component: usize, class: usize) -> f64 {
        ln(self.probs[component][class].max(PROB_FLOOR))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|&l| exp(l - m)).collect();
    let s: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= s;
    }
    p
}

pub(crate) fn scaled(v: &Velocity) -> [f64; 4] {
    v.to_array().map(|c| c * VELOCITY_INPUT_SCALE)
}

/// Element-wise maximum over a set of latent vectors; zeros for an empty set.
pub fn aggregate_interactions(latents: &[Vec<f64>], dim: usize) -> InteractionRep {
    let mut it = latents.iter();
    let Some(first) = it.next() else {
        return InteractionRep::zeros(dim);
    };
    let mut out = first.clone();
    for l in it {
        for (o, &v) in out.iter_mut().zip(l) {
            if v > *o {
                *o = v;
            }
        }
    }
    InteractionRep(out)
}

/// A trained motion model: widths, codebook and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub config: ModelConfig,
    pub codebook: Codebook,
    pub weights: Weights,
}

impl MotionModel {
    pub fn new(config: ModelConfig, codebook: Codebook, seed: u64) -> Result<Self> {
        Self::check(&config, &codebook)?;
        Ok(Self {
            weights: Weights::init(&config, seed),
            config,
            codebook,
        })
    }

    pub fn zeroed(config: ModelConfig, codebook: Codebook) -> Result<Self> {
        Self::check(&config, &codebook)?;
        Ok(Self {
            weights: Weights::zeros(&config),
            config,
            codebook,
        })
    }

    pub fn from_parts(config: ModelConfig, codebook: Codebook, weights: Weights) -> Result<Self> {
        Self::check(&config, &codebook)?;
        let expected = Weights::zeros(&config);
        let shapes = |w: &Weights| {
            w.named_arrays()
                .into_iter()
                .map(|(n, s, d)| (n, s, d.len()))
                .collect::<Vec<_>>()
        };
        if shapes(&expected) != shapes(&weights) {
            return Err(Error::Shape(
                "weight shapes do not match the model config".into(),
            ));
        }
        if !weights.is_finite() {
            return Err(Error::Numeric("weights contain non-finite values".into()));
        }
        Ok(Self {
            config,
            codebook,
            weights,
        })
    }

    fn check(config: &ModelConfig, codebook: &Codebook) -> Result<()> {
        config.validate()?;
        if codebook.k() != config.k {
            return Err(Error::Config(format!(
                "codebook has k = {} but model expects k = {}",
                codebook.k(),
                config.k
            )));
        }
        Ok(())
    }

    /// Encoder hidden state after consuming the whole velocity sequence.
    pub fn encode_tracklet(&self, velocities: &[Velocity]) -> Result<Vec<f64>> {
        if velocities.is_empty() {
            return Err(Error::EmptySequence { needed: 1, got: 0 });
        }
        let mut h = alloc::vec![0.0; self.config.manet_hidden_dim];
        for v in velocities {
            h = self.encode_step(&h, v);
        }
        Ok(h)
    }

    /// Advance an encoder state by one velocity.
    pub fn encode_step(&self, h: &[f64], v: &Velocity) -> Vec<f64> {
        let w = &self.weights;
        let e = relu(&w.enc_embed.forward(&scaled(v)));
        w.enc_gru.forward(&e, h).0
    }

    /// Autoregressive reconstruction of each tracklet from its latent and a
    /// seed velocity (the first velocity of the tracklet).
    pub fn decode_tracklets(
        &self,
        latents: &[Vec<f64>],
        seeds: &[Velocity],
        lengths: &[usize],
    ) -> Result<Vec<Vec<Velocity>>> {
        if latents.len() != seeds.len() || seeds.len() != lengths.len() {
            return Err(Error::Shape("latents, seeds and lengths must align".into()));
        }
        let w = &self.weights;
        let mut out = Vec::with_capacity(latents.len());
        for ((latent, seed), &len) in latents.iter().zip(seeds).zip(lengths) {
            let mut h = latent.clone();
            let mut prev = scaled(seed);
            let mut seq = Vec::with_capacity(len);
            for _ in 0..len {
                let e = relu(&w.dec_embed.forward(&prev));
                h = w.dec_gru.forward(&e, &h).0;
                let m = relu(&w.dec_out1.forward(&h));
                let delta = w.dec_out2.forward(&m);
                let next: [f64; 4] = core::array::from_fn(|c| prev[c] + delta[c]);
                seq.push(Velocity::from_array(next.map(|c| c / VELOCITY_INPUT_SCALE)));
                prev = next;
            }
            out.push(seq);
        }
        Ok(out)
    }

    pub fn artist_init(&self) -> CellState {
        let d = self.config.artist_hidden_dim;
        CellState {
            h: alloc::vec![0.0; d],
            c: alloc::vec![0.0; d],
        }
    }

    /// One recurrent step: consume the latest velocity and interaction vector,
    /// return the new state and the distribution of the next velocity.
    pub fn artist_step(
        &self,
        state: &CellState,
        v: &Velocity,
        interaction: &InteractionRep,
    ) -> Result<(CellState, StepDistribution)> {
        if !v.is_finite() || interaction.0.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite input to motion step".into()));
        }
        if interaction.0.len() != self.config.interaction_dim {
            return Err(Error::Shape(format!(
                "interaction has {} entries, expected {}",
                interaction.0.len(),
                self.config.interaction_dim
            )));
        }
        let w = &self.weights;
        let vs = scaled(v);
        let r1 = relu(&w.res_in.forward(&vs));
        let mut e = w.res_out.forward(&r1);
        for (a, b) in e.iter_mut().zip(w.res_skip.forward(&vs)) {
            *a += b;
        }
        e.extend_from_slice(&interaction.0);
        let u = relu(&w.fusion.forward(&e));
        let (h, c, _) = w.lstm.forward(&u, &state.h, &state.c);
        let o: Vec<f64> = u.iter().zip(&h).map(|(a, b)| a + b).collect();
        let logits = core::array::from_fn(|i| w.heads[i].forward(&o));
        let dist = StepDistribution::from_logits(logits);
        if dist.probs.iter().flatten().any(|p| !p.is_finite()) {
            return Err(Error::Numeric(
                "motion step produced non-finite probabilities".into(),
            ));
        }
        Ok((CellState { h, c }, dist))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_codebook(k: usize) -> Codebook {
        let list: Vec<f64> = (0..k)
            .map(|i| (i as f64 - (k as f64 - 1.0) / 2.0) * 0.004)
            .collect();
        Codebook::from_centroids([list.clone(), list.clone(), list.clone(), list]).unwrap()
    }

    fn rand_vel(r: &mut ChaCha8Rng) -> Velocity {
        Velocity::new(
            r.random::<f64>() * 0.02 - 0.01,
            r.random::<f64>() * 0.02 - 0.01,
            r.random::<f64>() * 0.004 - 0.002,
            r.random::<f64>() * 0.004 - 0.002,
        )
    }

    #[test]
    fn zero_weights_encode_to_zero_and_emit_uniform() {
        let cfg = ModelConfig::desk(8, 16);
        let m = MotionModel::zeroed(cfg, toy_codebook(8)).unwrap();
        let z = m
            .encode_tracklet(&[Velocity::new(0.1, -0.2, 0.0, 0.3); 3])
            .unwrap();
        assert_eq!(z, alloc::vec![0.0; 16]);
        let (_, d) = m
            .artist_step(
                &m.artist_init(),
                &Velocity::new(0.01, 0.0, 0.0, 0.0),
                &InteractionRep::zeros(16),
            )
            .unwrap();
        for p in d.probs.iter().flatten() {
            assert!((p - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn encoder_shapes_and_sensitivity() {
        let cfg = ModelConfig::desk(8, 16);
        let m = MotionModel::new(cfg, toy_codebook(8), 1).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let a = rand_vel(&mut r);
        let b = rand_vel(&mut r);
        let one = m.encode_tracklet(&[a]).unwrap();
        let two = m.encode_tracklet(&[a, b]).unwrap();
        assert_eq!(one.len(), 16);
        assert_ne!(one, two);
        assert!(matches!(
            m.encode_tracklet(&[]),
            Err(Error::EmptySequence { .. })
        ));
    }

    #[test]
    fn aggregation_examples() {
        let a = alloc::vec![1.0, -2.0, 3.0];
        let b = alloc::vec![0.5, 4.0, -1.0];
        assert_eq!(aggregate_interactions(core::slice::from_ref(&a), 3).0, a);
        let ab = aggregate_interactions(&[a.clone(), b.clone()], 3);
        let ba = aggregate_interactions(&[b, a], 3);
        assert_eq!(ab, ba);
        assert_eq!(ab.0, alloc::vec![1.0, 4.0, 3.0]);
        assert_eq!(aggregate_interactions(&[], 3).0, alloc::vec![0.0; 3]);
    }

    #[test]
    fn decoder_lengths() {
        let cfg = ModelConfig::desk(8, 16);
        let m = MotionModel::new(cfg, toy_codebook(8), 1).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let lat: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..16).map(|_| r.random::<f64>() - 0.5).collect())
            .collect();
        let seeds: Vec<Velocity> = (0..3).map(|_| rand_vel(&mut r)).collect();
        let out = m.decode_tracklets(&lat, &seeds, &[1, 4, 7]).unwrap();
        assert_eq!(out.iter().map(Vec::len).collect::<Vec<_>>(), [1, 4, 7]);
        let single = m.decode_tracklets(&lat[1..2], &seeds[1..2], &[1]).unwrap();
        assert_eq!(single[0][0], out[1][0]);
    }

    #[test]
    fn artist_init_is_zero_and_deterministic() {
        let cfg = ModelConfig::desk(8, 16);
        let m = MotionModel::new(cfg, toy_codebook(8), 1).unwrap();
        let s = m.artist_init();
        assert_eq!(s, m.artist_init());
        assert_eq!(s.h.len(), 16);
        assert!(s.h.iter().chain(&s.c).all(|&v| v == 0.0));
    }

    #[test]
    fn heads_are_normalized_and_steps_deterministic() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..50 {
            let cfg = ModelConfig::desk(8, 16);
            let m = MotionModel::new(cfg, toy_codebook(8), trial).unwrap();
            let i = InteractionRep((0..16).map(|_| r.random::<f64>() * 2.0 - 1.0).collect());
            let v = rand_vel(&mut r);
            let (s1, d1) = m.artist_step(&m.artist_init(), &v, &i).unwrap();
            let (s2, d2) = m.artist_step(&m.artist_init(), &v, &i).unwrap();
            assert_eq!((s1, &d1), (s2, &d2));
            for head in &d1.probs {
                assert!((head.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                assert!(head.iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn step_rejects_non_finite() {
        let cfg = ModelConfig::desk(4, 8);
        let m = MotionModel::new(cfg, toy_codebook(4), 1).unwrap();
        let bad = Velocity::new(f64::NAN, 0.0, 0.0, 0.0);
        assert!(matches!(
            m.artist_step(&m.artist_init(), &bad, &InteractionRep::zeros(8)),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn config_mismatch_is_rejected() {
        assert!(matches!(
            MotionModel::new(ModelConfig::desk(8, 16), toy_codebook(4), 0),
            Err(Error::Config(_))
        ));
        let mut cfg = ModelConfig::desk(4, 16);
        cfg.interaction_dim = 8;
        assert!(matches!(
            MotionModel::new(cfg, toy_codebook(4), 0),
            Err(Error::Config(_))
        ));
    }
}
