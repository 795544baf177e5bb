//! Joint training objective for one sample with exact backpropagation
//! through time.
//!
//! A sample is one target trajectory plus the trajectories of the agents that
//! share its time window. The interaction encoder runs over every agent; the
//! interaction vector at step `k` is the element-wise max of the other agents'
//! encoder states after `k` velocities (zeros at step 0). The decoder
//! reconstructs every agent with at least two velocities from its final
//! encoder state.

use alloc::vec::Vec;
use rand::Rng;

use super::layers::{relu, relu_backward, GruCache, LstmCache};
use super::{scaled, softmax, MotionModel, Weights, VELOCITY_INPUT_SCALE};
use crate::codebook::ClassIndex4;
use crate::geometry::Velocity;
use crate::math::ln;

/// A prepared training example; every trajectory has the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub target: Vec<Velocity>,
    pub classes: Vec<ClassIndex4>,
    pub others: Vec<Vec<Velocity>>,
}

/// Scheduled feeding of the model's own samples as inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherForcing {
    /// Probability of consuming the model's own sampled velocity.
    pub prob: f64,
    /// Fraction of the sequence after which own samples may be consumed.
    pub onset: f64,
}

/// Loss terms of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SampleLoss {
    /// Mean per-step negative log-likelihood.
    pub nll: f64,
    /// Mean squared reconstruction error (0 when nothing is reconstructed).
    pub rec: f64,
    pub steps: usize,
    /// Number of reconstructed scalar values.
    pub rec_terms: usize,
}

struct EncStep {
    x: [f64; 4],
    pre: Vec<f64>,
    gru: GruCache,
}

struct DecStep {
    prev: [f64; 4],
    pre: Vec<f64>,
    gru: GruCache,
    h: Vec<f64>,
    mid_pre: Vec<f64>,
    mid: Vec<f64>,
    out: [f64; 4],
}

struct ArtStep {
    vs: [f64; 4],
    a1: Vec<f64>,
    r1: Vec<f64>,
    cat: Vec<f64>,
    f_pre: Vec<f64>,
    lstm: LstmCache,
    o: Vec<f64>,
    probs: [Vec<f64>; 4],
    /// Which other agent supplied each interaction coordinate.
    argmax: Option<Vec<usize>>,
}

pub(crate) fn multinomial<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &q) in p.iter().enumerate() {
        acc += q;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Evaluate `λ·NLL + L_rec` for one sample. When `grad` is given, the
/// gradient of `scale · (λ·NLL + L_rec)` is added into it.
pub fn sample_loss(
    model: &MotionModel,
    sample: &TrainSample,
    lambda: f64,
    interactions: bool,
    mut teacher: Option<(TeacherForcing, &mut dyn rand::RngCore)>,
    grad: Option<&mut Weights>,
    scale: f64,
) -> SampleLoss {
    let w = &model.weights;
    let cfg = &model.config;
    let n = sample.target.len();
    assert!(n >= 1 && sample.classes.len() == n);
    let (mh, ae, ah, l_dim) = (
        cfg.manet_hidden_dim,
        cfg.artist_embed_dim,
        cfg.artist_hidden_dim,
        cfg.interaction_dim,
    );

    let agents: Vec<&Vec<Velocity>> = core::iter::once(&sample.target)
        .chain(sample.others.iter())
        .collect();

    // interaction encoder
    let mut enc: Vec<Vec<EncStep>> = Vec::with_capacity(agents.len());
    let mut hid: Vec<Vec<Vec<f64>>> = Vec::with_capacity(agents.len());
    for seq in &agents {
        assert_eq!(seq.len(), n);
        let mut h = alloc::vec![0.0; mh];
        let mut steps = Vec::with_capacity(n);
        let mut hs = Vec::with_capacity(n);
        for v in seq.iter() {
            let x = scaled(v);
            let pre = w.enc_embed.forward(&x);
            let (hn, gru) = w.enc_gru.forward(&relu(&pre), &h);
            h = hn;
            hs.push(h.clone());
            steps.push(EncStep { x, pre, gru });
        }
        enc.push(steps);
        hid.push(hs);
    }

    // autoregressive motion model
    let onset_step = teacher.as_ref().map(|(tf, _)| tf.onset * n as f64);
    let mut art: Vec<ArtStep> = Vec::with_capacity(n);
    let mut h = alloc::vec![0.0; ah];
    let mut c = alloc::vec![0.0; ah];
    let mut nll_sum = 0.0;
    for k in 0..n {
        let input = if k == 0 {
            Velocity::ZERO
        } else {
            let own = match (&mut teacher, onset_step) {
                (Some((tf, rng)), Some(onset)) if k as f64 >= onset => {
                    if rng.random::<f64>() < tf.prob {
                        let prev = &art[k - 1].probs;
                        let idx = ClassIndex4::from_array(core::array::from_fn(|j| {
                            multinomial(&prev[j], *rng)
                        }));
                        model.codebook.dequantize(&idx).ok()
                    } else {
                        None
                    }
                }
                _ => None,
            };
            own.unwrap_or(sample.target[k - 1])
        };
        let (interaction, argmax) = if interactions && k > 0 && agents.len() > 1 {
            let mut best = hid[1][k - 1].clone();
            let mut arg = alloc::vec![1usize; l_dim];
            for a in 2..agents.len() {
                for (d, &v) in hid[a][k - 1].iter().enumerate() {
                    if v > best[d] {
                        best[d] = v;
                        arg[d] = a;
                    }
                }
            }
            (best, Some(arg))
        } else {
            (alloc::vec![0.0; l_dim], None)
        };

        let vs = scaled(&input);
        let a1 = w.res_in.forward(&vs);
        let r1 = relu(&a1);
        let mut e = w.res_out.forward(&r1);
        for (x, y) in e.iter_mut().zip(w.res_skip.forward(&vs)) {
            *x += y;
        }
        let mut cat = e;
        cat.extend_from_slice(&interaction);
        let f_pre = w.fusion.forward(&cat);
        let u = relu(&f_pre);
        let (hn, cn, lstm) = w.lstm.forward(&u, &h, &c);
        h = hn;
        c = cn;
        let o: Vec<f64> = u.iter().zip(&h).map(|(a, b)| a + b).collect();
        let target = sample.classes[k].to_array();
        let probs: [Vec<f64>; 4] = core::array::from_fn(|j| {
            let logits = w.heads[j].forward(&o);
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + ln(logits.iter().map(|&l| crate::math::exp(l - m)).sum::<f64>());
            nll_sum += lse - logits[target[j]];
            softmax(&logits)
        });
        art.push(ArtStep {
            vs,
            a1,
            r1,
            cat,
            f_pre,
            lstm,
            o,
            probs,
            argmax,
        });
    }
    let nll = nll_sum / n as f64;

    // reconstruction
    let rec_count: usize = agents.iter().map(|s| 4 * (s.len().saturating_sub(1))).sum();
    let mut dec: Vec<Vec<DecStep>> = Vec::with_capacity(agents.len());
    let mut rec_sum = 0.0;
    for (a, seq) in agents.iter().enumerate() {
        let mut steps = Vec::new();
        if n >= 2 {
            let mut hd = hid[a][n - 1].clone();
            let mut prev = scaled(&seq[0]);
            for target in seq.iter().skip(1) {
                let pre = w.dec_embed.forward(&prev);
                let (hn, gru) = w.dec_gru.forward(&relu(&pre), &hd);
                hd = hn;
                let mid_pre = w.dec_out1.forward(&hd);
                let mid = relu(&mid_pre);
                let delta = w.dec_out2.forward(&mid);
                let out: [f64; 4] = core::array::from_fn(|j| prev[j] + delta[j]);
                let t = target.to_array();
                for j in 0..4 {
                    let d = out[j] / VELOCITY_INPUT_SCALE - t[j];
                    rec_sum += d * d;
                }
                steps.push(DecStep {
                    prev,
                    pre,
                    gru,
                    h: hd.clone(),
                    mid_pre,
                    mid,
                    out,
                });
                prev = out;
            }
        }
        dec.push(steps);
    }
    let rec = if rec_count > 0 {
        rec_sum / rec_count as f64
    } else {
        0.0
    };

    let loss = SampleLoss {
        nll,
        rec,
        steps: n,
        rec_terms: rec_count,
    };
    let Some(g) = grad else {
        return loss;
    };

    // gradients flowing into encoder states, per agent and step
    let mut d_hid: Vec<Vec<Vec<f64>>> = (0..agents.len())
        .map(|_| alloc::vec![alloc::vec![0.0; mh]; n])
        .collect();

    // decoder backward
    if rec_count > 0 {
        let coef = scale * 2.0 / rec_count as f64;
        for (a, seq) in agents.iter().enumerate() {
            let steps = &dec[a];
            let mut dh_carry = alloc::vec![0.0; mh];
            let mut d_next = [0.0f64; 4];
            for (j, st) in steps.iter().enumerate().rev() {
                let t = seq[j + 1].to_array();
                let mut d_out = d_next;
                for i in 0..4 {
                    d_out[i] +=
                        coef * (st.out[i] / VELOCITY_INPUT_SCALE - t[i]) / VELOCITY_INPUT_SCALE;
                }
                // out = prev + delta
                let mut d_mid = alloc::vec![0.0; st.mid.len()];
                w.dec_out2
                    .backward(&st.mid, &d_out, &mut g.dec_out2, Some(&mut d_mid));
                relu_backward(&st.mid_pre, &mut d_mid);
                let mut dh = dh_carry.clone();
                w.dec_out1
                    .backward(&st.h, &d_mid, &mut g.dec_out1, Some(&mut dh));
                let mut de = alloc::vec![0.0; st.pre.len()];
                let mut dh_prev = alloc::vec![0.0; mh];
                w.dec_gru
                    .backward(&st.gru, &dh, &mut g.dec_gru, Some(&mut de), &mut dh_prev);
                relu_backward(&st.pre, &mut de);
                let mut d_prev = [0.0f64; 4];
                w.dec_embed
                    .backward(&st.prev, &de, &mut g.dec_embed, Some(&mut d_prev));
                for i in 0..4 {
                    d_next[i] = d_out[i] + d_prev[i];
                }
                dh_carry = dh_prev;
            }
            if !steps.is_empty() {
                for (x, y) in d_hid[a][n - 1].iter_mut().zip(&dh_carry) {
                    *x += y;
                }
            }
        }
    }

    // motion model backward
    let coef = scale * lambda / n as f64;
    let mut dh_carry = alloc::vec![0.0; ah];
    let mut dc_carry = alloc::vec![0.0; ah];
    for k in (0..n).rev() {
        let st = &art[k];
        let target = sample.classes[k].to_array();
        let mut d_o = alloc::vec![0.0; ah];
        if coef != 0.0 {
            for j in 0..4 {
                let mut dl: Vec<f64> = st.probs[j].iter().map(|p| coef * p).collect();
                dl[target[j]] -= coef;
                w.heads[j].backward(&st.o, &dl, &mut g.heads[j], Some(&mut d_o));
            }
        }
        let dh_lstm: Vec<f64> = d_o.iter().zip(&dh_carry).map(|(a, b)| a + b).collect();
        let mut du = d_o;
        let mut dh_prev = alloc::vec![0.0; ah];
        let mut dc_prev = alloc::vec![0.0; ah];
        w.lstm.backward(
            &st.lstm,
            &dh_lstm,
            &dc_carry,
            &mut g.lstm,
            Some(&mut du),
            &mut dh_prev,
            &mut dc_prev,
        );
        dh_carry = dh_prev;
        dc_carry = dc_prev;
        relu_backward(&st.f_pre, &mut du);
        let mut dcat = alloc::vec![0.0; st.cat.len()];
        w.fusion
            .backward(&st.cat, &du, &mut g.fusion, Some(&mut dcat));
        let (de, di) = dcat.split_at(ae);
        if let Some(arg) = &st.argmax {
            for (d, &a) in arg.iter().enumerate() {
                d_hid[a][k - 1][d] += di[d];
            }
        }
        let mut dr1 = alloc::vec![0.0; st.r1.len()];
        w.res_out
            .backward(&st.r1, de, &mut g.res_out, Some(&mut dr1));
        w.res_skip.backward(&st.vs, de, &mut g.res_skip, None);
        relu_backward(&st.a1, &mut dr1);
        w.res_in.backward(&st.vs, &dr1, &mut g.res_in, None);
    }

    // encoder backward
    for (a, steps) in enc.iter().enumerate() {
        let mut carry = alloc::vec![0.0; mh];
        for t in (0..n).rev() {
            let dh: Vec<f64> = d_hid[a][t].iter().zip(&carry).map(|(x, y)| x + y).collect();
            if dh.iter().all(|&v| v == 0.0) {
                carry = dh;
                continue;
            }
            let st = &steps[t];
            let mut de = alloc::vec![0.0; st.pre.len()];
            let mut dh_prev = alloc::vec![0.0; mh];
            w.enc_gru
                .backward(&st.gru, &dh, &mut g.enc_gru, Some(&mut de), &mut dh_prev);
            relu_backward(&st.pre, &mut de);
            w.enc_embed.backward(&st.x, &de, &mut g.enc_embed, None);
            carry = dh_prev;
        }
    }

    loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::Codebook;
    use crate::nn::{InteractionRep, ModelConfig};
    use crate::rng;

    fn codebook(k: usize) -> Codebook {
        let list: Vec<f64> = (0..k)
            .map(|i| (i as f64 - (k as f64 - 1.0) / 2.0) * 0.004)
            .collect();
        Codebook::from_centroids([list.clone(), list.clone(), list.clone(), list]).unwrap()
    }

    fn random_sample(model: &MotionModel, n: usize, others: usize, seed: u64) -> TrainSample {
        let mut r = rng::seeded(seed);
        let mut vel = || {
            Velocity::new(
                r.random::<f64>() * 0.03 - 0.015,
                r.random::<f64>() * 0.03 - 0.015,
                r.random::<f64>() * 0.006 - 0.003,
                r.random::<f64>() * 0.006 - 0.003,
            )
        };
        let target: Vec<Velocity> = (0..n).map(|_| vel()).collect();
        let others = (0..others)
            .map(|_| (0..n).map(|_| vel()).collect())
            .collect();
        let classes = target.iter().map(|v| model.codebook.quantize(v)).collect();
        TrainSample {
            target,
            classes,
            others,
        }
    }

    #[test]
    fn tape_matches_inference_path_without_interactions() {
        let model = MotionModel::new(ModelConfig::desk(8, 16), codebook(8), 3).unwrap();
        let s = random_sample(&model, 6, 0, 1);
        let loss = sample_loss(&model, &s, 1.0, true, None, None, 1.0);
        let mut state = model.artist_init();
        let mut total = 0.0;
        let zero = InteractionRep::zeros(16);
        for k in 0..6 {
            let input = if k == 0 {
                Velocity::ZERO
            } else {
                s.target[k - 1]
            };
            let (next, d) = model.artist_step(&state, &input, &zero).unwrap();
            state = next;
            let c = s.classes[k].to_array();
            total -= (0..4).map(|j| d.log_prob(j, c[j])).sum::<f64>();
        }
        assert!((loss.nll - total / 6.0).abs() < 1e-10);
    }

    #[test]
    fn reconstruction_matches_decoder() {
        let model = MotionModel::new(ModelConfig::desk(8, 16), codebook(8), 3).unwrap();
        let s = random_sample(&model, 5, 1, 2);
        let loss = sample_loss(&model, &s, 0.0, true, None, None, 1.0);
        let mut sum = 0.0;
        for seq in [&s.target, &s.others[0]] {
            let z = model.encode_tracklet(seq).unwrap();
            let rec = model.decode_tracklets(&[z], &[seq[0]], &[4]).unwrap();
            for (a, b) in rec[0].iter().zip(&seq[1..]) {
                for (x, y) in a.to_array().iter().zip(b.to_array()) {
                    sum += (x - y) * (x - y);
                }
            }
        }
        assert!((loss.rec - sum / 32.0).abs() < 1e-15);
    }
}
