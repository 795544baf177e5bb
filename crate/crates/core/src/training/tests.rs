use super::*;
use crate::nn::tape::sample_loss;
use crate::nn::InteractionRep;

fn codebook(k: usize) -> Codebook {
    let list: Vec<f64> = (0..k)
        .map(|i| (i as f64 - (k as f64 - 1.0) / 2.0) * 0.004)
        .collect();
    Codebook::from_centroids([list.clone(), list.clone(), list.clone(), list]).unwrap()
}

fn const_velocity_scene(
    dims: FrameDims,
    start: (f64, f64),
    step: (f64, f64),
    len: usize,
) -> TrainingScene {
    let boxes = (0..len)
        .map(|i| {
            BoundingBox::new(
                start.0 + step.0 * i as f64,
                start.1 + step.1 * i as f64,
                40.0,
                90.0,
            )
            .unwrap()
        })
        .collect();
    TrainingScene {
        dims,
        tracks: alloc::vec![TrackSeq { start: 1, boxes }],
    }
}

#[test]
fn nll_examples() {
    let k = 4;
    let uniform = StepDistribution::uniform(k);
    let t = ClassIndex4::new(0, 1, 2, 3);
    let got = nll_loss(&[uniform.clone(), uniform.clone()], &[t, t]).unwrap();
    assert!((got - 4.0 * crate::math::ln(4.0)).abs() < 1e-12);

    let one_hot = StepDistribution {
        probs: core::array::from_fn(|j| {
            let mut p = alloc::vec![0.0; k];
            p[t.to_array()[j]] = 1.0;
            p
        }),
    };
    assert_eq!(nll_loss(&[one_hot], &[t]).unwrap(), 0.0);

    // hand-built two-step case
    let d1 = StepDistribution {
        probs: [
            alloc::vec![0.1, 0.2, 0.3, 0.4],
            alloc::vec![0.25; 4],
            alloc::vec![0.7, 0.1, 0.1, 0.1],
            alloc::vec![0.0, 0.5, 0.5, 0.0],
        ],
    };
    let d2 = StepDistribution {
        probs: [
            alloc::vec![0.4, 0.3, 0.2, 0.1],
            alloc::vec![0.9, 0.05, 0.03, 0.02],
            alloc::vec![0.25; 4],
            alloc::vec![0.1, 0.1, 0.1, 0.7],
        ],
    };
    let t1 = ClassIndex4::new(3, 0, 0, 1);
    let t2 = ClassIndex4::new(1, 0, 2, 3);
    let step1 = -(0.4f64.ln() + 0.25f64.ln() + 0.7f64.ln() + 0.5f64.ln());
    let step2 = -(0.3f64.ln() + 0.9f64.ln() + 0.25f64.ln() + 0.7f64.ln());
    let got = nll_loss(&[d1, d2], &[t1, t2]).unwrap();
    assert!((got - (step1 + step2) / 2.0).abs() < 1e-12);

    assert!(matches!(nll_loss(&[uniform], &[]), Err(Error::Shape(_))));
}

#[test]
fn reconstruction_examples() {
    let a = alloc::vec![alloc::vec![
        Velocity::new(0.1, 0.2, 0.3, 0.4),
        Velocity::new(-0.1, 0.0, 0.5, 0.2)
    ]];
    assert_eq!(reconstruction_loss(&a, &a).unwrap(), 0.0);
    let shifted: Vec<Vec<Velocity>> = a
        .iter()
        .map(|s| {
            s.iter()
                .map(|v| Velocity::from_array(v.to_array().map(|c| c + 0.1)))
                .collect()
        })
        .collect();
    assert!((reconstruction_loss(&shifted, &a).unwrap() - 0.01).abs() < 1e-15);

    let mut r = rng::seeded(3);
    let mut rv = || Velocity::new(r.random(), r.random(), r.random(), r.random());
    let x: Vec<Vec<Velocity>> = (0..3).map(|_| (0..4).map(|_| rv()).collect()).collect();
    let y: Vec<Vec<Velocity>> = (0..3).map(|_| (0..4).map(|_| rv()).collect()).collect();
    let mut brute = 0.0;
    for i in 0..3 {
        for j in 0..4 {
            let (p, q) = (x[i][j].to_array(), y[i][j].to_array());
            for c in 0..4 {
                brute += (p[c] - q[c]).powi(2);
            }
        }
    }
    assert!((reconstruction_loss(&x, &y).unwrap() - brute / 48.0).abs() < 1e-15);
    assert!(reconstruction_loss(&x[..1], &y).is_err());
}

#[test]
fn anneal_schedule() {
    let cfg = TrainConfig::default();
    let mid = (cfg.anneal_midpoint * cfg.iterations as f64) as usize;
    assert!((anneal_lambda(mid, &cfg) - 0.5).abs() < 1e-12);
    assert!(anneal_lambda(0, &cfg) < 0.01);
    assert!(anneal_lambda(cfg.iterations, &cfg) > 0.99);
    let mut prev = 0.0;
    for it in (0..=cfg.iterations).step_by(997) {
        let l = anneal_lambda(it, &cfg);
        assert!(l >= prev && (0.0..=1.0).contains(&l));
        prev = l;
    }
}

fn random_batch(model: &MotionModel, seed: u64) -> Vec<TrainSample> {
    let mut r = rng::seeded(seed);
    let mut vel = || {
        Velocity::new(
            r.random::<f64>() * 0.03 - 0.015,
            r.random::<f64>() * 0.03 - 0.015,
            r.random::<f64>() * 0.006 - 0.003,
            r.random::<f64>() * 0.006 - 0.003,
        )
    };
    let mut out = Vec::new();
    for others in [2usize, 0] {
        let target: Vec<Velocity> = (0..5).map(|_| vel()).collect();
        let others = (0..others)
            .map(|_| (0..5).map(|_| vel()).collect())
            .collect();
        let classes = target.iter().map(|v| model.codebook.quantize(v)).collect();
        out.push(TrainSample {
            target,
            classes,
            others,
        });
    }
    out
}

/// Central finite differences over every weight, compared per array by
/// `|a - n| / max(|a|, |n|)` in the L2 norm.
#[test]
fn total_loss_gradients_match_finite_differences() {
    let model = MotionModel::new(ModelConfig::desk(8, 16), codebook(8), 21).unwrap();
    let batch = random_batch(&model, 5);
    let lambda = 0.5;
    let tf = TeacherForcing {
        prob: 0.5,
        onset: 0.6,
    };
    let loss_of = |m: &MotionModel, g: Option<&mut Weights>| {
        let mut r = rng::seeded(99);
        let (nll, rec) = batch_loss(m, &batch, lambda, true, Some((tf, &mut r)), g);
        lambda * nll + rec
    };
    let mut grads = Weights::zeros(&model.config);
    loss_of(&model, Some(&mut grads));

    let eps = 1e-5;
    let names: Vec<(alloc::string::String, usize)> = model
        .weights
        .named_arrays()
        .iter()
        .map(|(n, _, d)| (n.clone(), d.len()))
        .collect();
    let analytic: Vec<Vec<f64>> = grads
        .named_arrays()
        .iter()
        .map(|(_, _, d)| (*d).clone())
        .collect();
    let mut probe = model.clone();
    for (a, (name, len)) in names.iter().enumerate() {
        let mut numeric = alloc::vec![0.0; *len];
        for i in 0..*len {
            let orig = probe.weights.named_arrays()[a].2[i];
            probe.weights.named_arrays_mut()[a].2[i] = orig + eps;
            let plus = loss_of(&probe, None);
            probe.weights.named_arrays_mut()[a].2[i] = orig - eps;
            let minus = loss_of(&probe, None);
            probe.weights.named_arrays_mut()[a].2[i] = orig;
            numeric[i] = (plus - minus) / (2.0 * eps);
        }
        let diff = sqrt(
            analytic[a]
                .iter()
                .zip(&numeric)
                .map(|(x, y)| (x - y) * (x - y))
                .sum(),
        );
        let na = sqrt(analytic[a].iter().map(|x| x * x).sum());
        let nn = sqrt(numeric.iter().map(|x| x * x).sum());
        let rel = diff / na.max(nn).max(1e-300);
        assert!(na.max(nn) > 0.0, "{name}: gradient vanished");
        assert!(
            rel <= 1e-4,
            "{name}: relative error {rel:e} (|a|={na:e}, |n|={nn:e})"
        );
    }
}

#[test]
fn clipping_bounds_the_global_norm() {
    let model = MotionModel::new(ModelConfig::desk(8, 16), codebook(8), 1).unwrap();
    let batch = random_batch(&model, 2);
    let mut grads = Weights::zeros(&model.config);
    batch_loss(&model, &batch, 1.0, true, None, Some(&mut grads));
    let norm = global_norm(&grads);
    let (pre, post) = clip_global_norm(&mut grads, norm / 3.0);
    assert_eq!(pre, norm);
    assert!(post <= norm / 3.0 * (1.0 + 1e-12));
    let (pre2, post2) = clip_global_norm(&mut grads, 1e9);
    assert_eq!(pre2, post2);
}

#[test]
fn first_iteration_is_dominated_by_reconstruction() {
    let cfg = TrainConfig {
        iterations: 100,
        batch_size: 4,
        ..TrainConfig::desk()
    };
    let lambda = anneal_lambda(0, &cfg);
    let model = MotionModel::new(ModelConfig::desk(8, 16), codebook(8), 1).unwrap();
    let batch = random_batch(&model, 4);
    let (nll, rec) = batch_loss(&model, &batch, lambda, true, None, None);
    let total = lambda * nll + rec;
    assert!((total - rec).abs() < 0.01 * nll);
}

fn tiny_corpus() -> Corpus {
    let dims = FrameDims::new(640.0, 480.0).unwrap();
    Corpus {
        scenes: alloc::vec![const_velocity_scene(dims, (100.0, 80.0), (3.0, 1.5), 12)],
    }
}

#[test]
fn training_is_deterministic() {
    let corpus = tiny_corpus();
    let cfg = TrainConfig {
        iterations: 20,
        batch_size: 2,
        seq_len_range: (5, 8),
        jitter_magnitude: 0.001,
        ..TrainConfig::desk()
    };
    let m0 = init_model(&corpus, ModelConfig::desk(8, 16), 3).unwrap();
    let a = train(&corpus, m0.clone(), &cfg).unwrap();
    let b = train(&corpus, m0, &cfg).unwrap();
    let bits = |t: &[LossRecord]| t.iter().map(|r| r.total.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.trace), bits(&b.trace));
    assert_eq!(a.model, b.model);
}

#[test]
fn overfits_a_single_constant_velocity_sequence() {
    let corpus = tiny_corpus();
    let cfg = TrainConfig {
        iterations: 2000,
        batch_size: 1,
        seq_len_range: (12, 12),
        jitter_magnitude: 0.0,
        teacher_force_prob: 0.0,
        ..TrainConfig::desk()
    };
    let m0 = init_model(&corpus, ModelConfig::desk(8, 16), 3).unwrap();
    let out = train(&corpus, m0, &cfg).unwrap();
    let nll = evaluate_nll(&out.model, &corpus, &cfg, 4, 1).unwrap();
    assert!(nll < 0.25 * uniform_nll(8), "nll {nll}");
}

#[test]
fn decoder_overfits_a_single_sequence() {
    let corpus = tiny_corpus();
    let cfg = TrainConfig {
        iterations: 400,
        batch_size: 1,
        seq_len_range: (12, 12),
        jitter_magnitude: 0.0,
        teacher_force_prob: 0.0,
        ..TrainConfig::desk()
    };
    let m0 = init_model(&corpus, ModelConfig::desk(8, 16), 3).unwrap();
    let seq = corpus.velocities();
    let rec_mse = |m: &MotionModel| {
        let z = m.encode_tracklet(&seq).unwrap();
        let out = m
            .decode_tracklets(&[z], &[seq[0]], &[seq.len() - 1])
            .unwrap();
        reconstruction_loss(&out, &[seq[1..].to_vec()]).unwrap()
    };
    let before = rec_mse(&m0);
    let out = train(&corpus, m0, &cfg).unwrap();
    let after = rec_mse(&out.model);
    assert!(after < 0.1 * before, "before {before:e} after {after:e}");
}

#[test]
fn smoothed_losses_decrease() {
    let dims = FrameDims::new(640.0, 480.0).unwrap();
    let mut r = rng::seeded(12);
    let scenes = (0..20)
        .map(|_| {
            let step = (r.random_range(-4.0..4.0), r.random_range(-3.0..3.0));
            const_velocity_scene(dims, (300.0, 200.0), step, 30)
        })
        .collect();
    let corpus = Corpus { scenes };
    let cfg = TrainConfig {
        iterations: 600,
        batch_size: 4,
        seq_len_range: (5, 15),
        jitter_magnitude: 0.0,
        ..TrainConfig::desk()
    };
    let m0 = init_model(&corpus, ModelConfig::desk(8, 16), 4).unwrap();
    let out = train(&corpus, m0, &cfg).unwrap();
    let mean = |xs: &[LossRecord], f: fn(&LossRecord) -> f64| {
        xs.iter().map(f).sum::<f64>() / xs.len() as f64
    };
    let (head, tail) = (&out.trace[..100], &out.trace[out.trace.len() - 100..]);
    assert!(mean(tail, |r| r.nll) < mean(head, |r| r.nll));
    assert!(mean(tail, |r| r.rec) < mean(head, |r| r.rec));
}

#[test]
fn empty_corpus_is_rejected() {
    let m0 = MotionModel::new(ModelConfig::desk(8, 16), codebook(8), 1).unwrap();
    assert!(matches!(
        train(&Corpus::default(), m0, &TrainConfig::desk()),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn interaction_vectors_reach_the_motion_model() {
    // with others present the interaction path changes the likelihood
    let model = MotionModel::new(ModelConfig::desk(8, 16), codebook(8), 8).unwrap();
    let batch = random_batch(&model, 9);
    let with = sample_loss(&model, &batch[0], 1.0, true, None, None, 1.0);
    let without = sample_loss(&model, &batch[0], 1.0, false, None, None, 1.0);
    assert_ne!(with.nll, without.nll);
    let _ = InteractionRep::zeros(16);
}
