//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use affect_scl::affect::{assign_label, compute_threshold, Strategy};
use affect_scl::corpus::{
    fuse_annotations, generate_synthetic, shuffle_measures, window_session, ModalityConfig, Session, Standardizer, SynthConfig,
    WindowSample,
};
use affect_scl::evaluation::{ExperimentResult, FoldSplit};
use affect_scl::numcore::{finite_diff_grad, max_relative_error, Activation, DenseLayer, Network};
use affect_scl::supcon::{supcon_grad, supcon_loss, ContrastiveBatch};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, StudentsT};
use twofloat::TwoFloat;

/// Feature signal-to-noise ratio of the desk-scale corpus. Chosen so the
/// linear readout oracle lands above 90% but well short of 100%.
pub const DESK_SNR: f64 = 0.01;

pub fn desk_corpus(snr: f64) -> Vec<Session> {
    generate_synthetic(&SynthConfig {
        snr,
        seed: 1,
        ..SynthConfig::default()
    })
    .unwrap()
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// The contrastive loss written out literally in double-double arithmetic:
/// no max shift, the log of each softmax ratio taken directly.
pub fn supcon_loss_extended(reps: &[Vec<f64>], labels: &[usize], tau: f64) -> f64 {
    let n = reps.len();
    let z: Vec<Vec<TwoFloat>> = reps
        .iter()
        .map(|r| {
            let r: Vec<TwoFloat> = r.iter().map(|&v| TwoFloat::from(v)).collect();
            let norm = r.iter().fold(TwoFloat::from(0.0), |acc, &v| acc + v * v).sqrt();
            r.iter().map(|&v| v / norm).collect()
        })
        .collect();
    let tau = TwoFloat::from(tau);
    let sim = |i: usize, j: usize| {
        z[i].iter()
            .zip(&z[j])
            .fold(TwoFloat::from(0.0), |acc, (&a, &b)| acc + a * b)
            / tau
    };
    let mut total = TwoFloat::from(0.0);
    for i in 0..n {
        let positives: Vec<usize> = (0..n).filter(|&p| p != i && labels[p] == labels[i]).collect();
        if positives.is_empty() {
            continue;
        }
        let denom = (0..n)
            .filter(|&a| a != i)
            .fold(TwoFloat::from(0.0), |acc, a| acc + sim(i, a).exp());
        let mut term = TwoFloat::from(0.0);
        for &p in &positives {
            term += (sim(i, p).exp() / denom).ln();
        }
        total -= term / TwoFloat::from(positives.len() as f64);
    }
    total.hi() + total.lo()
}

/// Windows with their high/low class, computed the same way as the
/// experiment pipeline: median fusion, sliding windows, corpus-wide median
/// with an exclusion band, optionally after permuting measures.
pub fn labeled_windows(
    sessions: &[Session],
    window_length_s: f64,
    modality: &ModalityConfig,
    epsilon: f64,
    shuffle_seed: Option<u64>,
) -> (Vec<(WindowSample, usize)>, f64) {
    let mut windows = Vec::new();
    for s in sessions {
        let fused = fuse_annotations(&s.annotations).unwrap();
        windows.extend(window_session(s, &fused, window_length_s, 0.4, modality).unwrap().samples);
    }
    if let Some(seed) = shuffle_seed {
        shuffle_measures(&mut windows, seed);
    }
    let states: Vec<f64> = windows.iter().map(|w| w.measures.state).collect();
    let th = compute_threshold(&states, Strategy::HighLow, epsilon).unwrap();
    let labeled = windows
        .into_iter()
        .filter_map(|w| {
            assign_label(&w.measures, &th)
                .label()
                .map(|l| (w, l.class_index()))
        })
        .collect();
    (labeled, th.median)
}

/// Linear readout oracle: ordinary least squares from standardized window
/// features to the window's affect state, thresholded at the high/low
/// median. Returns the mean test accuracy over the given folds.
pub fn linear_readout_accuracy(data: &[(WindowSample, usize)], median: f64, folds: &[FoldSplit]) -> f64 {
    let mut accs = Vec::new();
    for f in folds {
        let train: Vec<_> = data
            .iter()
            .filter(|(w, _)| f.train_participants.contains(&w.participant_id))
            .collect();
        let test: Vec<_> = data
            .iter()
            .filter(|(w, _)| f.test_participants.contains(&w.participant_id))
            .collect();
        let raw: Vec<Vec<f64>> = train.iter().map(|(w, _)| w.features.clone()).collect();
        let sc = Standardizer::fit(&raw).unwrap();
        let d = sc.dim() + 1;
        let rows: Vec<Vec<f64>> = raw.iter().map(|r| sc.transform_row(r)).collect();
        let x = DMatrix::from_fn(rows.len(), d, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
        let y = DVector::from_fn(rows.len(), |i, _| train[i].0.measures.state);
        let beta = x.svd(true, true).solve(&y, 1e-12).unwrap();
        let hits = test
            .iter()
            .filter(|(w, c)| {
                let z = sc.transform_row(&w.features);
                let pred: f64 = beta[0] + z.iter().zip(beta.iter().skip(1)).map(|(a, b)| a * b).sum::<f64>();
                (pred > median) == (*c == 1)
            })
            .count();
        accs.push(hits as f64 / test.len() as f64);
    }
    accs.iter().sum::<f64>() / accs.len() as f64
}

pub const FD_STEP: f64 = 1e-5;
/// Relative errors are measured against max(|analytic|, |numeric|, floor).
pub const FD_FLOOR: f64 = 1e-6;

fn random_layer<R: Rng>(rng: &mut R, in_dim: usize, out_dim: usize, act: Activation) -> DenseLayer {
    let w: Vec<f64> = (0..in_dim * out_dim).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.8).collect();
    let b: Vec<f64> = (0..out_dim).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.5).collect();
    DenseLayer::new(in_dim, out_dim, w, b, act).unwrap()
}

/// Random stack of 1 to 3 dense layers mixing every activation, checked on
/// a random linear functional of the output. Returns the worst relative
/// error over `n_configs` draws.
pub fn network_gradcheck(n_configs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let acts = [Activation::Sigmoid, Activation::Softmax, Activation::Identity];
    let mut worst: f64 = 0.0;
    for c in 0..n_configs {
        let depth = rng.random_range(1..=3);
        let mut dims = vec![rng.random_range(1..=8)];
        for _ in 0..depth {
            dims.push(rng.random_range(1..=6));
        }
        let layers = (0..depth)
            .map(|l| {
                // every activation appears in the first three draws
                let act = if c < 3 { acts[c] } else { acts[rng.random_range(0..3)] };
                random_layer(&mut rng, dims[l], dims[l + 1], act)
            })
            .collect();
        let mut net = Network::new(layers).unwrap();
        let x: Vec<f64> = (0..dims[0]).map(|_| rng.sample(StandardNormal)).collect();
        let coef: Vec<f64> = (0..dims[depth]).map(|_| rng.sample(StandardNormal)).collect();

        let (_, cache) = net.forward(&x).unwrap();
        let analytic = net.backward(&coef, &cache).unwrap().flatten();
        let p0 = net.params();
        let numeric = finite_diff_grad(
            |p| {
                net.set_params(p).unwrap();
                let y = net.predict(&x).unwrap();
                y.iter().zip(&coef).map(|(a, b)| a * b).sum()
            },
            &p0,
            FD_STEP,
        );
        worst = worst.max(max_relative_error(&analytic, &numeric, FD_FLOOR));
    }
    worst
}

/// Contrastive-loss gradient w.r.t. raw representations against central
/// differences, over random batches that include anchors without positives.
pub fn supcon_gradcheck(n_configs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_configs {
        let n = rng.random_range(2..=12);
        let dim = rng.random_range(2..=8);
        let n_classes = rng.random_range(1..=4);
        let tau = [0.1, 0.5, 1.0][rng.random_range(0..3)];
        let reps = gaussian_matrix(&mut rng, n, dim);
        let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
        // make sure at least one anchor has a positive
        labels[1] = labels[0];
        let batch = ContrastiveBatch::new(&reps, &labels, tau).unwrap();
        let analytic: Vec<f64> = supcon_grad(&batch).unwrap().concat();
        let flat = reps.concat();
        let numeric = finite_diff_grad(
            |p| {
                let r: Vec<Vec<f64>> = p.chunks(dim).map(<[f64]>::to_vec).collect();
                supcon_loss(&ContrastiveBatch::new(&r, &labels, tau).unwrap()).unwrap()
            },
            &flat,
            FD_STEP,
        );
        worst = worst.max(max_relative_error(&analytic, &numeric, FD_FLOOR));
    }
    worst
}

/// Random contrastive batches for the loss oracle: n <= 32, dim <= 30.
pub fn random_batches(count: usize, seed: u64) -> Vec<(Vec<Vec<f64>>, Vec<usize>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n = rng.random_range(2..=32);
            let dim = rng.random_range(1..=30);
            let classes = rng.random_range(1..=5);
            let reps = gaussian_matrix(&mut rng, n, dim);
            let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
            let tau = if i % 2 == 0 { 0.1 } else { 1.0 };
            (reps, labels, tau)
        })
        .collect()
}

/// Checks every fold of an experiment against the protocol: disjoint
/// participants, full test coverage per run, change/trend thresholds equal
/// to the median over that fold's training windows only, frozen encoder.
/// Returns one message per violation.
pub fn protocol_violations(r: &ExperimentResult, sessions: &[Session]) -> Vec<String> {
    let mut out = Vec::new();
    let all: BTreeSet<String> = sessions.iter().map(|s| s.participant_id.clone()).collect();
    if r.hl_threshold.source_participants != all {
        out.push("high/low threshold not computed over the whole corpus".into());
    }
    let (windows, _) = labeled_windows(
        sessions,
        r.window_length_s,
        &r.modality,
        r.options.epsilon,
        r.options.label_shuffle_seed,
    );
    for run in &r.runs {
        let mut covered = BTreeSet::new();
        for f in &run.folds {
            let at = format!("{} run {} fold {}", r.method, run.run_index, f.split.fold_index);
            if !f.split.train_participants.is_disjoint(&f.split.test_participants) {
                out.push(format!("{at}: train and test share participants"));
            }
            covered.extend(f.split.test_participants.iter().cloned());
            if let Some(strategy) = r.method.contrastive_strategy().filter(|s| *s != Strategy::HighLow) {
                let Some(rec) = f.fold_threshold.as_ref() else {
                    out.push(format!("{at}: no fold threshold recorded"));
                    continue;
                };
                if rec.source_participants != f.split.train_participants {
                    out.push(format!("{at}: threshold sources differ from the training participants"));
                }
                // unlabeled (inside the band) windows are already dropped here
                let train_values: Vec<f64> = windows
                    .iter()
                    .filter(|(w, _)| f.split.train_participants.contains(&w.participant_id))
                    .map(|(w, _)| w.measures.get(strategy))
                    .collect();
                if rec.n_windows != train_values.len() {
                    out.push(format!("{at}: threshold from {} windows, expected {}", rec.n_windows, train_values.len()));
                }
                let expected = compute_threshold(&train_values, strategy, 0.0).unwrap();
                if rec.thresholds != expected {
                    out.push(format!("{at}: threshold {:?}, expected {expected:?}", rec.thresholds));
                }
            }
            if r.method.contrastive_strategy().is_some() && f.encoder_frozen != Some(true) {
                out.push(format!("{at}: encoder changed during probe training"));
            }
        }
        if covered != all {
            out.push(format!("{} run {}: test folds do not cover every participant", r.method, run.run_index));
        }
    }
    out
}

/// Two samples of random sizes with shifted means and unequal spreads.
pub fn random_pair(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let na = rng.random_range(2..12);
    let nb = rng.random_range(2..12);
    let shift: f64 = rng.random_range(-2.0..2.0);
    let a = (0..na).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let b = (0..nb).map(|_| rng.sample::<f64, _>(StandardNormal) * 1.5 + shift).collect();
    (a, b)
}

/// Two-tailed p from statrs' Student t CDF, which shares no code with ours.
pub fn statrs_p(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    2.0 * dist.cdf(-t.abs())
}
