//! Distribution-level quality checks for the conditional tabular GAN.
//!
//! The contract tests elsewhere pin encode/decode arithmetic and determinism;
//! this suite asks whether training actually reaches a useful equilibrium on a
//! pinned two-blob problem: the discriminator should end up undecided rather
//! than winning outright, generated labels should survive decoding, and the
//! synthetic sample should support the same cluster structure as the real
//! data. One training run is shared across the whole suite.

mod support;

use std::sync::OnceLock;

use anonymixer::cluster::{kmeans_fit, ClusterAssignment};
use anonymixer::ctgan::{
    ctgan_sample, ctgan_train, decode_row, encode_row, sample_encoded, CtganConfig, CtganModel,
    EncodedRow, TrainingLog,
};
use anonymixer::dataio::{generate_toy_telemetry, minmax_normalize, Dataset};
use anonymixer::matrix::Matrix;
use anonymixer::metrics::silhouette;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOY_SEED: u64 = 31;
const TRAIN_SEED: u64 = 71;
const N_ROWS: usize = 240;

fn quality_config() -> CtganConfig {
    CtganConfig {
        epochs: 2000,
        batch_size: 60,
        noise_dim: 16,
        hidden_sizes: vec![48],
        learning_rate: 3e-4,
        beta1: 0.5,
        beta2: 0.9,
        max_modes: 3,
    }
}

struct Trained {
    data: Dataset,
    truth: ClusterAssignment,
    model: CtganModel,
    log: TrainingLog,
}

/// Train once on a pinned, well-separated two-blob dataset; every test in this
/// file probes the same converged model.
fn trained() -> &'static Trained {
    static TRAINED: OnceLock<Trained> = OnceLock::new();
    TRAINED.get_or_init(|| {
        let (raw, truth) = generate_toy_telemetry(TOY_SEED, N_ROWS, 2, 3, 14.0).unwrap();
        let (data, _) = minmax_normalize(&raw);
        let (model, log) = ctgan_train(&data, &truth, &quality_config(), TRAIN_SEED).unwrap();
        Trained {
            data,
            truth,
            model,
            log,
        }
    })
}

/// Mean discriminator score over a batch of encoded-plus-condition inputs.
fn mean_disc_score(model: &CtganModel, input: &Matrix) -> f64 {
    let cache = model.discriminator.forward(input).unwrap();
    let out = cache.output();
    let n = out.n_rows();
    (0..n).map(|r| out.get(r, 0)).sum::<f64>() / n as f64
}

/// After training, the discriminator should be roughly undecided on both real
/// and generated rows. A large gap between the two mean scores means it can
/// still tell the sides apart, i.e. the generator lost; both means pinned near
/// 0 or 1 means one side collapsed. The bands are generous because training
/// adds Gaussian instance noise to discriminator inputs while this probe feeds
/// clean ones, which shifts the scores slightly off their training-time values.
#[test]
fn discriminator_ends_near_equilibrium() {
    let trained = trained();
    let model = &trained.model;
    let width = model.normalizer.encoded_width(model.label_count);

    // Real side: encode every training row under its true label.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = trained.data.n_rows();
    let mut real_in = Matrix::zeros(n, width + model.label_count);
    for r in 0..n {
        let label = trained.truth.labels()[r];
        let encoded = encode_row(
            &model.normalizer,
            trained.data.features().row(r),
            label,
            model.label_count,
            &mut rng,
        )
        .unwrap();
        for (c, &v) in encoded.values.iter().enumerate() {
            real_in.set(r, c, v);
        }
        real_in.set(r, width + label as usize, 1.0);
    }

    // Generated side: fresh samples with their drawn conditions.
    let (fake_encoded, fake_labels) = sample_encoded(model, n, None, 6).unwrap();
    let mut fake_in = Matrix::zeros(n, width + model.label_count);
    for r in 0..n {
        for c in 0..width {
            fake_in.set(r, c, fake_encoded.get(r, c));
        }
        fake_in.set(r, width + fake_labels[r] as usize, 1.0);
    }

    let real_score = mean_disc_score(model, &real_in);
    let fake_score = mean_disc_score(model, &fake_in);
    let gap = (real_score - fake_score).abs();
    println!("mean discriminator score: real {real_score:.4}, generated {fake_score:.4}, gap {gap:.4}");

    assert!(
        (0.15..=0.92).contains(&real_score),
        "discriminator is too sure about real rows: mean score {real_score:.4}"
    );
    assert!(
        (0.08..=0.85).contains(&fake_score),
        "discriminator is too sure about generated rows: mean score {fake_score:.4}"
    );
    assert!(
        gap <= 0.45,
        "discriminator still separates real from generated: gap {gap:.4}"
    );
}

/// Sampling without an explicit condition draws labels from the empirical
/// distribution and feeds them to the generator as one-hot conditions; the
/// decoded label (argmax over the label segment of the generator output) must
/// agree with the drawn condition almost always.
#[test]
fn generated_labels_survive_decoding() {
    let trained = trained();
    let model = &trained.model;
    let n = 500;
    let (encoded, labels) = sample_encoded(model, n, None, 33).unwrap();
    let mut agree = 0usize;
    for r in 0..n {
        let row = EncodedRow {
            values: encoded.row(r).to_vec(),
        };
        let (_, decoded) = decode_row(&model.normalizer, &row, model.label_count).unwrap();
        if decoded == labels[r] {
            agree += 1;
        }
    }
    println!("label agreement: {agree}/{n}");
    assert!(
        agree * 100 >= n * 99,
        "only {agree}/{n} generated rows decode back to their condition"
    );
}

/// The synthetic sample should support the same cluster structure as the real
/// data: k-means with the true k finds clusters of similar quality, measured
/// by mean silhouette width in the shared normalized space.
#[test]
fn synthetic_sample_preserves_cluster_structure() {
    let trained = trained();
    let synthetic = ctgan_sample(&trained.model, N_ROWS, None, 44).unwrap();

    let (_, real_km) = kmeans_fit(&trained.data, 2, 9, 300, 1e-9).unwrap();
    let (_, synth_km) = kmeans_fit(&synthetic, 2, 9, 300, 1e-9).unwrap();
    let real_sil = silhouette(&trained.data, &real_km).unwrap();
    let synth_sil = silhouette(&synthetic, &synth_km).unwrap();
    let gap = (real_sil - synth_sil).abs();
    println!("silhouette: real {real_sil:.4}, synthetic {synth_sil:.4}, gap {gap:.4}");

    assert!(
        real_sil > 0.5,
        "toy problem should cluster cleanly, got silhouette {real_sil:.4}"
    );
    assert!(
        gap <= 0.15,
        "synthetic clustering quality drifted from real: gap {gap:.4}"
    );
}

/// Loss history bookkeeping: one entry per optimizer step, every loss finite,
/// and late-training discriminator loss well away from zero (a discriminator
/// loss near zero means it wins outright and the generator gets no signal).
#[test]
fn loss_history_is_complete_and_sane() {
    let trained = trained();
    let config = quality_config();
    let steps_per_epoch = trained.data.n_rows().div_ceil(config.batch_size);
    assert_eq!(trained.log.steps.len(), config.epochs * steps_per_epoch);
    assert_eq!(trained.log.noise_rows_dropped, 0);

    for step in &trained.log.steps {
        assert!(
            step.gen_loss.is_finite() && step.disc_loss.is_finite(),
            "non-finite loss at step {}",
            step.step
        );
    }

    let tail = &trained.log.steps[trained.log.steps.len() - 200..];
    let tail_disc = tail.iter().map(|s| s.disc_loss).sum::<f64>() / tail.len() as f64;
    let tail_gen = tail.iter().map(|s| s.gen_loss).sum::<f64>() / tail.len() as f64;
    println!("late-training mean losses: generator {tail_gen:.4}, discriminator {tail_disc:.4}");
    assert!(
        (0.2..=3.0).contains(&tail_disc),
        "late discriminator loss {tail_disc:.4} outside healthy band"
    );
    assert!(
        (0.1..=6.0).contains(&tail_gen),
        "late generator loss {tail_gen:.4} outside healthy band"
    );
}

/// Two short training runs from the same seed must agree bit for bit — model
/// and loss history both — so pipeline reruns are exactly reproducible.
#[test]
fn short_training_runs_are_bit_identical() {
    let (raw, truth) = generate_toy_telemetry(TOY_SEED, 120, 2, 3, 14.0).unwrap();
    let (data, _) = minmax_normalize(&raw);
    let config = CtganConfig {
        epochs: 5,
        ..quality_config()
    };
    let (model_a, log_a) = ctgan_train(&data, &truth, &config, 7).unwrap();
    let (model_b, log_b) = ctgan_train(&data, &truth, &config, 7).unwrap();
    assert_eq!(model_a, model_b);
    assert_eq!(log_a, log_b);
}
