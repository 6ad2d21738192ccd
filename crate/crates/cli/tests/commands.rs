use iddm::checkpoint::{Checkpoint, MAGIC, VERSION};
use iddm::commands::{self, Model, SWEEP_HEADER};
use iddm::config::{LrSchedule, PriorKind, RunConfig};
use iddm::train::{self, draw_batch};
use iddm::{fixture, CliError};
use iddm_core::data::{generate, DatasetSpec};
use iddm_core::objective::training_loss;
use iddm_core::oracle::VerifyOptions;
use iddm_core::predictor::{ConstantPredictor, PerfectPredictor};
use iddm_core::schedule::build_grid;
use iddm_core::Simplex;

fn small_config() -> RunConfig {
    RunConfig {
        train_steps: 40,
        dataset_samples: 256,
        hidden: 16,
        time_dim: 8,
        batch: 16,
        ..RunConfig::default()
    }
}

fn point_mass_config() -> RunConfig {
    RunConfig {
        dataset: DatasetSpec::PointMass {
            k: 4,
            point: vec![2, 0, 3],
        },
        dataset_samples: 64,
        train_steps: 500,
        hidden: 16,
        time_dim: 8,
        batch: 16,
        lr: 1e-2,
        lr_schedule: LrSchedule::Constant,
        ..RunConfig::default()
    }
}

fn trained(cfg: &RunConfig) -> Model {
    let outcome = train::train(cfg, &mut |_, _| {}).unwrap();
    Model::from_checkpoint(Checkpoint::new(cfg.clone(), outcome.params).unwrap()).unwrap()
}

#[test]
fn checkpoint_round_trips_bytes_and_rejects_other_versions() {
    let cfg = small_config();
    let outcome = train::train(&cfg, &mut |_, _| {}).unwrap();
    let ckpt = Checkpoint::new(cfg, outcome.params).unwrap();
    let bytes = ckpt.to_bytes();
    assert_eq!(&bytes[..8], MAGIC);
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    assert_eq!(back.config, ckpt.config);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ckpt.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);

    let mut other = bytes.clone();
    other[8..12].copy_from_slice(&(VERSION + 1).to_le_bytes());
    match Checkpoint::from_bytes(&other) {
        Err(CliError::Version { found, expected }) => {
            assert_eq!((found, expected), (VERSION + 1, VERSION));
        }
        other => panic!("expected a version error, got {other:?}"),
    }

    let mut flipped = bytes;
    let mid = flipped.len() / 2;
    flipped[mid] ^= 1;
    assert!(Checkpoint::from_bytes(&flipped).is_err());
}

#[test]
fn training_is_deterministic_given_the_seed() {
    let cfg = small_config();
    let a = train::train(&cfg, &mut |_, _| {}).unwrap();
    let b = train::train(&cfg, &mut |_, _| {}).unwrap();
    assert_eq!(a.params.values(), b.params.values());
    assert_eq!(a.losses, b.losses);
    let other = train::train(
        &RunConfig {
            train_seed: 1,
            ..cfg
        },
        &mut |_, _| {},
    )
    .unwrap();
    assert_ne!(a.params.values(), other.params.values());
}

#[test]
fn first_loss_is_that_of_the_uniform_predictor() {
    let cfg = RunConfig {
        train_steps: 1,
        ..small_config()
    };
    let outcome = train::train(&cfg, &mut |_, _| {}).unwrap();
    let data = cfg.training_data().unwrap();
    let prior = cfg.prior_simplex(&data).unwrap();
    let batch = draw_batch(&cfg, &data, &prior, 0).unwrap();
    let uniform = ConstantPredictor::uniform(cfg.categories(), cfg.length()).unwrap();
    let expected = training_loss(&batch, cfg.gamma, cfg.lambda, &prior, &uniform).unwrap();
    assert!(
        (outcome.losses[0] - expected).abs() < 1e-12,
        "{} vs {expected}",
        outcome.losses[0]
    );
}

#[test]
fn point_mass_training_drives_the_loss_down_and_samples_the_point() {
    let cfg = point_mass_config();
    let outcome = train::train(&cfg, &mut |_, _| {}).unwrap();
    let tail = &outcome.losses[outcome.losses.len() - 20..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    assert!(mean < 0.05, "final loss {mean}");

    let model = Model::from_checkpoint(Checkpoint::new(cfg, outcome.params).unwrap()).unwrap();
    let run = commands::sample(&model, 500, 0.0, 4.0, 64, 7).unwrap();
    let hits = run.samples.iter().filter(|s| **s == [2, 0, 3]).count();
    assert!(hits * 100 >= 99 * 500, "{hits} of 500 samples equal the point");
}

#[test]
fn empty_sample_request_writes_only_the_header() {
    let model = trained(&RunConfig {
        train_steps: 2,
        ..small_config()
    });
    let run = commands::sample(&model, 0, 0.0, 4.0, 8, 0).unwrap();
    assert!(run.samples.is_empty());
    assert_eq!(run.mean_transitions(), 0.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.txt");
    fixture::write(&path, 4, 3, &run.samples).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "4 3\n");
    assert_eq!(fixture::read(&path).unwrap().len(), 0);
}

#[test]
fn perfect_predictor_scores_zero_nats() {
    let cfg = RunConfig {
        dataset: DatasetSpec::PointMass {
            k: 3,
            point: vec![1, 2],
        },
        ..RunConfig::default()
    };
    let data = generate(&cfg.dataset, 16, 0).unwrap();
    let prior = Simplex::uniform(3).unwrap();
    let perfect = PerfectPredictor::new(3, vec![1, 2]).unwrap();
    for lambda in [0.0, 0.5, 1.0] {
        let grid = build_grid(16, 4.0).unwrap();
        let nats = commands::nats_per_token(&prior, &perfect, &grid, &cfg, lambda, &data, 4, 0).unwrap();
        assert_eq!(nats, 0.0);
        assert_eq!(nats.exp(), 1.0);
    }
}

#[test]
fn uniform_predictor_bound_on_uniform_iid_data_is_valid() {
    let k = 4;
    let cfg = RunConfig {
        dataset: DatasetSpec::Iid {
            probs: Simplex::uniform(k).unwrap(),
            length: 2,
        },
        ..RunConfig::default()
    };
    let data = generate(&cfg.dataset, 400, 3).unwrap();
    let prior = Simplex::uniform(k).unwrap();
    let uniform = ConstantPredictor::uniform(k, 2).unwrap();
    let grid = build_grid(16, 1.0).unwrap();
    let nats = commands::nats_per_token(&prior, &uniform, &grid, &cfg, 0.0, &data, 64, 0).unwrap();
    // By symmetry the model's marginal is exactly uniform, so log 4 is the
    // true per-token NLL and the bound sits above it by the summed step KLs.
    let ln_k = (k as f64).ln();
    assert!(nats >= ln_k, "{nats} < {ln_k}");

    // Expected bound per token, enumerating x_t instead of sampling it.
    // Reconstruction is exactly -log 4 and the prior term vanishes.
    let q = 1.0 / k as f64;
    let mut expected = ln_k;
    for i in 2..=grid.steps() {
        let (s, t) = grid.step_bounds(i);
        let (gs, gt) = (1.0 - s, 1.0 - t);
        let w_stay = (1.0 - gs) / (1.0 - gt);
        let w_flip = 1.0 - w_stay;
        let x = 0;
        for x_t in 0..k {
            let m_t = (1.0 - gt) * q + if x_t == x { gt } else { 0.0 };
            let mut kl = 0.0;
            for j in 0..k {
                let stay = if j == x_t { w_stay } else { 0.0 };
                let truth = stay + if j == x { w_flip } else { 0.0 };
                let model = stay + w_flip * q;
                if truth > 0.0 {
                    kl += truth * (truth / model).ln();
                }
            }
            expected += m_t * kl;
        }
    }
    assert!((nats - expected).abs() < 0.02, "{nats} vs {expected}");
}

#[test]
fn single_cell_sweep_is_reproducible() {
    let model = trained(&small_config());
    let a = commands::sweep(&model, &[0.0], &[4.0], &[8], 50, 2, 5).unwrap();
    let b = commands::sweep(&model, &[0.0], &[4.0], &[8], 50, 2, 5).unwrap();
    assert_eq!(a.len(), 1);
    let text = commands::format_sweep(&a);
    assert_eq!(text, commands::format_sweep(&b));
    assert_eq!(text.lines().next(), Some(SWEEP_HEADER));
    assert_eq!(text.lines().count(), 2);
    assert!((0.0..=1.0).contains(&a[0].tv_to_data));
}

#[test]
fn transitions_grow_with_lambda_across_a_sweep() {
    let model = trained(&small_config());
    let rows = commands::sweep(&model, &[0.0, 0.5, 1.0], &[4.0], &[16], 300, 1, 2).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.windows(2).all(|w| w[0].mean_transitions <= w[1].mean_transitions));
}

#[test]
fn verify_passes_and_an_injected_fault_is_named() {
    let opts = VerifyOptions {
        trials: 500,
        ..VerifyOptions::default()
    };
    let (reports, ok) = commands::verify(&opts);
    assert!(ok, "{}", commands::format_verify_report(&reports));
    let report = commands::format_verify_report(&reports);
    assert!(report.ends_with("overall\tPASS\n"));

    let (reports, ok) = commands::verify(&VerifyOptions {
        weight_fault: 1e-3,
        ..opts
    });
    assert!(!ok);
    let failed: Vec<_> = reports.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    assert!(failed.contains(&"marginal_consistency"), "{failed:?}");
    assert!(commands::format_verify_report(&reports).contains("marginal_consistency\t"));
}

#[test]
fn config_file_round_trips_through_its_text_form() {
    let text = "\
# point-mass run
dataset.kind = point_mass
dataset.k = 5
dataset.point = 4 0 1
prior = marginal
schedule.lambda = 0.25
sampler.steps = 32
train.optimizer = sgd
train.lr = 0.05
train.steps = 10
model.hidden = 8
";
    let cfg = RunConfig::parse(text).unwrap();
    assert_eq!(
        cfg.dataset,
        DatasetSpec::PointMass {
            k: 5,
            point: vec![4, 0, 1]
        }
    );
    assert_eq!(cfg.prior, PriorKind::Marginal);
    assert_eq!((cfg.lambda, cfg.steps, cfg.lr, cfg.train_steps, cfg.hidden), (0.25, 32, 0.05, 10, 8));
    assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);

    assert!(matches!(
        RunConfig::parse("train.lr = 1\ntrain.lr = 2\n"),
        Err(CliError::Config { line: 2, .. })
    ));
    assert!(RunConfig::parse("train.momentum = 0.9\n").is_err());
}
