mod common;

use hgnn_core::dataset::SplitSizes;
use hgnn_core::layers::Variant;
use hgnn_core::train::{mean_std, RunReport, TrainConfig, Trainer};

fn quick_config(variant: Variant) -> TrainConfig {
    let mut c = TrainConfig::for_dataset("synthetic", variant);
    c.model.heads = 2;
    c.model.hidden_per_head = 4;
    c.lr = 0.02;
    c.patience = 20;
    c.max_epochs = 150;
    c.trials = 3;
    c.seed = 11;
    c
}

#[test]
fn masked_loss_ignores_test_labels() {
    let bundle = common::synthetic_citations(60, 3, 9, 1, common::small_sizes());
    let mut mutated = bundle.clone();
    for &i in &bundle.split.test {
        mutated.labels[i] = (mutated.labels[i] + 1) % 3;
    }
    let config = quick_config(Variant::HyperConv);
    let a = Trainer::new(&bundle, config).unwrap();
    let b = Trainer::new(&mutated, config).unwrap();
    let (la, ga) = a.loss_and_gradients(&a.initial_model(5)).unwrap();
    let (lb, gb) = b.loss_and_gradients(&b.initial_model(5)).unwrap();
    assert_eq!(la, lb);
    assert_eq!(ga, gb);

    let mut train_mutated = bundle.clone();
    let i = bundle.split.train[0];
    train_mutated.labels[i] = (train_mutated.labels[i] + 1) % 3;
    let c = Trainer::new(&train_mutated, config).unwrap();
    assert_ne!(c.loss_and_gradients(&c.initial_model(5)).unwrap().0, la);
}

#[test]
fn restored_parameters_reproduce_best_validation_loss() {
    let bundle = common::synthetic_citations(60, 3, 9, 3, common::small_sizes());
    for variant in [Variant::HyperConv, Variant::HyperAtten] {
        let trainer = Trainer::new(&bundle, quick_config(variant)).unwrap();
        let trained = trainer.train_once(0, 42).unwrap();
        let r = &trained.result;
        let again = trainer.val_loss(&trained.model).unwrap();
        assert!((again - r.best_val_loss).abs() < 1e-12, "{variant}");
        assert_eq!(trained.val_losses[r.best_epoch - 1], r.best_val_loss);
        let min = trained.val_losses.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(min, r.best_val_loss);
        let first = trained.val_losses.iter().position(|&v| v == min).unwrap() + 1;
        assert_eq!(first, r.best_epoch);
        assert!(r.epochs_run == 150 || r.epochs_run == r.best_epoch + 20);
    }
}

#[test]
fn training_is_deterministic_and_learns() {
    let bundle = common::synthetic_citations(90, 3, 12, 4, SplitSizes { train_per_class: 5, val: 25, test: 40 });
    for variant in Variant::ALL {
        let trainer = Trainer::new(&bundle, quick_config(variant)).unwrap();
        let a = trainer.run_trial(1).unwrap();
        let b = trainer.run_trial(1).unwrap();
        assert_eq!(a, b, "{variant}");
        assert!(a.test_accuracy > 0.5, "{variant}: accuracy {}", a.test_accuracy);
        assert_ne!(a.seed, trainer.run_trial(2).unwrap().seed);
    }
}

#[test]
fn single_class_dataset_is_trivially_accurate() {
    let sizes = SplitSizes { train_per_class: 4, val: 10, test: 10 };
    let bundle = common::synthetic_citations(30, 1, 5, 6, sizes);
    let trainer = Trainer::new(&bundle, quick_config(Variant::HyperConv)).unwrap();
    let r = trainer.run_trial(0).unwrap();
    assert_eq!(r.test_accuracy, 1.0);
}

#[test]
fn report_statistics_match_scalar_recomputation() {
    let bundle = common::synthetic_citations(60, 3, 9, 7, common::small_sizes());
    let config = quick_config(Variant::GcnStar);
    let trainer = Trainer::new(&bundle, config).unwrap();
    let report = RunReport::assemble("synthetic", "test", config, trainer.run_sequential()).unwrap();
    let accs: Vec<f64> = report.trials.iter().map(|t| t.test_accuracy).collect();
    let n = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / n;
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((report.summary.mean - mean).abs() < 1e-15);
    assert!((report.summary.std - var.sqrt()).abs() < 1e-15);
    assert_eq!(mean_std(&accs), (report.summary.mean, report.summary.std));
    assert_eq!(report.summary.completed, 3);

    let mut single = config;
    single.trials = 1;
    let trainer = Trainer::new(&bundle, single).unwrap();
    let one = RunReport::assemble("synthetic", "test", single, trainer.run_sequential()).unwrap();
    assert_eq!(one.summary.std, 0.0);
    assert_eq!(one.summary.mean, one.trials[0].test_accuracy);
}

#[test]
fn invalid_configs_are_rejected() {
    let bundle = common::synthetic_citations(60, 3, 9, 1, common::small_sizes());
    let mut c = quick_config(Variant::HyperConv);
    c.patience = c.max_epochs + 1;
    assert!(Trainer::new(&bundle, c).is_err());
    let mut c = quick_config(Variant::HyperConv);
    c.model.input_dropout = 1.0;
    assert!(Trainer::new(&bundle, c).is_err());
}
