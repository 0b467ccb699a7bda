//! Temporary exploration harness (not a real test): prints accuracies of
//! source-only / pretrain / full runs on the synthetic task.

use dctn_core::*;
use std::time::Instant;

fn source_only(
    sources: &[DomainDataset],
    target: &DomainDataset,
    labels: &[ClassId],
    cfg: TrainConfig,
) -> f64 {
    let class_sets = sources.iter().map(|s| s.class_set.clone()).collect();
    let model = DctnModel::new(&ModelArch::default(), class_sets, cfg.seed).unwrap();
    let mut tr = Trainer::new(model, sources, target, Some(labels), cfg).unwrap();
    tr.pretrain_supervised().unwrap();
    let preds = tr
        .model()
        .predict_features_uniform(&target.features)
        .unwrap();
    accuracy_percent(&preds, labels).unwrap()
}

fn dctn_run(
    sources: &[DomainDataset],
    target: &DomainDataset,
    labels: &[ClassId],
    cfg: TrainConfig,
) -> (f64, f64) {
    let class_sets = sources.iter().map(|s| s.class_set.clone()).collect();
    let model = DctnModel::new(&ModelArch::default(), class_sets, cfg.seed).unwrap();
    let (model, trace) = train(model, sources, target, cfg, Some(labels)).unwrap();
    let preds = model.predict_features(&target.features).unwrap();
    let final_acc = accuracy_percent(&preds, labels).unwrap();
    (trace.pretrain_test_acc().unwrap(), final_acc)
}

#[test]
#[ignore]
fn probe_synthetic_task() {
    for theta in [0.0, 0.35, 1.5] {
        println!("==== theta = {theta} ====");
        for seed in 17..20u64 {
            let (sources, target, labels) =
                gen_synthetic_domains(2, 4, 500, theta, seed).unwrap();
            let cfg = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            let t0 = Instant::now();
            let so = source_only(&sources, &target, &labels, cfg.clone());
            let t1 = Instant::now();
            let (pre, fin) = dctn_run(&sources, &target, &labels, cfg);
            println!(
                "seed {seed}: source_only {so:5.1}  pretrain {pre:5.1}  dctn {fin:5.1}   (so {:?}, dctn {:?})",
                t1 - t0,
                t1.elapsed()
            );
        }
    }
}

#[test]
#[ignore]
fn probe_grid() {
    let base = TrainConfig::default();
    let variants: Vec<(&str, TrainConfig)> = vec![
        ("base", base.clone()),
        (
            "lr_d=.05",
            TrainConfig {
                lr_discriminator: 0.05,
                ..base.clone()
            },
        ),
        (
            "beta=50",
            TrainConfig {
                adversarial_iters: 50,
                ..base.clone()
            },
        ),
        (
            "gamma=.95",
            TrainConfig {
                confidence_threshold: 0.95,
                ..base.clone()
            },
        ),
        (
            "pre=10",
            TrainConfig {
                pretrain_epochs: 10,
                ..base.clone()
            },
        ),
        (
            "lr_d=.05,beta=50",
            TrainConfig {
                lr_discriminator: 0.05,
                adversarial_iters: 50,
                ..base.clone()
            },
        ),
        (
            "pre=10,gamma=.95",
            TrainConfig {
                pretrain_epochs: 10,
                confidence_threshold: 0.95,
                ..base.clone()
            },
        ),
    ];
    for (name, cfg) in variants {
        for mode in [ShiftMode::Vanilla, ShiftMode::Disjoint] {
            let mut so_m = 0.0;
            let mut pre_m = 0.0;
            let mut fin_m = 0.0;
            let n_seeds = 3.0;
            for seed in 17..20u64 {
                let (sources, target, labels) =
                    gen_synthetic_domains(2, 4, 500, 0.35, seed).unwrap();
                let spec = ShiftSpec {
                    mode,
                    n_sources: 2,
                    total_classes: 4,
                };
                let shifted = apply_category_shift(&sources, &spec).unwrap();
                let cfg = TrainConfig {
                    seed,
                    ..cfg.clone()
                };
                let so = source_only(&shifted, &target, &labels, cfg.clone());
                let (pre, fin) = dctn_run(&shifted, &target, &labels, cfg);
                so_m += so / n_seeds;
                pre_m += pre / n_seeds;
                fin_m += fin / n_seeds;
            }
            println!(
                "{name:18} {mode:?}: source_only {so_m:5.1}  pretrain {pre_m:5.1}  dctn {fin_m:5.1}  gain {:+.1}",
                fin_m - so_m
            );
        }
    }
}

#[test]
#[ignore]
fn probe_disjoint_diag() {
    // confidence vs correctness after supervised-only pretraining, disjoint
    let seed = 17u64;
    let (sources, target, labels) = gen_synthetic_domains(2, 4, 500, 0.35, seed).unwrap();
    let spec = ShiftSpec {
        mode: ShiftMode::Disjoint,
        n_sources: 2,
        total_classes: 4,
    };
    let shifted = apply_category_shift(&sources, &spec).unwrap();
    let cfg = TrainConfig {
        seed,
        pretrain_epochs: 10,
        ..TrainConfig::default()
    };
    let class_sets = shifted.iter().map(|s| s.class_set.clone()).collect();
    let model = DctnModel::new(&ModelArch::default(), class_sets, cfg.seed).unwrap();
    let mut tr = Trainer::new(model, &shifted, &target, Some(&labels), cfg.clone()).unwrap();
    tr.pretrain_supervised().unwrap();
    let preds = tr
        .model()
        .predict_features_uniform(&target.features)
        .unwrap();
    let edges = [0.0, 0.6, 0.8, 0.9, 0.95, 0.98, 0.99, 0.995, 1.0];
    let mut bins = vec![(0usize, 0usize); edges.len() - 1];
    for (p, &l) in preds.iter().zip(labels.iter()) {
        let b = edges
            .windows(2)
            .position(|w| p.max_confidence >= w[0] && p.max_confidence < w[1])
            .unwrap_or(bins.len() - 1);
        bins[b].1 += 1;
        if p.predicted_class == l {
            bins[b].0 += 1;
        }
    }
    for (b, (c, t)) in bins.iter().enumerate() {
        if *t > 0 {
            println!(
                "conf [{:.3},{:.3}): {:3} samples, {:.0}% correct",
                edges[b],
                edges[b + 1],
                t,
                100.0 * *c as f64 / *t as f64
            );
        }
    }

    // isolate phases and probe gentler adversarial pressure
    for (name, gamma, rounds, beta, lr_d) in [
        ("adv-only γ=1", 1.0, 10, 20, 0.01),
        ("γ=0.97 r=5", 0.97, 5, 20, 0.01),
        ("γ=0.95 β=5", 0.95, 10, 5, 0.01),
        ("γ=0.95 β=5 lr_d=.002", 0.95, 10, 5, 0.002),
        ("γ=0.99 β=5", 0.99, 10, 5, 0.01),
        ("γ=0.95 β=2", 0.95, 10, 2, 0.01),
    ] {
        let cfg2 = TrainConfig {
            confidence_threshold: gamma,
            max_rounds: rounds,
            adversarial_iters: beta,
            lr_discriminator: lr_d,
            ..cfg.clone()
        };
        let class_sets = shifted.iter().map(|s| s.class_set.clone()).collect();
        let model = DctnModel::new(&ModelArch::default(), class_sets, cfg2.seed).unwrap();
        let (model, trace) = train(model, &shifted, &target, cfg2, Some(&labels)).unwrap();
        let preds = model.predict_features(&target.features).unwrap();
        let fin = accuracy_percent(&preds, &labels).unwrap();
        let per_round: Vec<String> = trace
            .discriminative_records()
            .map(|r| format!("{:.0}", r.test_acc.unwrap()))
            .collect();
        println!(
            "{name}: pretrain {:.1} rounds [{}] final {fin:.1}",
            trace.pretrain_test_acc().unwrap(),
            per_round.join(",")
        );
    }
}

#[test]
#[ignore]
fn probe_rounds() {
    for (name, mode) in [("vanilla", ShiftMode::Vanilla), ("disjoint", ShiftMode::Disjoint)] {
        let seed = 17u64;
        let (sources, target, labels) = gen_synthetic_domains(2, 4, 500, 0.35, seed).unwrap();
        let spec = ShiftSpec {
            mode,
            n_sources: 2,
            total_classes: 4,
        };
        let shifted = apply_category_shift(&sources, &spec).unwrap();
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let class_sets = shifted.iter().map(|s| s.class_set.clone()).collect();
        let model = DctnModel::new(&ModelArch::default(), class_sets, cfg.seed).unwrap();
        let (_, trace) = train(model, &shifted, &target, cfg, Some(&labels)).unwrap();
        println!("==== {name} ====");
        for r in &trace.records {
            match r.phase {
                Phase::Pretrain | Phase::Discriminative => println!(
                    "round {:2} {:?}: loss_cls {:.4} n_pseudo {:?} pseudo_acc {:?} test {:?}",
                    r.round, r.phase, r.loss_cls, r.n_pseudo, r.pseudo_acc, r.test_acc
                ),
                Phase::Adversarial => {
                    if r.iter == 0 || r.iter == 19 {
                        println!(
                            "round {:2} adv it {:2}: loss_adv {:.4} loss_cls {:.4} j* {:?}",
                            r.round,
                            r.iter,
                            r.loss_adv.unwrap(),
                            r.loss_cls,
                            r.j_star
                        );
                    }
                }
            }
        }
    }
}

#[test]
#[ignore]
fn probe_disjoint() {
    for seed in 17..20u64 {
        let (sources, target, labels) = gen_synthetic_domains(2, 4, 500, 0.35, seed).unwrap();
        let spec = ShiftSpec {
            mode: ShiftMode::Disjoint,
            n_sources: 2,
            total_classes: 4,
        };
        let shifted = apply_category_shift(&sources, &spec).unwrap();
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let so = source_only(&shifted, &target, &labels, cfg.clone());
        let (pre, fin) = dctn_run(&shifted, &target, &labels, cfg);
        println!("seed {seed}: source_only {so:5.1}  pretrain {pre:5.1}  dctn {fin:5.1}");
    }
}
