use ltkd_core::data::{generate_synthetic, GeneratorConfig};
use ltkd_core::experiment::{prepare, ExperimentConfig};
use ltkd_core::subsets::StrategyKind;
use ltkd_core::train::TrainConfig;

#[test]
fn erm_favours_head_over_tail() {
    for seed in 1..=5 {
        let cfg = ExperimentConfig {
            kd: false,
            seed,
            train: TrainConfig {
                epochs: 30,
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let ds = generate_synthetic(&cfg.data, seed).unwrap();
        let p = prepare(&ds, "h", &cfg).unwrap();
        assert!(p.teachers.is_empty());
        let report = p.evaluate(&p.train_erm(&cfg.train).unwrap().model).unwrap();
        let (head, tail) = (report.map_head.unwrap(), report.map_tail.unwrap());
        assert!(head > tail, "seed {seed}: head {head} tail {tail}");
    }
}

#[test]
fn each_strategy_trains_one_teacher_per_subset() {
    let data = GeneratorConfig {
        head_count: 300,
        ..GeneratorConfig::default()
    };
    let ds = generate_synthetic(&data, 2).unwrap();
    for (strategy, expected) in [
        (StrategyKind::ShotBased, 3),
        (StrategyKind::RegionBased, 4),
        (StrategyKind::FeatureBased, 5),
    ] {
        let cfg = ExperimentConfig {
            data: data.clone(),
            strategy,
            train: TrainConfig {
                epochs: 1,
                ..TrainConfig::default()
            },
            seed: 2,
            ..ExperimentConfig::default()
        };
        let p = prepare(&ds, "h", &cfg).unwrap();
        assert_eq!(p.teachers.len(), expected, "{strategy:?}");
        let mut owned: Vec<usize> = p
            .teachers
            .iter()
            .flat_map(|t| t.subset.class_ids.clone())
            .collect();
        owned.sort_unstable();
        assert_eq!(owned, (0..ds.n_classes).collect::<Vec<_>>());
    }
}

#[test]
fn config_hash_tracks_content() {
    let a = ExperimentConfig::default();
    let mut b = a.clone();
    assert_eq!(a.config_hash().unwrap(), b.config_hash().unwrap());
    b.train.delta = 0.5;
    assert_ne!(a.config_hash().unwrap(), b.config_hash().unwrap());
    let round = ExperimentConfig::from_json(&a.canonical_json().unwrap()).unwrap();
    assert_eq!(round, a);
}
