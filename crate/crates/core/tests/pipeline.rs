mod common;

use ccdae_core::backends::{NGramBackend, NGramModel, TableBackend, DEFAULT_CACHE_WEIGHT};
use ccdae_core::benchmark::{
    load_choices, load_pairs, run_choice_bench, run_similarity_bench, ScoreKind,
};
use ccdae_core::pipeline::{compare, compare_on_shared_range, explain};
use ccdae_core::CompareConfig;

fn scenes() -> TableBackend {
    TableBackend::load(common::fixture("scenes.json")).unwrap()
}

fn toy() -> NGramBackend {
    let model = NGramModel::load(common::data_dir().join("toy_ngram.model")).unwrap();
    NGramBackend::new(model, DEFAULT_CACHE_WEIGHT).unwrap()
}

const DOG: &str = "a dog runs on the beach";
const PUPPY: &str = "a puppy plays in the sand";
const CAT: &str = "a cat sleeps on a sofa";

#[test]
fn self_comparison_is_zero() {
    let backend = scenes();
    let report = compare(DOG, DOG, &backend, &CompareConfig::default()).unwrap();
    assert_eq!(report.auc, 0.0);
    assert!(report.curve.distance.iter().all(|d| *d == 0.0));
}

#[test]
fn argument_order_does_not_change_the_area() {
    let (table, ngram) = (scenes(), toy());
    let cases: [(&dyn ccdae_core::Backend, &str, &str); 2] = [
        (&table, DOG, CAT),
        (
            &ngram,
            "the chef bakes fresh bread in the oven",
            "the astronaut orbits the red planet at midnight",
        ),
    ];
    for (backend, a, b) in cases {
        let config = CompareConfig::default();
        let forward = compare(a, b, backend, &config).unwrap();
        let backward = compare(b, a, backend, &config).unwrap();
        assert_eq!(forward.auc.to_bits(), backward.auc.to_bits());
        assert!(forward.auc > 0.0);
    }
}

#[test]
fn reports_are_deterministic_for_a_seed() {
    let backend = toy();
    let config = CompareConfig {
        seed: 9,
        ..CompareConfig::default()
    };
    let a = compare(
        "the chef bakes fresh bread",
        "the baker kneads dough",
        &backend,
        &config,
    )
    .unwrap();
    let b = compare(
        "the chef bakes fresh bread",
        "the baker kneads dough",
        &backend,
        &config,
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn explanation_separates_the_two_items() {
    let batch = common::table("separable.table")
        .enumeration_batch((0, 1))
        .unwrap();
    let e = explain(&batch, 1.0, 2).unwrap();
    let label = |s: &str| s.trim_end_matches('…').to_string();
    assert_eq!(label(&e.distinctive[0][0].text), "h1");
    assert_eq!(label(&e.distinctive[1][0].text), "h2");
    assert!((e.shared[0].weight - 0.5).abs() < 1e-3);
}

#[test]
fn similar_scenes_are_closer_than_unrelated_ones() {
    let backend = scenes();
    let reports = compare_on_shared_range(
        &[(DOG, PUPPY), (DOG, CAT)],
        &backend,
        &CompareConfig::default(),
    )
    .unwrap();
    assert!(
        reports[0].auc < reports[1].auc,
        "{} vs {}",
        reports[0].auc,
        reports[1].auc
    );
}

#[test]
fn paraphrase_is_closer_on_a_shared_range() {
    let backend = toy();
    let a = "the chef bakes fresh bread in the oven";
    let paraphrase = "the baker bakes fresh bread in the oven";
    let b = "the astronaut orbits the red planet at midnight";
    for seed in 0..10 {
        let config = CompareConfig {
            seed,
            ..CompareConfig::default()
        };
        let r = compare_on_shared_range(&[(a, paraphrase), (a, b)], &backend, &config).unwrap();
        assert!(
            r[0].auc < r[1].auc,
            "seed {seed}: {} vs {}",
            r[0].auc,
            r[1].auc
        );
    }
}

#[test]
fn scenes_choice_is_solved() {
    let records = load_choices(common::fixture("scenes_choice.tsv")).unwrap();
    let report = run_choice_bench(
        &records.records,
        &scenes(),
        &CompareConfig::default(),
        ScoreKind::Auc,
    )
    .unwrap();
    assert_eq!(report.accuracy, 1.0);
}

#[test]
fn toy_similarity_bench_tracks_human_scores() {
    let records = load_pairs(common::data_dir().join("pairs.tsv")).unwrap();
    let report = run_similarity_bench(
        &records.records,
        &toy(),
        &CompareConfig::default(),
        ScoreKind::Auc,
    )
    .unwrap();
    assert_eq!(report.failed, 0);
    assert!(report.rho_x100 >= 80.0, "rho x100 {}", report.rho_x100);
}
