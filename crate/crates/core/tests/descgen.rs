mod common;

use ccdae_core::backends::TableBackend;
use ccdae_core::descgen::{
    best_single_description_curve, describe_capacity_grid, generate_pair_atoms, score_descriptions,
    AtomSource,
};
use ccdae_core::{CompareConfig, LossMode};

const DOG: &str = "a dog runs on the beach";
const CAT: &str = "a cat sleeps on a sofa";

fn scenes() -> TableBackend {
    TableBackend::load(common::fixture("scenes.json")).unwrap()
}

fn config() -> CompareConfig {
    CompareConfig {
        loss_mode: LossMode::EncoderOnly,
        ..CompareConfig::default()
    }
}

#[test]
fn pair_atoms_come_from_both_items() {
    let atoms = generate_pair_atoms(&scenes(), DOG, CAT, 30, None, &config()).unwrap();
    let texts: Vec<&str> = atoms.iter().map(|a| a.text.as_str()).collect();
    assert!(
        texts.contains(&"dog") && texts.contains(&"cat"),
        "{texts:?}"
    );
    let mut sorted = texts.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), texts.len(), "atoms are unique");
    assert!(atoms.iter().any(|a| a.source == AtomSource::Sample1));
}

#[test]
fn best_description_curve_is_optimal_and_monotone() {
    let backend = scenes();
    let texts: Vec<String> = backend.fixture().conditional[DOG].keys().cloned().collect();
    let entries = score_descriptions(&texts, &backend, DOG, CAT, &config()).unwrap();
    let grid = describe_capacity_grid(&entries, 21);
    let rows = best_single_description_curve(&entries, &grid);
    assert!(
        rows[0].best_x1.is_none(),
        "no description fits in zero nats"
    );
    let mut previous = f64::INFINITY;
    for row in &rows {
        let Some((_, loss)) = &row.best_x1 else {
            continue;
        };
        let feasible = entries.iter().filter(|e| e.code_length <= row.capacity);
        assert!(feasible.map(|e| e.loss[0]).all(|l| *loss <= l));
        assert!(*loss <= previous);
        previous = *loss;
    }
    let last = rows.last().unwrap();
    let (dog_best, _) = last.best_x1.clone().unwrap();
    let (cat_best, _) = last.best_x2.clone().unwrap();
    assert_ne!(dog_best, cat_best);
}
