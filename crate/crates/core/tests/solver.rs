mod common;

use common::solver::{abstract_solvable, exact_min_steps};
use mirlab::env::{generate_map, Cell, EnvConfig, MapKind, ObjectKind};

#[test]
fn abstraction_agrees_with_exact_search_on_small_maps() {
    for seed in 0..6 {
        let state = generate_map(&EnvConfig::new(MapKind::DoorKeyB, 6, seed)).unwrap();
        let steps = exact_min_steps(&state);
        assert!(abstract_solvable(&state), "seed {seed}");
        assert!(
            steps.is_some_and(|s| s <= state.config.max_steps),
            "seed {seed}: {steps:?}"
        );
    }
}

#[test]
fn map_without_its_key_is_unsolvable() {
    let mut state = generate_map(&EnvConfig::new(MapKind::DoorKeyB, 6, 3)).unwrap();
    let key = state
        .cells
        .iter()
        .position(|c| c.kind == ObjectKind::Key)
        .unwrap();
    state.cells[key] = Cell::EMPTY;
    assert!(!abstract_solvable(&state));
    assert_eq!(exact_min_steps(&state), None);
}
