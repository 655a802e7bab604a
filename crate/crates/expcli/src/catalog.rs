//! Builtin scenarios, one or more per worked example. Each is an embedded
//! copy of a file in `scenarios/`, parsed with the same schema as user files.

use std::path::Path;

use serde::Serialize;

use crate::error::{ExpError, Result};
use crate::scenario::Scenario;

const BUILTINS: &[(&str, &str)] = &[
    ("harmonic-decay", include_str!("../scenarios/harmonic-decay.toml")),
    ("pe-bounds", include_str!("../scenarios/pe-bounds.toml")),
    ("pe-loss", include_str!("../scenarios/pe-loss.toml")),
    ("first-order", include_str!("../scenarios/first-order.toml")),
    ("first-order-noise", include_str!("../scenarios/first-order-noise.toml")),
    ("arx5-kappa", include_str!("../scenarios/arx5-kappa.toml")),
    ("fir3-rate", include_str!("../scenarios/fir3-rate.toml")),
    ("fir3-rate-0.999", include_str!("../scenarios/fir3-rate-0.999.toml")),
    ("fir3-rate-0.99", include_str!("../scenarios/fir3-rate-0.99.toml")),
    ("scalar-constant", include_str!("../scenarios/scalar-constant.toml")),
    ("scalar-zero-after", include_str!("../scenarios/scalar-zero-after.toml")),
    ("subspace-sine", include_str!("../scenarios/subspace-sine.toml")),
    (
        "subspace-sine-0.99",
        include_str!("../scenarios/subspace-sine-0.99.toml"),
    ),
    ("arx5-uniform", include_str!("../scenarios/arx5-uniform.toml")),
    ("arx5-information", include_str!("../scenarios/arx5-information.toml")),
    ("arx5-vdf", include_str!("../scenarios/arx5-vdf.toml")),
    ("arx5-vdf-theta", include_str!("../scenarios/arx5-vdf-theta.toml")),
    ("arx5-vdf-cost", include_str!("../scenarios/arx5-vdf-cost.toml")),
    (
        "kreisselmeier-subspace",
        include_str!("../scenarios/kreisselmeier-subspace.toml"),
    ),
    ("cao-subspace", include_str!("../scenarios/cao-subspace.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

pub fn builtin(name: &str) -> Option<Scenario> {
    BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| Scenario::from_toml_str(text, n).expect("builtin scenarios parse"))
}

/// A builtin name, or a path to a TOML file.
pub fn resolve(name_or_path: &str) -> Result<Scenario> {
    if let Some(sc) = builtin(name_or_path) {
        return Ok(sc);
    }
    let path = Path::new(name_or_path);
    if path.is_file() {
        return Scenario::from_path(path);
    }
    Err(ExpError::UnknownScenario(name_or_path.to_string()))
}

#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub name: String,
    pub strategy: &'static str,
    pub lambda: f64,
    pub steps: usize,
    pub description: String,
    pub mirrors: String,
}

pub fn catalog() -> Vec<CatalogEntry> {
    names()
        .map(|n| {
            let sc = builtin(n).expect("listed builtin exists");
            CatalogEntry {
                name: sc.name.clone(),
                strategy: sc.estimator.strategy.tag(),
                lambda: sc.estimator.strategy.lambda(),
                steps: sc.steps,
                description: sc.description,
                mirrors: sc.mirrors,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_parses_and_is_named_consistently() {
        for n in names() {
            let sc = builtin(n).unwrap();
            assert_eq!(sc.name, n);
            assert!(!sc.mirrors.is_empty(), "{n} has no example reference");
        }
    }

    #[test]
    fn catalog_covers_every_example() {
        let cat = catalog();
        assert!(cat.len() >= 12);
        let examples: std::collections::BTreeSet<_> = cat
            .iter()
            .map(|e| e.mirrors.split(" (").next().unwrap().to_string())
            .collect();
        assert!(examples.len() >= 12, "{examples:?}");
        assert!(cat
            .iter()
            .all(|e| e.lambda > 0.0 && e.lambda <= 1.0 && !e.strategy.is_empty()));
    }

    #[test]
    fn unknown_names_are_reported() {
        assert!(matches!(resolve("no-such-scenario"), Err(ExpError::UnknownScenario(_))));
    }
}
