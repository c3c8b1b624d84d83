#![allow(dead_code)]

use pebo::config::builtin_source;
use pebo::mappings::MappingRegistry;
use pebo::plant::PlantRegistry;
use pebo::sim::Scenario;
use pebo::ScenarioConfig;

pub fn config(name: &str) -> ScenarioConfig {
    ScenarioConfig::parse(builtin_source(name).expect("built-in scenario")).unwrap()
}

pub fn resolve(cfg: &ScenarioConfig) -> Scenario {
    cfg.resolve(&PlantRegistry::default(), &MappingRegistry::default())
        .unwrap()
}

pub fn scenario(name: &str) -> Scenario {
    resolve(&config(name))
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(f64::abs).fold(0.0, f64::max)
}
