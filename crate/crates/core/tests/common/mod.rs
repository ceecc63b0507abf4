//! Helpers shared by the integration suites.
//!
//! Each test binary compiles its own copy, so not every helper is used by
//! every suite.
#![allow(dead_code)]

use mipform::levels::LevelLayout;
use mipform::model::{builtin, BlockGenerator};
use mipform::truncation::AugmentationSpec;

/// Every catalog model with the parameter sets the suites run against.
pub fn catalog() -> Vec<BlockGenerator> {
    vec![
        builtin("mm1", &[("lambda", 1.0), ("mu", 2.0)]).unwrap(),
        builtin("level_dep_qbd", &[("lambda", 1.0), ("mu", 1.0), ("c", 3.0)]).unwrap(),
        builtin("mg1_type", &[("lambda", 1.0), ("mu", 3.0), ("r", 0.5)]).unwrap(),
        builtin("gim1_type", &[("lambda", 1.0), ("mu", 2.0), ("r", 0.5)]).unwrap(),
        builtin("catastrophe_qbd", &[("lambda", 4.0), ("mu", 0.7), ("gamma", 0.25)]).unwrap(),
    ]
}

pub fn mm1() -> BlockGenerator {
    builtin("mm1", &[("lambda", 1.0), ("mu", 2.0)]).unwrap()
}

/// Analytic stationary probabilities of mm1(1,2): (1/2)^(i+1).
pub fn mm1_geometric(states: usize) -> Vec<f64> {
    (0..states).map(|i| 0.5_f64.powi(i as i32 + 1)).collect()
}

/// Full-dimension augmentation vector matching a stage solver's per-stage
/// augmentation: all mass on level s, distributed by the spec.
pub fn stage_alpha(model: &BlockGenerator, s: usize, spec: &AugmentationSpec) -> Vec<f64> {
    let layout: LevelLayout = model.layout_through(s);
    let within = spec.resolve_within_level(model.level_size(s)).unwrap();
    let mut alpha = vec![0.0; layout.dim()];
    for (offset, i) in layout.last_level_range().enumerate() {
        alpha[i] = within[offset];
    }
    alpha
}

/// Largest level index whose truncation stays within `max_dim` states.
pub fn deepest_level_within(model: &BlockGenerator, max_dim: usize) -> usize {
    let mut s = 0;
    while model.dim_through(s + 1) <= max_dim {
        s += 1;
    }
    s
}

/// Deterministic splitmix64 stream for reproducible random tests.
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(seed)
    }

    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z = z ^ (z >> 31);
        (z >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn next_usize(&mut self, bound: usize) -> usize {
        (self.next_f64() * bound as f64) as usize % bound
    }
}
