// SPDX-License-Identifier: Apache-2.0

//! Scheduling policies. A policy hands out one stateful picker per run.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::registry::Registry;

pub trait Picker {
    /// Chooses one of `enabled`, which is non-empty and ascending.
    fn pick(&mut self, enabled: &[usize]) -> usize;
}

pub trait SchedulePolicy: Send + Sync {
    fn name(&self) -> &'static str;
    fn picker(&self, seed: u64) -> Box<dyn Picker>;
}

/// Cycles through threads in id order, starting after the last pick.
pub struct RoundRobin;

struct RoundRobinPicker {
    last: Option<usize>,
}

impl Picker for RoundRobinPicker {
    fn pick(&mut self, enabled: &[usize]) -> usize {
        let t = match self.last {
            Some(l) => enabled.iter().copied().find(|&t| t > l).unwrap_or(enabled[0]),
            None => enabled[0],
        };
        self.last = Some(t);
        t
    }
}

impl SchedulePolicy for RoundRobin {
    fn name(&self) -> &'static str {
        "round-robin"
    }

    fn picker(&self, _seed: u64) -> Box<dyn Picker> {
        Box::new(RoundRobinPicker { last: None })
    }
}

/// Uniform choice among enabled threads from a seeded ChaCha stream.
pub struct SeededRandom;

struct RandomPicker(ChaCha8Rng);

impl Picker for RandomPicker {
    fn pick(&mut self, enabled: &[usize]) -> usize {
        enabled[self.0.gen_range(0..enabled.len())]
    }
}

impl SchedulePolicy for SeededRandom {
    fn name(&self) -> &'static str {
        "seeded-random"
    }

    fn picker(&self, seed: u64) -> Box<dyn Picker> {
        Box::new(RandomPicker(ChaCha8Rng::seed_from_u64(seed)))
    }
}

pub type PolicyRegistry = Registry<dyn SchedulePolicy>;

pub fn builtin_policies() -> PolicyRegistry {
    let mut r = PolicyRegistry::default();
    for p in [Arc::new(RoundRobin) as Arc<dyn SchedulePolicy>, Arc::new(SeededRandom)] {
        r.register(p.name(), p);
    }
    r
}
