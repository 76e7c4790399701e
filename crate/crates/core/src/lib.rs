// SPDX-License-Identifier: Apache-2.0

//! Coverage-guided generation of concurrent test harnesses for MTC
//! programs.

pub mod analysis;
pub mod coverage;
pub mod harnessgen;
pub mod minilang;
pub mod orchestrator;
pub mod pathfinder;
pub mod reasoner;
pub mod registry;
pub mod runtime;
