/*
Copyright 2026 The ctmp Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! Constant-time motion planning for picking objects off a conveyor.
//!
//! A preprocessing stage stores a small set of root paths and a coverage map
//! from (state, goal) pairs to paths; at query time a plan for any covered
//! goal is retrieved in a bounded number of lookups.

pub mod config;
pub mod ctmp;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod oracle;
pub mod search;
pub mod sim;
pub mod statespace;
pub mod world;

pub use config::Scenario;
pub use error::{Error, Result};
pub use statespace::{LatticeState, Plan, Space};
pub use world::{GoalKey, ObjectPose, World};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/worlds.md")]
    mod worlds {}
    #[doc = include_str!("../../../book/src/planning.md")]
    mod planning {}
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    mod preprocessing {}
    #[doc = include_str!("../../../book/src/queries.md")]
    mod queries {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
