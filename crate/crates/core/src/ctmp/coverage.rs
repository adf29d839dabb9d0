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
use crate::statespace::LatticeState;
use crate::world::GoalKey;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverMode {
    /// Plan from the state with the path as experience.
    Experience,
    /// Latch from the state onto the home path of the goal.
    Latch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cover {
    pub path: u32,
    pub mode: CoverMode,
}

/// Map from (state, goal) to the path that covers the goal from the state.
/// States are interned; the first entry written for a pair is kept.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoverageMap {
    states: Vec<LatticeState>,
    ids: HashMap<LatticeState, u32>,
    entries: HashMap<(u32, GoalKey), Cover>,
}

impl CoverageMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, s: &LatticeState) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.states.len() as u32;
        self.states.push(s.clone());
        self.ids.insert(s.clone(), id);
        id
    }

    pub fn state_id(&self, s: &LatticeState) -> Option<u32> {
        self.ids.get(s).copied()
    }

    pub fn state(&self, id: u32) -> &LatticeState {
        &self.states[id as usize]
    }

    pub fn states(&self) -> &[LatticeState] {
        &self.states
    }

    pub fn get(&self, s: &LatticeState, g: GoalKey) -> Option<Cover> {
        let id = self.state_id(s)?;
        self.entries.get(&(id, g)).copied()
    }

    /// Returns false (and keeps the old entry) if the pair is already mapped.
    pub fn insert(&mut self, s: &LatticeState, g: GoalKey, cover: Cover) -> bool {
        let id = self.intern(s);
        match self.entries.entry((id, g)) {
            std::collections::hash_map::Entry::Occupied(_) => false,
            std::collections::hash_map::Entry::Vacant(v) => {
                v.insert(cover);
                true
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All entries sorted by state id, then goal.
    pub fn entries(&self) -> Vec<(u32, GoalKey, Cover)> {
        let mut v: Vec<_> = self.entries.iter().map(|(&(s, g), &c)| (s, g, c)).collect();
        v.sort_by_key(|e| (e.0, e.1));
        v
    }

    pub(crate) fn from_parts(states: Vec<LatticeState>, entries: Vec<(u32, GoalKey, Cover)>) -> Self {
        let ids = states.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        CoverageMap {
            states,
            ids,
            entries: entries.into_iter().map(|(s, g, c)| ((s, g), c)).collect(),
        }
    }
}
