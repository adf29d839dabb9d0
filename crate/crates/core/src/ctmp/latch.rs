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
use super::RootPath;
use crate::config::LatchMode;
use crate::statespace::{LatticeState, Space};

/// Index on `path` of the state `δ_t` after `s`, if the transition from `s`
/// to it is feasible. The target must lie within the part of the path that
/// experience plans reuse verbatim.
pub fn can_latch(space: &Space, s: &LatticeState, path: &RootPath, mode: LatchMode) -> Option<usize> {
    let t = s.t + space.delta_t_ticks;
    if t > space.reuse_ticks {
        return None;
    }
    let j = path.plan.index_at(t)?;
    let ctx = space.context(path.goal());
    space.latch_valid(s, &path.plan.states[j], mode, &ctx).then_some(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmp::tests::tiny;

    #[test]
    fn latching_onto_own_next_state() {
        let (space, db) = tiny();
        let p = &db.paths[db.home_paths[0] as usize];
        // a state on p latches onto p itself δ_t later: the move is the path's own
        let i = p.plan.index_at(space.delta_t_ticks).unwrap();
        let j = can_latch(space, &p.plan.states[0], p, LatchMode::Linear);
        assert_eq!(j, Some(i));
    }

    #[test]
    fn past_reuse_horizon_refused() {
        let (space, db) = tiny();
        let p = &db.paths[db.home_paths[0] as usize];
        let mut s = p.plan.states[0].clone();
        s.t = space.reuse_ticks;
        assert_eq!(can_latch(space, &s, p, LatchMode::Linear), None);
    }

    #[test]
    fn too_far_to_reach_refused() {
        let (space, db) = tiny();
        let p = &db.paths[db.home_paths[0] as usize];
        let j = p.plan.index_at(space.delta_t_ticks).unwrap();
        let mut s = p.plan.states[0].clone();
        // one joint displaced by more than the nominal speed covers in δ_t
        let reach = space.world.arm.nominal_joint_speed * space.delta_t_ticks as f64 * space.tick;
        s.q[2] = p.plan.states[j].q[2] + (1.5 * reach / space.q_res).ceil() as i32;
        assert_eq!(can_latch(space, &s, p, LatchMode::Linear), None);
    }
}
