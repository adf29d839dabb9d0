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
//! Rigid-body dynamics of the planar arm with a point mass at the end of
//! every link.

use crate::error::{check_dim, Error, Result};
use crate::world::ArmModel;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

impl DynamicsState {
    pub fn new(q: Vec<f64>, qdot: Vec<f64>) -> Self {
        DynamicsState { q, qdot }
    }

    pub fn at_rest(q: Vec<f64>) -> Self {
        let n = q.len();
        DynamicsState { q, qdot: vec![0.0; n] }
    }
}

/// Recursive Newton-Euler. `gravity` is taken from the arm unless overridden.
fn rne(arm: &ArmModel, q: &[f64], qdot: &[f64], qddot: &[f64], gravity: f64) -> Vec<f64> {
    let n = q.len();
    // forward pass: absolute angle, rates, and mass accelerations
    let mut acc = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    let (mut a, mut w, mut al) = (0.0, 0.0, 0.0);
    // a fictitious upward acceleration of the base stands in for gravity
    let (mut ax, mut ay) = (0.0, gravity);
    for i in 0..n {
        a += q[i];
        w += qdot[i];
        al += qddot[i];
        let (s, c) = a.sin_cos();
        let (rx, ry) = (arm.link_lengths[i] * c, arm.link_lengths[i] * s);
        ax += -al * ry - w * w * rx;
        ay += al * rx - w * w * ry;
        acc.push((ax, ay));
        r.push((rx, ry));
    }
    // backward pass: distal force and moment about each joint
    let mut tau = vec![0.0; n];
    let (mut fx, mut fy, mut moment) = (0.0, 0.0, 0.0);
    for i in (0..n).rev() {
        fx += arm.link_masses[i] * acc[i].0;
        fy += arm.link_masses[i] * acc[i].1;
        moment += r[i].0 * fy - r[i].1 * fx;
        tau[i] = moment;
    }
    tau
}

pub fn inverse_dynamics(arm: &ArmModel, s: &DynamicsState, qddot: &[f64]) -> Result<Vec<f64>> {
    let n = arm.n_joints();
    check_dim(n, s.q.len())?;
    check_dim(n, s.qdot.len())?;
    check_dim(n, qddot.len())?;
    Ok(rne(arm, &s.q, &s.qdot, qddot, arm.gravity))
}

/// Joint-space inertia matrix, one inverse-dynamics call per column.
pub fn mass_matrix(arm: &ArmModel, q: &[f64]) -> DMatrix<f64> {
    let n = q.len();
    let zero = vec![0.0; n];
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = rne(arm, q, &zero, &e, 0.0);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    m
}

pub fn forward_dynamics(arm: &ArmModel, s: &DynamicsState, tau: &[f64]) -> Result<Vec<f64>> {
    let n = arm.n_joints();
    check_dim(n, s.q.len())?;
    check_dim(n, s.qdot.len())?;
    check_dim(n, tau.len())?;
    fd(arm, &s.q, &s.qdot, tau)
}

fn fd(arm: &ArmModel, q: &[f64], qdot: &[f64], tau: &[f64]) -> Result<Vec<f64>> {
    let n = q.len();
    let bias = rne(arm, q, qdot, &vec![0.0; n], arm.gravity);
    let m = mass_matrix(arm, q);
    let rhs = DVector::from_iterator(n, tau.iter().zip(&bias).map(|(t, b)| t - b));
    let chol = m.cholesky().ok_or(Error::Singular)?;
    let d = chol.l().diagonal();
    let (lo, hi) = d.iter().fold((f64::MAX, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if lo * lo < 1e-12 * hi * hi {
        return Err(Error::Singular);
    }
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// One classical Runge-Kutta step under constant torque.
pub fn integrate_rk4(arm: &ArmModel, s: &DynamicsState, tau: &[f64], dt: f64) -> Result<DynamicsState> {
    let n = arm.n_joints();
    check_dim(n, s.q.len())?;
    check_dim(n, s.qdot.len())?;
    check_dim(n, tau.len())?;
    let f = |q: &[f64], v: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> { Ok((v.to_vec(), fd(arm, q, v, tau)?)) };
    let axpy = |x: &[f64], a: f64, y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(x, y)| x + a * y).collect() };
    let (k1q, k1v) = f(&s.q, &s.qdot)?;
    let (k2q, k2v) = f(&axpy(&s.q, dt / 2.0, &k1q), &axpy(&s.qdot, dt / 2.0, &k1v))?;
    let (k3q, k3v) = f(&axpy(&s.q, dt / 2.0, &k2q), &axpy(&s.qdot, dt / 2.0, &k2v))?;
    let (k4q, k4v) = f(&axpy(&s.q, dt, &k3q), &axpy(&s.qdot, dt, &k3v))?;
    let comb = |x: &[f64], k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    };
    Ok(DynamicsState {
        q: comb(&s.q, &k1q, &k2q, &k3q, &k4q),
        qdot: comb(&s.qdot, &k1v, &k2v, &k3v, &k4v),
    })
}

pub fn kinetic_energy(arm: &ArmModel, s: &DynamicsState) -> f64 {
    let m = mass_matrix(arm, &s.q);
    let v = DVector::from_column_slice(&s.qdot);
    0.5 * (v.transpose() * m * &v)[(0, 0)]
}

/// One sample of a latch trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicSample {
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub qddot: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CubicLatch {
    pub samples: Vec<CubicSample>,
    pub feasible: bool,
}

/// Per-joint cubic coefficients matching position and velocity at both ends.
fn cubic_coeffs(q0: f64, v0: f64, q1: f64, v1: f64, d: f64) -> [f64; 4] {
    let dq = q1 - q0;
    [
        q0,
        v0,
        (3.0 * dq - (2.0 * v0 + v1) * d) / (d * d),
        (-2.0 * dq + (v0 + v1) * d) / (d * d * d),
    ]
}

/// Samples a cubic transition at `dt_check` (always including both
/// endpoints) and checks joint velocity and torque limits at every sample.
pub fn cubic_latch_segment(
    arm: &ArmModel,
    from: &DynamicsState,
    to: &DynamicsState,
    duration: f64,
    dt_check: f64,
) -> CubicLatch {
    let n = arm.n_joints();
    let c: Vec<[f64; 4]> = (0..n)
        .map(|i| cubic_coeffs(from.q[i], from.qdot[i], to.q[i], to.qdot[i], duration))
        .collect();
    let steps = (duration / dt_check - 1e-9).ceil().max(1.0) as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut feasible = true;
    for k in 0..=steps {
        let t = if k == steps { duration } else { k as f64 * dt_check };
        let mut s = CubicSample {
            t,
            q: Vec::with_capacity(n),
            qdot: Vec::with_capacity(n),
            qddot: Vec::with_capacity(n),
        };
        for [a0, a1, a2, a3] in &c {
            s.q.push(a0 + t * (a1 + t * (a2 + t * a3)));
            s.qdot.push(a1 + t * (2.0 * a2 + 3.0 * a3 * t));
            s.qddot.push(2.0 * a2 + 6.0 * a3 * t);
        }
        // endpoints are reproduced exactly rather than through round-off
        if k == 0 {
            s.q.clone_from(&from.q);
            s.qdot.clone_from(&from.qdot);
        } else if k == steps {
            s.q.clone_from(&to.q);
            s.qdot.clone_from(&to.qdot);
        }
        if feasible {
            let tau = rne(arm, &s.q, &s.qdot, &s.qddot, arm.gravity);
            feasible = s.qdot.iter().zip(&arm.velocity_limits).all(|(v, l)| v.abs() <= *l)
                && tau.iter().zip(&arm.torque_limits).all(|(t, l)| t.abs() <= *l);
        }
        samples.push(s);
    }
    CubicLatch { samples, feasible }
}
