//! Audio-rate integration of the lattice with a two-step position scheme.

use alloc::vec::Vec;

use thiserror::Error;

use super::excitation::EventSchedule;
use crate::geom::Vec2;
use crate::lattice::LatticeModel;
use crate::math;

/// Largest admissible `omega * dt` for any single spring or anchor.
pub const STABILITY_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalSpring {
    pub a: usize,
    pub b: usize,
    pub stiffness: f64,
    pub damping: f64,
    pub rest_length: f64,
}

/// Lattice in physical units, ready for integration.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalLattice {
    pub mass: Vec<f64>,
    pub anchor_stiffness: Vec<f64>,
    pub anchor_damping: Vec<f64>,
    pub anchors: Vec<Vec2>,
    pub springs: Vec<PhysicalSpring>,
    /// How many stiffness values were reduced by the stability clamp.
    pub clamped: usize,
}

impl PhysicalLattice {
    /// Converts a lattice model to physical units and enforces the stability
    /// clamp `sqrt(2 k_ab / min(m_a, m_b)) * dt <= 0.5` (and the analogous
    /// bound for anchor springs).
    pub fn from_model(model: &LatticeModel, dt: f64) -> Self {
        let cal = model.calibration;
        let ks = cal.stiffness_scale();
        let mut clamped = 0;
        let limit = STABILITY_LIMIT * STABILITY_LIMIT / (dt * dt);
        let mass: Vec<f64> = model.nodes.iter().map(|n| n.mass).collect();
        let anchor_stiffness = model
            .nodes
            .iter()
            .map(|n| {
                let k = cal.anchor_coupling * n.stiffness * ks;
                let kmax = limit * n.mass;
                if k > kmax {
                    clamped += 1;
                    kmax
                } else {
                    k
                }
            })
            .collect();
        let anchor_damping = model.nodes.iter().map(|n| n.damping * cal.damping_scale).collect();
        let springs = model
            .springs
            .iter()
            .map(|s| {
                let m = mass[s.a].min(mass[s.b]);
                let kmax = 0.5 * limit * m;
                let mut k = s.stiffness * ks;
                if k > kmax {
                    clamped += 1;
                    k = kmax;
                }
                PhysicalSpring {
                    a: s.a,
                    b: s.b,
                    stiffness: k,
                    damping: s.damping * cal.damping_scale,
                    rest_length: s.rest_length,
                }
            })
            .collect();
        Self {
            mass,
            anchor_stiffness,
            anchor_damping,
            anchors: model.anchors(),
            springs,
            clamped,
        }
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Largest `omega * dt` over springs and anchors.
    pub fn max_omega_dt(&self, dt: f64) -> f64 {
        let s = self
            .springs
            .iter()
            .map(|s| math::sqrt(2.0 * s.stiffness / self.mass[s.a].min(self.mass[s.b])))
            .fold(0.0, f64::max);
        let a = self
            .anchor_stiffness
            .iter()
            .zip(&self.mass)
            .map(|(k, m)| math::sqrt(k / m))
            .fold(0.0, f64::max);
        s.max(a) * dt
    }

    /// Replaces the anchors and recomputes spring rest lengths from them.
    pub fn set_anchors(&mut self, anchors: &[Vec2]) {
        self.anchors.clear();
        self.anchors.extend_from_slice(anchors);
        for s in &mut self.springs {
            s.rest_length = (self.anchors[s.b] - self.anchors[s.a]).norm();
        }
    }
}

/// Current and previous node positions.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    pub pos: Vec<Vec2>,
    pub prev: Vec<Vec2>,
    pub force: Vec<Vec2>,
    pub steps: u64,
}

impl LatticeState {
    /// All nodes at rest on their anchors.
    pub fn at_rest(lattice: &PhysicalLattice) -> Self {
        Self {
            pos: lattice.anchors.clone(),
            prev: lattice.anchors.clone(),
            force: alloc::vec![Vec2::ZERO; lattice.len()],
            steps: 0,
        }
    }

    /// Carries node displacements over to a new set of anchors, so that
    /// anchor motion itself injects no energy.
    pub fn follow_anchors(&mut self, old: &[Vec2], new: &[Vec2]) {
        for k in 0..self.pos.len() {
            self.pos[k] = new[k] + (self.pos[k] - old[k]);
            self.prev[k] = new[k] + (self.prev[k] - old[k]);
        }
    }

    /// Largest distance of any node from its anchor.
    pub fn max_displacement(&self, lattice: &PhysicalLattice) -> f64 {
        self.pos
            .iter()
            .zip(&lattice.anchors)
            .map(|(p, a)| (*p - *a).norm())
            .fold(0.0, f64::max)
    }
}

/// Receives per-sample node velocities from [`step_block`].
pub trait VelocitySink {
    fn push(&mut self, sample: usize, velocities: &[Vec2]);
}

/// Discards velocities.
pub struct NullSink;

impl VelocitySink for NullSink {
    fn push(&mut self, _sample: usize, _velocities: &[Vec2]) {}
}

/// Stores every sample's velocities (tests and analysis).
#[derive(Debug, Default, Clone)]
pub struct VelocityRecorder {
    pub frames: Vec<Vec<Vec2>>,
}

impl VelocitySink for VelocityRecorder {
    fn push(&mut self, _sample: usize, velocities: &[Vec2]) {
        self.frames.push(velocities.to_vec());
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsFault {
    #[error("non-finite state at node {node} (sample {sample} of block); block rolled back")]
    NonFiniteNode { node: usize, sample: usize },
    #[error("non-finite force in spring {spring} ({a}-{b}); block rolled back")]
    NonFiniteSpring { spring: usize, a: usize, b: usize },
}

/// Scratch buffers reused across blocks.
#[derive(Debug, Default, Clone)]
pub struct StepScratch {
    next: Vec<Vec2>,
    vel: Vec<Vec2>,
    backup_pos: Vec<Vec2>,
    backup_prev: Vec<Vec2>,
}

/// Advances the lattice by `n` samples.
///
/// Per sample: spring forces `-k (|d| - L0) u - c (dv . u) u`, grounded anchor
/// springs with damping on absolute velocity, plus scheduled event forces;
/// then `x+ = 2x - x- + F dt^2 / m`. The sink receives central-difference
/// velocities `(x+ - x-) / 2dt`. Velocities inside force terms use the
/// backward difference `(x - x-) / dt`.
///
/// On a non-finite value the state is restored to the block start.
#[allow(clippy::too_many_arguments)]
pub fn step_block(
    state: &mut LatticeState,
    lattice: &PhysicalLattice,
    events: &mut EventSchedule,
    start_sample: u64,
    n: usize,
    dt: f64,
    scratch: &mut StepScratch,
    sink: &mut dyn VelocitySink,
) -> Result<(), DynamicsFault> {
    let nodes = lattice.len();
    scratch.next.resize(nodes, Vec2::ZERO);
    scratch.vel.resize(nodes, Vec2::ZERO);
    scratch.backup_pos.clone_from(&state.pos);
    scratch.backup_prev.clone_from(&state.prev);
    let inv_dt = 1.0 / dt;
    let dt2 = dt * dt;

    for s in 0..n {
        let f = &mut state.force;
        for k in 0..nodes {
            let x = state.pos[k];
            let v = (x - state.prev[k]) * inv_dt;
            f[k] = (x - lattice.anchors[k]) * (-lattice.anchor_stiffness[k]) - v * lattice.anchor_damping[k];
        }
        for (idx, sp) in lattice.springs.iter().enumerate() {
            let (xa, xb) = (state.pos[sp.a], state.pos[sp.b]);
            let d = xb - xa;
            let len = d.norm();
            if len <= 1e-12 {
                continue;
            }
            let u = d * (1.0 / len);
            let dv = ((xb - state.prev[sp.b]) - (xa - state.prev[sp.a])) * inv_dt;
            let mag = sp.stiffness * (len - sp.rest_length) + sp.damping * dv.dot(u);
            if !mag.is_finite() {
                state.pos.clone_from(&scratch.backup_pos);
                state.prev.clone_from(&scratch.backup_prev);
                return Err(DynamicsFault::NonFiniteSpring {
                    spring: idx,
                    a: sp.a,
                    b: sp.b,
                });
            }
            let fu = u * mag;
            f[sp.a] += fu;
            f[sp.b] -= fu;
        }
        events.apply(start_sample + s as u64, f);
        for k in 0..nodes {
            let x = state.pos[k];
            let nx = x * 2.0 - state.prev[k] + f[k] * (dt2 / lattice.mass[k]);
            if !nx.is_finite() {
                state.pos.clone_from(&scratch.backup_pos);
                state.prev.clone_from(&scratch.backup_prev);
                return Err(DynamicsFault::NonFiniteNode { node: k, sample: s });
            }
            scratch.vel[k] = (nx - state.prev[k]) * (0.5 * inv_dt);
            scratch.next[k] = nx;
        }
        core::mem::swap(&mut state.prev, &mut state.pos);
        core::mem::swap(&mut state.pos, &mut scratch.next);
        state.steps += 1;
        sink.push(s, &scratch.vel);
    }
    Ok(())
}

/// Discrete mechanical energy of the two-step scheme.
///
/// Kinetic energy uses the half-step velocity `(x - x-) / dt`; elastic terms
/// use the product of extensions at the two time levels, which is the
/// invariant of the undamped linear scheme.
pub fn mechanical_energy(state: &LatticeState, lattice: &PhysicalLattice, dt: f64) -> f64 {
    let mut e = 0.0;
    for k in 0..lattice.len() {
        let v = (state.pos[k] - state.prev[k]) * (1.0 / dt);
        e += 0.5 * lattice.mass[k] * v.dot(v);
        let a = lattice.anchors[k];
        e += 0.5 * lattice.anchor_stiffness[k] * (state.pos[k] - a).dot(state.prev[k] - a);
    }
    for s in &lattice.springs {
        let now = (state.pos[s.b] - state.pos[s.a]).norm() - s.rest_length;
        let before = (state.prev[s.b] - state.prev[s.a]).norm() - s.rest_length;
        e += 0.5 * s.stiffness * now * before;
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn single(k: f64, d: f64) -> PhysicalLattice {
        PhysicalLattice {
            mass: vec![1.0],
            anchor_stiffness: vec![k],
            anchor_damping: vec![d],
            anchors: vec![Vec2::new(10.0, 10.0)],
            springs: vec![],
            clamped: 0,
        }
    }

    #[test]
    fn rest_is_exact_fixed_point() {
        let lat = single(1e6, 10.0);
        let mut st = LatticeState::at_rest(&lat);
        let mut rec = VelocityRecorder::default();
        let mut ev = EventSchedule::default();
        step_block(
            &mut st,
            &lat,
            &mut ev,
            0,
            512,
            1.0 / 44100.0,
            &mut StepScratch::default(),
            &mut rec,
        )
        .unwrap();
        assert_eq!(st.pos, lat.anchors);
        assert!(rec.frames.iter().flatten().all(|v| *v == Vec2::ZERO));
    }

    #[test]
    fn non_finite_rolls_back() {
        let lat = single(1e6, 10.0);
        let mut st = LatticeState::at_rest(&lat);
        st.pos[0].x = 11.0;
        st.prev[0].x = 11.0;
        let snapshot = st.clone();
        st.pos[0].y = f64::NAN;
        let mut ev = EventSchedule::default();
        let err = step_block(
            &mut st,
            &lat,
            &mut ev,
            0,
            16,
            1.0 / 44100.0,
            &mut StepScratch::default(),
            &mut NullSink,
        );
        assert!(matches!(err, Err(DynamicsFault::NonFiniteNode { node: 0, sample: 0 })));
        assert_eq!(st.prev, snapshot.prev);
    }

    #[test]
    fn follow_anchors_preserves_displacement() {
        let lat = single(1e6, 10.0);
        let mut st = LatticeState::at_rest(&lat);
        st.pos[0] = Vec2::new(11.0, 10.0);
        st.follow_anchors(&[Vec2::new(10.0, 10.0)], &[Vec2::new(10.0, 4.0)]);
        assert_eq!(st.pos[0], Vec2::new(11.0, 4.0));
        assert_eq!(st.prev[0], Vec2::new(10.0, 4.0));
    }
}
