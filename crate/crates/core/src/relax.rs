//! Quasi-static relaxation of a truss network while its anchors are pulled
//! apart.
//!
//! Anchor `a` is held fixed and anchor `b` is moved radially away from it in
//! small displacement-controlled steps. After each step the free nodes are
//! relaxed to force equilibrium by damped explicit dynamics. Once the anchor
//! separation exceeds the shortest route through the network, the elements
//! of that route are the ones that stretch; the run stops when the largest
//! strain passes a threshold.
//!
//! There is no gravity and no contact between nodes or elements.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, Vec3};
use crate::oracle;
use crate::truss::TrussNetwork;

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("relaxation did not converge: residual {residual:e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("non-finite node position during relaxation")]
    NumericalBlowup,
    #[error("anchors {0} and {1} are not connected by any element path")]
    AnchorsDisconnected(usize, usize),
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
}

/// Constitutive law of the elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementLaw {
    /// Force `stiffness * max(strain, 0)`: elements go slack under compression.
    TensionOnly,
    /// Force `stiffness * strain` in tension and compression.
    Linear,
}

/// Every field is explicit; use [`SolverParams::for_network`] for defaults
/// derived from the network's shortest element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Axial force per unit strain.
    pub stiffness: f64,
    /// Mass of the stiffest node; see [`nodal_masses`].
    pub mass: f64,
    /// Velocity decay rate: each step scales velocities by `exp(-damping * dt)`.
    pub damping: f64,
    pub dt: f64,
    /// Equilibrium is declared once the largest net force on a free node
    /// falls below this.
    pub residual_tol: f64,
    /// Iteration budget of one relaxation.
    pub max_iters: usize,
    /// Anchor `b` moves by this fraction of the current separation per phase.
    pub pull_increment: f64,
    /// Element strain that declares the chain taut. Keep it small: once the
    /// anchors overshoot the shortest distance, near-shortest routes share
    /// the load and can leave parts of the shortest chain slack.
    pub taut_strain: f64,
    /// Separation cap as a multiple of the initial anchor distance.
    pub max_total_stretch: f64,
    pub max_phases: usize,
    pub law: ElementLaw,
    pub scheme: Scheme,
}

impl SolverParams {
    pub fn for_network(net: &TrussNetwork) -> Self {
        Self::for_material(net, 1.0, 1.0)
    }

    /// Defaults for the given stiffness and mass; the step and damping
    /// follow from them and the shortest element.
    pub fn for_material(net: &TrussNetwork, stiffness: f64, mass: f64) -> Self {
        let min_rest = net.min_rest_length();
        let k_max = stiffness / min_rest;
        Self {
            stiffness,
            mass,
            damping: 1e-4 * 2.0 * (k_max / mass).sqrt(),
            dt: 0.2 * (mass / k_max).sqrt(),
            residual_tol: 1e-8 * stiffness,
            max_iters: 200_000,
            pull_increment: 0.02,
            taut_strain: 1e-3,
            max_total_stretch: 4.0,
            max_phases: 1000,
            law: ElementLaw::TensionOnly,
            scheme: Scheme::Fire,
        }
    }

    pub fn validate(&self, net: &TrussNetwork) -> Result<(), SolveError> {
        let bad = |m: String| Err(SolveError::InvalidParams(m));
        for (name, v) in [
            ("stiffness", self.stiffness),
            ("mass", self.mass),
            ("damping", self.damping),
            ("dt", self.dt),
            ("residual_tol", self.residual_tol),
            ("pull_increment", self.pull_increment),
            ("taut_strain", self.taut_strain),
            ("max_total_stretch", self.max_total_stretch),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.max_iters == 0 || self.max_phases == 0 {
            return bad("iteration budgets must be positive".into());
        }
        if self.taut_strain >= 0.5 {
            return bad(format!(
                "taut_strain must be below 0.5, got {}",
                self.taut_strain
            ));
        }
        if self.pull_increment > 0.2 {
            return bad(format!(
                "pull_increment must be at most 0.2, got {}",
                self.pull_increment
            ));
        }
        // With stiffness-proportional masses the stiffest mode of every node
        // is at most 2 k_max / mass, giving a limit of sqrt(2 mass / k_max).
        let limit = (2.0 * self.mass * net.min_rest_length() / self.stiffness).sqrt();
        let largest = match self.scheme {
            Scheme::Fire => FIRE_DT_GROWTH * self.dt,
            Scheme::Viscous | Scheme::Kinetic => self.dt,
        };
        if largest >= limit {
            return bad(format!(
                "largest step {largest} violates the stability bound {limit}"
            ));
        }
        Ok(())
    }
}

/// How the damped dynamics are driven toward rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Viscous damping only.
    Viscous,
    /// Viscous damping plus a full velocity reset whenever the kinetic
    /// energy drops.
    Kinetic,
    /// FIRE: velocities are steered along the force while the power stays
    /// positive, the step grows up to `FIRE_DT_GROWTH * dt`, and everything
    /// restarts from rest when the power turns negative.
    Fire,
}

const FIRE_N_MIN: usize = 5;
const FIRE_F_INC: f64 = 1.1;
const FIRE_F_DEC: f64 = 0.5;
const FIRE_ALPHA: f64 = 0.1;
const FIRE_F_ALPHA: f64 = 0.99;
const FIRE_DT_GROWTH: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    /// `length / rest_length - 1` per element.
    pub strains: Vec<f64>,
    pub separation: f64,
    pub phase: usize,
    /// Largest net force magnitude on a free node.
    pub residual: f64,
    /// Iterations spent by the most recent relaxation.
    pub iterations: usize,
}

impl SimState {
    pub fn max_strain(&self) -> f64 {
        self.strains
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn kinetic_energy(&self, masses: &[f64]) -> f64 {
        0.5 * self
            .velocities
            .iter()
            .zip(masses)
            .map(|(&v, &m)| m * geom::dot(v, v))
            .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Taut,
    SeparationCap,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub separation: f64,
    pub residual: f64,
    pub max_strain: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub state: SimState,
    /// Largest equilibrium strain each element reached over the run.
    pub peak_strains: Vec<f64>,
    pub termination: Termination,
    pub history: Vec<PhaseRecord>,
    pub initial_separation: f64,
}

impl SolveResult {
    pub fn max_peak_strain(&self) -> f64 {
        self.peak_strains.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Strain of element `k` in `positions`.
pub fn element_strain(net: &TrussNetwork, positions: &[Vec3], k: usize) -> f64 {
    let e = &net.elements[k];
    geom::dist(positions[e.i], positions[e.j]) / e.rest_length - 1.0
}

pub fn compute_strains(net: &TrussNetwork, positions: &[Vec3]) -> Vec<f64> {
    (0..net.elements.len())
        .map(|k| element_strain(net, positions, k))
        .collect()
}

/// Fictitious nodal masses proportional to the summed axial stiffness at
/// each node, scaled so that a node whose stiffness equals that of the
/// shortest element has mass `params.mass`. Every node then shares the same
/// stability limit, so short elements no longer slow the whole network down.
pub fn nodal_masses(net: &TrussNetwork, params: &SolverParams) -> Vec<f64> {
    let mut stiffness = vec![0.0; net.nodes.len()];
    for e in &net.elements {
        stiffness[e.i] += 1.0 / e.rest_length;
        stiffness[e.j] += 1.0 / e.rest_length;
    }
    let min_rest = net.min_rest_length();
    stiffness
        .into_iter()
        .map(|s| params.mass * (s * min_rest).max(1.0))
        .collect()
}

/// Rest configuration: no motion, no strain, no residual.
pub fn init_state(net: &TrussNetwork) -> SimState {
    SimState {
        positions: net.nodes.clone(),
        velocities: vec![[0.0; 3]; net.nodes.len()],
        strains: vec![0.0; net.elements.len()],
        separation: net.anchor_separation(),
        phase: 0,
        residual: 0.0,
        iterations: 0,
    }
}

/// Accumulates element forces into `forces` and writes strains. Returns the
/// residual over free nodes.
fn accumulate_forces(
    net: &TrussNetwork,
    params: &SolverParams,
    positions: &[Vec3],
    forces: &mut [Vec3],
    strains: &mut [f64],
) -> f64 {
    forces.iter_mut().for_each(|f| *f = [0.0; 3]);
    for (k, e) in net.elements.iter().enumerate() {
        let d = geom::sub(positions[e.j], positions[e.i]);
        let len = geom::norm(d);
        let strain = len / e.rest_length - 1.0;
        strains[k] = strain;
        let tension = match params.law {
            ElementLaw::TensionOnly => params.stiffness * strain.max(0.0),
            ElementLaw::Linear => params.stiffness * strain,
        };
        if tension == 0.0 || len == 0.0 {
            continue;
        }
        let f = geom::scale(d, tension / len);
        forces[e.i] = geom::add(forces[e.i], f);
        forces[e.j] = geom::sub(forces[e.j], f);
    }
    for &a in &net.anchors {
        forces[a] = [0.0; 3];
    }
    forces
        .iter()
        .map(|&f| geom::dot(f, f))
        .fold(0.0, f64::max)
        .sqrt()
}

/// Relaxes the free nodes to equilibrium with anchors held in place.
///
/// Each step applies `v <- (v + dt F / m) exp(-damping dt)` then
/// `x <- x + dt v`. Iteration stops once the residual drops below
/// `residual_tol`; a final residual under ten times the tolerance is accepted
/// when the iteration budget runs out.
pub fn relax(
    state: SimState,
    net: &TrussNetwork,
    params: &SolverParams,
) -> Result<SimState, SolveError> {
    let state = relax_bounded(state, net, params)?;
    if state.residual >= 10.0 * params.residual_tol {
        return Err(SolveError::NonConvergence {
            residual: state.residual,
            iterations: state.iterations,
        });
    }
    Ok(state)
}

/// Like [`relax`] but returns whatever state the iteration budget reaches.
pub fn relax_bounded(
    mut state: SimState,
    net: &TrussNetwork,
    params: &SolverParams,
) -> Result<SimState, SolveError> {
    let n = net.nodes.len();
    let mut forces = vec![[0.0; 3]; n];
    // Anchors get zero inverse mass, so they never pick up velocity.
    let mut inv_mass: Vec<f64> = nodal_masses(net, params).iter().map(|m| 1.0 / m).collect();
    for &a in &net.anchors {
        inv_mass[a] = 0.0;
        state.velocities[a] = [0.0; 3];
    }

    let mut iterations = 0;
    let mut residual = accumulate_forces(
        net,
        params,
        &state.positions,
        &mut forces,
        &mut state.strains,
    );
    let mut last_ke = 0.0;
    let mut dt = params.dt;
    let mut alpha = FIRE_ALPHA;
    let mut since_reset = 0;
    loop {
        while residual >= params.residual_tol && iterations < params.max_iters {
            if params.scheme == Scheme::Fire {
                let (mut power, mut vv, mut aa) = (0.0, 0.0, 0.0);
                for v in 0..n {
                    let vel = state.velocities[v];
                    power += geom::dot(forces[v], vel);
                    vv += geom::dot(vel, vel);
                    aa += geom::dot(forces[v], forces[v]) * inv_mass[v] * inv_mass[v];
                }
                if power > 0.0 {
                    let mix = alpha * (vv / aa).sqrt();
                    for v in 0..n {
                        state.velocities[v] = geom::add(
                            geom::scale(state.velocities[v], 1.0 - alpha),
                            geom::scale(forces[v], mix * inv_mass[v]),
                        );
                    }
                    since_reset += 1;
                    if since_reset > FIRE_N_MIN {
                        dt = (dt * FIRE_F_INC).min(FIRE_DT_GROWTH * params.dt);
                        alpha *= FIRE_F_ALPHA;
                    }
                } else {
                    state.velocities.iter_mut().for_each(|v| *v = [0.0; 3]);
                    dt *= FIRE_F_DEC;
                    alpha = FIRE_ALPHA;
                    since_reset = 0;
                }
            }
            let decay = (-params.damping * dt).exp();
            let mut ke = 0.0;
            for v in 0..n {
                let vel = geom::scale(
                    geom::add(
                        state.velocities[v],
                        geom::scale(forces[v], dt * inv_mass[v]),
                    ),
                    decay,
                );
                state.velocities[v] = vel;
                state.positions[v] = geom::add(state.positions[v], geom::scale(vel, dt));
                ke += geom::dot(vel, vel);
            }
            if params.scheme == Scheme::Kinetic {
                if ke < last_ke {
                    state.velocities.iter_mut().for_each(|v| *v = [0.0; 3]);
                    ke = 0.0;
                }
                last_ke = ke;
            }
            iterations += 1;
            residual = accumulate_forces(
                net,
                params,
                &state.positions,
                &mut forces,
                &mut state.strains,
            );
            if !residual.is_finite() {
                return Err(SolveError::NumericalBlowup);
            }
        }
        if state.positions.iter().any(|&p| !geom::is_finite(p)) {
            return Err(SolveError::NumericalBlowup);
        }
        if !center_slack_midpoints(net, params, &mut state.positions, &mut state.velocities) {
            break;
        }
        // Centering can release residual tension that the force tolerance
        // had let through, so the remaining nodes may need to settle again.
        residual = accumulate_forces(
            net,
            params,
            &state.positions,
            &mut forces,
            &mut state.strains,
        );
        if residual < params.residual_tol || iterations >= params.max_iters {
            break;
        }
    }
    state.residual = residual;
    state.iterations = iterations;
    Ok(state)
}

/// A midpoint whose edge chord is no longer than the rest length feels no
/// force anywhere in the ball where both halves stay slack, so under the
/// tension-only law its position is arbitrary. Placing it on the chord centre
/// picks the equilibrium with equal half strains. Returns whether anything
/// moved.
fn center_slack_midpoints(
    net: &TrussNetwork,
    params: &SolverParams,
    positions: &mut [Vec3],
    velocities: &mut [Vec3],
) -> bool {
    if !net.split || params.law != ElementLaw::TensionOnly {
        return false;
    }
    let base = net.vertex_count();
    let mut moved = false;
    for e in 0..net.edge_count() {
        let (a, b) = net.edge_endpoints(e);
        let rest = net.elements[2 * e].rest_length + net.elements[2 * e + 1].rest_length;
        if geom::dist(positions[a], positions[b]) <= rest {
            let c = geom::midpoint(positions[a], positions[b]);
            if positions[base + e] != c {
                positions[base + e] = c;
                velocities[base + e] = [0.0; 3];
                moved = true;
            }
        }
    }
    moved
}

/// Moves anchor `b` away from anchor `a` by `pull_increment` of the current
/// separation, then relaxes.
pub fn pull_phase(
    mut state: SimState,
    net: &TrussNetwork,
    params: &SolverParams,
) -> Result<SimState, SolveError> {
    let [a, b] = net.anchors;
    let (pa, pb) = (state.positions[a], state.positions[b]);
    let axis = geom::sub(pb, pa);
    let sep = geom::norm(axis);
    let target = sep * (1.0 + params.pull_increment);
    state.positions[b] = geom::add(pa, geom::scale(axis, target / sep));
    state.separation = target;
    state.phase += 1;
    relax(state, net, params)
}

/// Pulls the anchors apart phase by phase until the network is taut.
pub fn solve_taut(net: &TrussNetwork, params: &SolverParams) -> Result<SolveResult, SolveError> {
    params.validate(net)?;
    let [a, b] = net.anchors;
    if !oracle::anchor_distance(net).is_finite() {
        return Err(SolveError::AnchorsDisconnected(a, b));
    }
    let mut state = init_state(net);
    let initial_separation = state.separation;
    let mut peak = vec![0.0f64; net.elements.len()];
    let mut history = Vec::new();
    let termination = loop {
        state = pull_phase(state, net, params)?;
        for (p, &s) in peak.iter_mut().zip(&state.strains) {
            *p = p.max(s);
        }
        let max_strain = state.max_strain();
        history.push(PhaseRecord {
            separation: state.separation,
            residual: state.residual,
            max_strain,
            iterations: state.iterations,
        });
        if max_strain >= params.taut_strain {
            break Termination::Taut;
        }
        if state.separation > params.max_total_stretch * initial_separation {
            break Termination::SeparationCap;
        }
        if state.phase >= params.max_phases {
            break Termination::IterationCap;
        }
    };
    Ok(SolveResult {
        state,
        peak_strains: peak,
        termination,
        history,
        initial_separation,
    })
}
