//! Classical PDM dynamics in canonical coordinates.
//!
//! `H = Σ_j (P_j − eA_j)² / (2M) + V`, integrated with fixed-step RK4.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{PdmError, Result};
use crate::fields::{MassProfile, PhysicalConstants, ScalarField, VectorPotential};
use crate::grid::Axis;
use crate::operators::MIN_MASS;

/// Canonical phase-space point `(x, y, P_x, P_y)` at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalState {
    pub x: f64,
    pub y: f64,
    pub px: f64,
    pub py: f64,
    #[serde(default)]
    pub t: f64,
}

impl ClassicalState {
    pub fn new(x: f64, y: f64, px: f64, py: f64) -> Self {
        Self { x, y, px, py, t: 0.0 }
    }

    fn phase(&self) -> [f64; 4] {
        [self.x, self.y, self.px, self.py]
    }

    fn with_phase(z: [f64; 4], t: f64) -> Self {
        Self {
            x: z[0],
            y: z[1],
            px: z[2],
            py: z[3],
            t,
        }
    }
}

/// The fields a trajectory moves through.
#[derive(Clone, Copy, Debug)]
pub struct ClassicalSystem<'a> {
    pub mass: &'a MassProfile,
    pub vector_potential: &'a VectorPotential,
    pub potential: &'a ScalarField,
    pub constants: &'a PhysicalConstants,
}

fn mass_at(mass: &MassProfile, x: f64, y: f64) -> Result<f64> {
    let m = mass.evaluate(x, y);
    if !m.is_finite() {
        return Err(PdmError::NonFinite { x, y, value: m });
    }
    if m < MIN_MASS {
        return Err(PdmError::NonPositiveMass { x, y, value: m });
    }
    Ok(m)
}

/// Kinetic momenta `P − eA`.
fn kinetic_momentum(z: &[f64; 4], a: &VectorPotential, e: f64) -> [f64; 2] {
    let av = a.evaluate(z[0], z[1]);
    [z[2] - e * av[0], z[3] - e * av[1]]
}

/// `Π_j = (P_j − eA_j)/√M`.
pub fn pseudo_momentum(
    state: &ClassicalState,
    mass: &MassProfile,
    a: &VectorPotential,
    constants: &PhysicalConstants,
) -> Result<[f64; 2]> {
    let m = mass_at(mass, state.x, state.y)?;
    let k = kinetic_momentum(&state.phase(), a, constants.charge);
    let s = m.sqrt();
    Ok([k[0] / s, k[1] / s])
}

impl ClassicalSystem<'_> {
    pub fn energy(&self, state: &ClassicalState) -> Result<f64> {
        let pi = pseudo_momentum(state, self.mass, self.vector_potential, self.constants)?;
        Ok(0.5 * (pi[0] * pi[0] + pi[1] * pi[1]) + self.potential.evaluate(state.x, state.y))
    }

    fn rhs(&self, z: &[f64; 4]) -> Result<[f64; 4]> {
        let (x, y) = (z[0], z[1]);
        let e = self.constants.charge;
        let m = mass_at(self.mass, x, y)?;
        let grad_m = self.mass.gradient(x, y);
        let grad_v = self.potential.gradient(x, y);
        let grad_a = [Axis::X, Axis::Y].map(|axis| self.vector_potential.component(axis).gradient(x, y));
        let k = kinetic_momentum(z, self.vector_potential, e);
        let k2 = k[0] * k[0] + k[1] * k[1];
        let mut out = [k[0] / m, k[1] / m, 0.0, 0.0];
        for j in 0..2 {
            let magnetic: f64 = (0..2).map(|c| k[c] * grad_a[c][j]).sum();
            out[2 + j] = k2 / (2.0 * m * m) * grad_m[j] + e / m * magnetic - grad_v[j];
        }
        if let Some(bad) = out.iter().find(|v| !v.is_finite()) {
            return Err(PdmError::NonFinite { x, y, value: *bad });
        }
        Ok(out)
    }
}

/// Hamilton's equations: `(ẋ, ẏ, Ṗ_x, Ṗ_y)` with
/// `ẋ_j = (P_j − eA_j)/M` and
/// `Ṗ_j = |P − eA|²∂_jM/(2M²) + (e/M)Σ_k (P_k − eA_k)∂_jA_k − ∂_jV`.
pub fn hamiltonian_flow(
    state: &ClassicalState,
    mass: &MassProfile,
    a: &VectorPotential,
    v: &ScalarField,
    constants: &PhysicalConstants,
) -> Result<[f64; 4]> {
    ClassicalSystem {
        mass,
        vector_potential: a,
        potential: v,
        constants,
    }
    .rhs(&state.phase())
}

/// Integration stopped early; `partial` holds every state reached.
#[derive(Debug, Error)]
#[error("trajectory aborted at t = {t}: {source}", t = partial.last().map_or(0.0, |s| s.t))]
pub struct TrajectoryAbort {
    pub partial: Vec<ClassicalState>,
    #[source]
    pub source: PdmError,
}

/// RK4 from `state0` to `t_end` in steps of `dt`; the last step is shortened
/// to land on `t_end` exactly. Returns every state including the first.
pub fn integrate_trajectory(
    state0: &ClassicalState,
    system: &ClassicalSystem<'_>,
    t_end: f64,
    dt: f64,
) -> std::result::Result<Vec<ClassicalState>, TrajectoryAbort> {
    let invalid = |msg: String| TrajectoryAbort {
        partial: Vec::new(),
        source: PdmError::InvalidParameter(msg),
    };
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    if !(t_end.is_finite() && t_end > state0.t) {
        return Err(invalid(format!("t_end must exceed the start time {}, got {t_end}", state0.t)));
    }
    let span = t_end - state0.t;
    let full_steps = (span / dt).floor() as usize;
    let mut times: Vec<f64> = (1..=full_steps).map(|k| state0.t + k as f64 * dt).collect();
    // drop a sliver step that would only resolve rounding
    if span - full_steps as f64 * dt > 1e-12 * dt {
        times.push(t_end);
    } else if let Some(last) = times.last_mut() {
        *last = t_end;
    }

    let mut states = Vec::with_capacity(times.len() + 1);
    if let Err(source) = system.rhs(&state0.phase()) {
        return Err(TrajectoryAbort {
            partial: states,
            source,
        });
    }
    states.push(*state0);
    let mut z = state0.phase();
    let mut t = state0.t;
    for t_next in times {
        match rk4_step(system, &z, t_next - t) {
            Ok(next) => z = next,
            Err(source) => {
                return Err(TrajectoryAbort {
                    partial: states,
                    source,
                })
            }
        }
        t = t_next;
        states.push(ClassicalState::with_phase(z, t));
    }
    Ok(states)
}

fn rk4_step(system: &ClassicalSystem<'_>, z: &[f64; 4], h: f64) -> Result<[f64; 4]> {
    let shift = |k: &[f64; 4], s: f64| std::array::from_fn::<f64, 4, _>(|i| z[i] + s * k[i]);
    let k1 = system.rhs(z)?;
    let k2 = system.rhs(&shift(&k1, h / 2.0))?;
    let k3 = system.rhs(&shift(&k2, h / 2.0))?;
    let k4 = system.rhs(&shift(&k3, h))?;
    let next = std::array::from_fn(|i| z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    // the mass must stay positive at the landing point too
    system.rhs(&next)?;
    Ok(next)
}

/// Drift of the conserved quantities along a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConservationSummary {
    pub initial_energy: f64,
    /// `max_t |H(t) − H(0)| / |H(0)|`
    pub energy_drift: f64,
    /// `max_t ||Π(t)|² − |Π(0)|²| / |Π(0)|²`
    pub pi_squared_drift: f64,
    /// `max_t |Π_j(t) − Π_j(0)|`, informational only.
    pub pi_component_drift: [f64; 2],
    /// `max_t ||Π|² − 2(H − V)|`
    pub pi_energy_identity: f64,
}

fn relative(delta: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        delta
    } else {
        delta / scale.abs()
    }
}

pub fn conservation_summary(states: &[ClassicalState], system: &ClassicalSystem<'_>) -> Result<ConservationSummary> {
    let first = states
        .first()
        .ok_or_else(|| PdmError::InvalidParameter("empty trajectory".into()))?;
    let h0 = system.energy(first)?;
    let pi0 = pseudo_momentum(first, system.mass, system.vector_potential, system.constants)?;
    let pi0_sq = pi0[0] * pi0[0] + pi0[1] * pi0[1];
    let mut summary = ConservationSummary {
        initial_energy: h0,
        energy_drift: 0.0,
        pi_squared_drift: 0.0,
        pi_component_drift: [0.0; 2],
        pi_energy_identity: 0.0,
    };
    for s in states {
        let h = system.energy(s)?;
        let pi = pseudo_momentum(s, system.mass, system.vector_potential, system.constants)?;
        let pi_sq = pi[0] * pi[0] + pi[1] * pi[1];
        summary.energy_drift = summary.energy_drift.max(relative((h - h0).abs(), h0));
        summary.pi_squared_drift = summary.pi_squared_drift.max(relative((pi_sq - pi0_sq).abs(), pi0_sq));
        for j in 0..2 {
            summary.pi_component_drift[j] = summary.pi_component_drift[j].max((pi[j] - pi0[j]).abs());
        }
        let v = system.potential.evaluate(s.x, s.y);
        summary.pi_energy_identity = summary.pi_energy_identity.max((pi_sq - 2.0 * (h - v)).abs());
    }
    Ok(summary)
}

/// Trajectory table `t,x,y,px,py,pix,piy,energy`.
pub fn write_trajectory_csv<W: Write>(mut w: W, states: &[ClassicalState], system: &ClassicalSystem<'_>) -> io::Result<()> {
    writeln!(w, "t,x,y,px,py,pix,piy,energy")?;
    for s in states {
        let pi = pseudo_momentum(s, system.mass, system.vector_potential, system.constants)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let energy = system.energy(s).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            s.t, s.x, s.y, s.px, s.py, pi[0], pi[1], energy
        )?;
    }
    Ok(())
}

/// Worst relative disagreement between [`hamiltonian_flow`] and central
/// differences of `H` with step `step`, measured against the flow's largest
/// component.
pub fn flow_gradient_mismatch(state: &ClassicalState, system: &ClassicalSystem<'_>, step: f64) -> Result<f64> {
    let flow = system.rhs(&state.phase())?;
    let z = state.phase();
    let mut fd = [0.0; 4];
    for (i, slot) in fd.iter_mut().enumerate() {
        let mut plus = z;
        let mut minus = z;
        plus[i] += step;
        minus[i] -= step;
        let hp = system.energy(&ClassicalState::with_phase(plus, state.t))?;
        let hm = system.energy(&ClassicalState::with_phase(minus, state.t))?;
        *slot = (hp - hm) / (2.0 * step);
    }
    // ẋ = ∂H/∂P, Ṗ = −∂H/∂x
    let expected = [fd[2], fd[3], -fd[0], -fd[1]];
    let scale = flow.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let err = flow
        .iter()
        .zip(&expected)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(if scale > 0.0 { err / scale } else { err })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::make_vector_potential;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const C: PhysicalConstants = PhysicalConstants {
        hbar: 1.0,
        charge: 1.0,
    };

    fn system<'a>(m: &'a MassProfile, a: &'a VectorPotential, v: &'a ScalarField) -> ClassicalSystem<'a> {
        ClassicalSystem {
            mass: m,
            vector_potential: a,
            potential: v,
            constants: &C,
        }
    }

    #[test]
    fn flow_examples() {
        let one = MassProfile::constant(1.0).unwrap();
        let zero = VectorPotential::zero();
        let v = ScalarField::Linear { c0: 0.0, cx: 0.0, cy: 0.0 };
        let osc = ScalarField::Harmonic { k: 1.0 };
        let f = hamiltonian_flow(&ClassicalState::new(1.0, 0.0, 0.0, 0.0), &one, &zero, &osc, &C).unwrap();
        assert_eq!(f, [0.0, 0.0, -1.0, 0.0]);

        let q = MassProfile::quadratic(1.0, 1.0).unwrap();
        let f = hamiltonian_flow(&ClassicalState::new(1.0, 0.0, 2.0, 0.0), &q, &zero, &v, &C).unwrap();
        assert_eq!(f, [1.0, 0.0, 1.0, 0.0]);

        let landau = make_vector_potential("landau-x", 1.0).unwrap();
        let f = hamiltonian_flow(&ClassicalState::new(0.0, 0.0, 1.0, 0.0), &one, &landau, &v, &C).unwrap();
        assert_eq!(f, [1.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn pseudo_momentum_examples() {
        let four = MassProfile::constant(4.0).unwrap();
        let zero = VectorPotential::zero();
        let pi = pseudo_momentum(&ClassicalState::new(0.3, 0.1, 2.0, 0.0), &four, &zero, &C).unwrap();
        assert_eq!(pi, [1.0, 0.0]);
        let one = MassProfile::constant(1.0).unwrap();
        let a = VectorPotential {
            ax: ScalarField::Constant { c: 1.0 },
            ay: ScalarField::zero(),
        };
        let pi = pseudo_momentum(&ClassicalState::new(0.0, 0.0, 1.0, 0.0), &one, &a, &C).unwrap();
        assert_eq!(pi, [0.0, 0.0]);
    }

    #[test]
    fn flow_matches_energy_gradient() {
        let masses = [
            MassProfile::constant(1.3).unwrap(),
            MassProfile::rational_bump(1.0, 1.0).unwrap(),
            MassProfile::quadratic(1.0, 0.5).unwrap(),
        ];
        let gauges = [
            VectorPotential::zero(),
            make_vector_potential("symmetric", 1.0).unwrap(),
            make_vector_potential("landau-x", 0.7).unwrap(),
        ];
        let potentials = [
            ScalarField::zero(),
            ScalarField::Harmonic { k: 1.0 },
            ScalarField::Linear { c0: 0.1, cx: 0.4, cy: -0.2 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in &masses {
            for a in &gauges {
                for v in &potentials {
                    let sys = system(m, a, v);
                    for _ in 0..100 {
                        let s = ClassicalState::new(
                            rng.gen_range(-2.0..2.0),
                            rng.gen_range(-2.0..2.0),
                            rng.gen_range(-2.0..2.0),
                            rng.gen_range(-2.0..2.0),
                        );
                        let err = flow_gradient_mismatch(&s, &sys, 1e-5).unwrap();
                        assert!(err <= 1e-6, "{err} at {s:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn oscillator_closes_after_one_period() {
        let one = MassProfile::constant(1.0).unwrap();
        let zero = VectorPotential::zero();
        let osc = ScalarField::Harmonic { k: 1.0 };
        let traj = integrate_trajectory(&ClassicalState::new(1.0, 0.0, 0.0, 0.0), &system(&one, &zero, &osc), 2.0 * PI, 1e-3)
            .unwrap();
        let last = traj.last().unwrap();
        assert_eq!(last.t, 2.0 * PI);
        assert_eq!(traj[1].t, 1e-3);
        for (got, want) in [last.x, last.y, last.px, last.py].iter().zip([1.0, 0.0, 0.0, 0.0]) {
            assert!((got - want).abs() <= 1e-8, "{last:?}");
        }
    }

    #[test]
    fn cyclotron_radius_is_constant() {
        let one = MassProfile::constant(1.0).unwrap();
        let a = make_vector_potential("symmetric", 1.0).unwrap();
        let v = ScalarField::zero();
        let sys = system(&one, &a, &v);
        let s0 = ClassicalState::new(0.0, 0.0, 1.0, 0.0);
        let traj = integrate_trajectory(&s0, &sys, 4.0 * PI, 1e-3).unwrap();
        // orbit centre from the initial state: r = |Π|/(eB), centre = x + (v_y, −v_x)/(eB)
        let radius = |s: &ClassicalState| {
            let pi = pseudo_momentum(s, &one, &a, &C).unwrap();
            (pi[0] * pi[0] + pi[1] * pi[1]).sqrt()
        };
        let r0 = radius(&s0);
        let f0 = hamiltonian_flow(&s0, &one, &a, &v, &C).unwrap();
        let centre = (s0.x + f0[1], s0.y - f0[0]);
        for s in &traj {
            assert!((radius(s) - r0).abs() <= 1e-8);
            let d = ((s.x - centre.0).powi(2) + (s.y - centre.1).powi(2)).sqrt();
            assert!((d - r0).abs() <= 1e-8, "{d} vs {r0}");
        }
    }

    #[test]
    fn quasi_free_bump_conserves_energy_and_pi_squared() {
        let bump = MassProfile::rational_bump(1.0, 1.0).unwrap();
        let zero = VectorPotential::zero();
        let v = ScalarField::zero();
        let sys = system(&bump, &zero, &v);
        let traj = integrate_trajectory(&ClassicalState::new(-1.5, 0.4, 0.6, -0.1), &sys, 10.0, 1e-3).unwrap();
        let summary = conservation_summary(&traj, &sys).unwrap();
        assert!(summary.energy_drift <= 1e-8, "{summary:?}");
        assert!(summary.pi_squared_drift <= 1e-8, "{summary:?}");
        assert!(summary.pi_energy_identity <= 1e-12, "{summary:?}");
    }

    #[test]
    fn energy_drift_is_fourth_order() {
        let q = MassProfile::quadratic(1.0, 0.5).unwrap();
        let a = make_vector_potential("symmetric", 0.5).unwrap();
        let v = ScalarField::Harmonic { k: 1.0 };
        let sys = system(&q, &a, &v);
        let s0 = ClassicalState::new(1.0, 0.0, 0.0, 1.0);
        let drift = |dt: f64| {
            let traj = integrate_trajectory(&s0, &sys, 5.0, dt).unwrap();
            conservation_summary(&traj, &sys).unwrap().energy_drift
        };
        let ratio = drift(0.04) / drift(0.02);
        assert!((ratio - 16.0).abs() <= 0.3 * 16.0, "ratio {ratio}");
    }

    #[test]
    fn invalid_steps_and_partial_trajectories() {
        let one = MassProfile::constant(1.0).unwrap();
        let zero = VectorPotential::zero();
        let v = ScalarField::zero();
        let sys = system(&one, &zero, &v);
        let s0 = ClassicalState::new(0.0, 0.0, 1.0, 0.0);
        assert!(integrate_trajectory(&s0, &sys, 1.0, 0.0).is_err());
        assert!(integrate_trajectory(&s0, &sys, 1.0, -0.1).is_err());
        assert!(integrate_trajectory(&s0, &sys, 0.0, 0.1).is_err());

        // a mass that underflows far out: m0/(1 + r²/a²) drops below the floor
        let tiny = MassProfile::rational_bump(1e-10, 1e-3).unwrap();
        let sys = system(&tiny, &zero, &v);
        let err = integrate_trajectory(&ClassicalState::new(0.0, 0.0, 1e-10, 0.0), &sys, 100.0, 0.01).unwrap_err();
        assert!(matches!(err.source, PdmError::NonPositiveMass { .. }));
        assert!(!err.partial.is_empty());
        assert_eq!(err.partial[0].t, 0.0);
    }

    #[test]
    fn csv_has_expected_columns() {
        let one = MassProfile::constant(1.0).unwrap();
        let zero = VectorPotential::zero();
        let v = ScalarField::zero();
        let sys = system(&one, &zero, &v);
        let traj = integrate_trajectory(&ClassicalState::new(0.0, 0.0, 1.0, 0.0), &sys, 0.25, 0.1).unwrap();
        assert_eq!(traj.len(), 4);
        let mut out = Vec::new();
        write_trajectory_csv(&mut out, &traj, &sys).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next(), Some("t,x,y,px,py,pix,piy,energy"));
        assert_eq!(text.lines().count(), 5);
        assert_eq!(text.lines().nth(4).unwrap().split(',').count(), 8);
    }
}
