//! 1D Crank–Nicolson propagation and Ehrenfest-relation checks.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{PdmError, Result};
use crate::fields::{MassProfile, PhysicalConstants, ScalarField, VectorPotential};
use crate::grid::{Axis, Domain, Grid1D};
use crate::linop::{LinearOperator, C64};
use crate::operators::{build_corrected_hamiltonian, build_pdm_momentum, MomentumForm};

/// Normalization accepted by [`expectations`].
pub const NORM_TOLERANCE: f64 = 1e-8;

/// Complex samples on the interior nodes of a 1D grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Wavefunction1D {
    pub grid: Grid1D,
    pub values: Vec<C64>,
}

/// Gaussian packet `exp(−(x − x0)²/(4σ²) + i k0 x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketParams {
    pub x0: f64,
    pub sigma: f64,
    pub k0: f64,
}

impl Wavefunction1D {
    pub fn new(grid: Grid1D, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(PdmError::DimensionMismatch {
                expected: grid.n,
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    /// Normalized Gaussian packet.
    pub fn gaussian(grid: Grid1D, packet: &PacketParams) -> Result<Self> {
        if !(packet.sigma.is_finite() && packet.sigma > 0.0) {
            return Err(PdmError::InvalidParameter(format!(
                "packet width must be positive, got {}",
                packet.sigma
            )));
        }
        let values = (0..grid.n)
            .map(|i| {
                let x = grid.x(i);
                let d = x - packet.x0;
                C64::from_polar((-d * d / (4.0 * packet.sigma * packet.sigma)).exp(), packet.k0 * x)
            })
            .collect();
        Self::new(grid, values)?.normalized()
    }

    /// `Σ|ψ|² h`.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.h
    }

    pub fn normalized(mut self) -> Result<Self> {
        let norm = self.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(PdmError::Unnormalized { norm });
        }
        let s = 1.0 / norm.sqrt();
        self.values.iter_mut().for_each(|c| *c *= s);
        Ok(self)
    }

    /// `⟨self, other⟩ = Σ conj(ψ) φ h`.
    pub fn inner(&self, other: &[C64]) -> C64 {
        self.values.iter().zip(other).map(|(a, b)| a.conj() * b).sum::<C64>() * self.grid.h
    }

    fn expect(&self, op: &LinearOperator) -> C64 {
        self.inner(&op.matvec(&self.values))
    }
}

/// LU factors of a banded matrix, stored row by row over the band.
struct BandedLu {
    n: usize,
    p: usize,
    band: Vec<C64>,
}

impl BandedLu {
    fn width(&self) -> usize {
        2 * self.p + 1
    }

    fn at(&self, i: usize, j: usize) -> usize {
        i * self.width() + (j + self.p - i)
    }

    /// Doolittle factorization without pivoting. Safe for `I + iτH` with
    /// `H` Hermitian: the Hermitian part is the identity, so every leading
    /// block is nonsingular.
    fn factor(op: &LinearOperator) -> Result<Self> {
        let n = op.dim();
        let p = op.entries().map(|(r, c, _)| r.abs_diff(c)).max().unwrap_or(0);
        let mut lu = Self {
            n,
            p,
            band: vec![C64::new(0.0, 0.0); n * (2 * p + 1)],
        };
        for (r, c, v) in op.entries() {
            let k = lu.at(r, c);
            lu.band[k] = v;
        }
        for k in 0..n {
            let pivot = lu.band[lu.at(k, k)];
            if pivot.norm() < f64::EPSILON {
                return Err(PdmError::LinearSolve(format!("zero pivot at row {k}")));
            }
            let last = (k + p).min(n - 1);
            for i in k + 1..=last {
                let l = lu.band[lu.at(i, k)] / pivot;
                let ik = lu.at(i, k);
                lu.band[ik] = l;
                for j in k + 1..=last {
                    let kj = lu.band[lu.at(k, j)];
                    let ij = lu.at(i, j);
                    lu.band[ij] -= l * kj;
                }
            }
        }
        Ok(lu)
    }

    fn solve(&self, b: &mut [C64]) {
        let (n, p) = (self.n, self.p);
        for i in 0..n {
            let first = i.saturating_sub(p);
            let mut acc = b[i];
            for j in first..i {
                acc -= self.band[self.at(i, j)] * b[j];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let last = (i + p).min(n - 1);
            let mut acc = b[i];
            for j in i + 1..=last {
                acc -= self.band[self.at(i, j)] * b[j];
            }
            b[i] = acc / self.band[self.at(i, i)];
        }
    }
}

/// Cayley stepper `(1 + iτH)ψ' = (1 − iτH)ψ` with `τ = dt/(2ħ)`.
pub struct CrankNicolson {
    explicit: LinearOperator,
    implicit: BandedLu,
}

impl CrankNicolson {
    pub fn new(h: &LinearOperator, dt: f64, hbar: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(PdmError::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        let tau = C64::new(0.0, dt / (2.0 * hbar));
        let id = LinearOperator::identity(h.dim());
        let explicit = id.combine(C64::new(1.0, 0.0), h, -tau)?;
        let implicit = BandedLu::factor(&id.combine(C64::new(1.0, 0.0), h, tau)?)?;
        Ok(Self { explicit, implicit })
    }

    pub fn step(&self, psi: &mut Wavefunction1D) {
        let mut rhs = self.explicit.matvec(&psi.values);
        self.implicit.solve(&mut rhs);
        psi.values = rhs;
    }
}

/// `steps` Crank–Nicolson steps of size `dt`.
pub fn propagate(psi: &Wavefunction1D, h: &LinearOperator, dt: f64, steps: usize, hbar: f64) -> Result<Wavefunction1D> {
    let stepper = CrankNicolson::new(h, dt, hbar)?;
    let mut out = psi.clone();
    for _ in 0..steps {
        stepper.step(&mut out);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Expectations {
    pub mean_x: f64,
    /// `Re⟨ψ, −iħDψ⟩`
    pub mean_p_canonical: f64,
    /// `⟨ψ, Π̂ψ⟩` with the Hermitian PDM momentum.
    pub mean_pi: f64,
}

pub fn expectations(psi: &Wavefunction1D, mass: &MassProfile, constants: &PhysicalConstants) -> Result<Expectations> {
    Observables::new(&psi.grid, mass, constants)?.measure(psi)
}

/// Momentum operators of one grid, built once for a whole time series.
struct Observables {
    p: LinearOperator,
    pi: LinearOperator,
}

impl Observables {
    fn new(grid: &Grid1D, mass: &MassProfile, constants: &PhysicalConstants) -> Result<Self> {
        Ok(Self {
            p: grid.derivative(Axis::X, 1)?.scale(C64::new(0.0, -constants.hbar)),
            pi: build_pdm_momentum(grid, mass, Axis::X, MomentumForm::Hermitian, constants)?,
        })
    }

    fn measure(&self, psi: &Wavefunction1D) -> Result<Expectations> {
        let norm = psi.norm();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(PdmError::Unnormalized { norm });
        }
        let mean_x = psi
            .values
            .iter()
            .enumerate()
            .map(|(i, c)| psi.grid.x(i) * c.norm_sqr())
            .sum::<f64>()
            * psi.grid.h;
        Ok(Expectations {
            mean_x,
            mean_p_canonical: psi.expect(&self.p).re,
            mean_pi: psi.expect(&self.pi).re,
        })
    }
}

/// One row of the time-series table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub mean_x: f64,
    pub mean_p: f64,
    pub mean_pi: f64,
    pub norm: f64,
    pub energy: f64,
}

pub fn write_series_csv<W: Write>(mut w: W, series: &[Sample]) -> io::Result<()> {
    writeln!(w, "t,mean_x,mean_p,mean_pi,norm,energy")?;
    for s in series {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            s.t, s.mean_x, s.mean_p, s.mean_pi, s.norm, s.energy
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EhrenfestReport {
    /// `max_t |d⟨x⟩/dt − ⟨p̂⟩/M(⟨x⟩)|` over the interior samples, with
    /// `d⟨x⟩/dt` from centered differences over `2dt`.
    pub residual: f64,
    /// Largest `|norm − 1|` seen.
    pub norm_drift: f64,
    /// Largest relative change of `⟨H⟩`.
    pub energy_drift: f64,
    pub series: Vec<Sample>,
}

/// Evolves a Gaussian packet under the corrected 1D Hamiltonian and compares
/// the packet velocity with `⟨p̂⟩/M(⟨x⟩)`. For constant mass this is the
/// Ehrenfest law; for a position-dependent mass it is the naive relation.
pub fn ehrenfest_check(
    grid: &Grid1D,
    mass: &MassProfile,
    v: &ScalarField,
    constants: &PhysicalConstants,
    packet: &PacketParams,
    dt: f64,
    steps: usize,
) -> Result<EhrenfestReport> {
    if steps < 2 {
        return Err(PdmError::InvalidParameter(format!(
            "need at least 2 steps for a centered derivative, got {steps}"
        )));
    }
    let h = build_corrected_hamiltonian(grid, mass, &VectorPotential::zero(), v, constants)?;
    let stepper = CrankNicolson::new(&h, dt, constants.hbar)?;
    let observables = Observables::new(grid, mass, constants)?;
    let mut psi = Wavefunction1D::gaussian(*grid, packet)?;

    let mut series = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        if k > 0 {
            stepper.step(&mut psi);
        }
        let e = observables.measure(&psi)?;
        series.push(Sample {
            t: k as f64 * dt,
            mean_x: e.mean_x,
            mean_p: e.mean_p_canonical,
            mean_pi: e.mean_pi,
            norm: psi.norm(),
            energy: psi.expect(&h).re,
        });
    }

    let mut residual: f64 = 0.0;
    for w in series.windows(3) {
        let velocity = (w[2].mean_x - w[0].mean_x) / (2.0 * dt);
        let m = mass.evaluate(w[1].mean_x, 0.0);
        residual = residual.max((velocity - w[1].mean_p / m).abs());
    }
    let e0 = series[0].energy;
    let energy_drift = series
        .iter()
        .map(|s| (s.energy - e0).abs() / e0.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let norm_drift = series.iter().map(|s| (s.norm - 1.0).abs()).fold(0.0, f64::max);
    Ok(EhrenfestReport {
        residual,
        norm_drift,
        energy_drift,
        series,
    })
}
