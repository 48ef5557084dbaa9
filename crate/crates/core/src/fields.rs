//! Analytic mass profiles, scalar potentials and vector potentials.
//!
//! Fields are stored as parameterized closed forms rather than grid samples,
//! so the same definition can be sampled on any resolution. Every catalog
//! entry carries an analytic gradient and Hessian.

use crate::error::{PdmError, Result};
use crate::grid::Axis;

/// Units used by every builder. Natural units (ħ = e = 1) by default.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub charge: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            charge: 1.0,
        }
    }
}

impl PhysicalConstants {
    pub fn new(hbar: f64, charge: f64) -> Result<Self> {
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(PdmError::InvalidParameter(format!(
                "hbar must be positive and finite, got {hbar}"
            )));
        }
        if !charge.is_finite() {
            return Err(PdmError::InvalidParameter(format!(
                "charge must be finite, got {charge}"
            )));
        }
        Ok(Self { hbar, charge })
    }
}

/// A real field on the plane with analytic first and second derivatives.
#[derive(Clone, Debug, PartialEq)]
pub enum ScalarField {
    /// `c`
    Constant { c: f64 },
    /// `c0 + cx x + cy y`
    Linear { c0: f64, cx: f64, cy: f64 },
    /// `c x y`
    Bilinear { c: f64 },
    /// `k (x² + y²) / 2`
    Harmonic { k: f64 },
    /// `m0 / (1 + (x² + y²)/a²)`
    RationalBump { m0: f64, a: f64 },
    /// `m0 (1 + λ (x² + y²))`
    Quadratic { m0: f64, lambda: f64 },
    /// `base + ∂_axis chi`, the component of a gauge-transformed vector potential.
    Shifted {
        base: Box<ScalarField>,
        chi: Box<ScalarField>,
        axis: Axis,
    },
}

impl ScalarField {
    pub const fn zero() -> Self {
        ScalarField::Constant { c: 0.0 }
    }

    /// Builds a catalog field from its tag and positional parameters.
    ///
    /// | kind            | params         |
    /// |-----------------|----------------|
    /// | `zero`          |                |
    /// | `constant`      | `c`            |
    /// | `linear`        | `c0, cx, cy`   |
    /// | `bilinear`      | `c`            |
    /// | `harmonic`      | `k`            |
    /// | `rational-bump` | `m0, a`        |
    /// | `quadratic`     | `m0, lambda`   |
    pub fn from_catalog(kind: &str, params: &[f64]) -> Result<Self> {
        let expect = |n: usize| -> Result<()> {
            if params.len() != n {
                return Err(PdmError::InvalidParameter(format!(
                    "field `{kind}` takes {n} parameter(s), got {}",
                    params.len()
                )));
            }
            if let Some(p) = params.iter().find(|p| !p.is_finite()) {
                return Err(PdmError::InvalidParameter(format!(
                    "field `{kind}` has non-finite parameter {p}"
                )));
            }
            Ok(())
        };
        let field = match kind {
            "zero" => {
                expect(0)?;
                Self::zero()
            }
            "constant" => {
                expect(1)?;
                ScalarField::Constant { c: params[0] }
            }
            "linear" => {
                expect(3)?;
                ScalarField::Linear {
                    c0: params[0],
                    cx: params[1],
                    cy: params[2],
                }
            }
            "bilinear" => {
                expect(1)?;
                ScalarField::Bilinear { c: params[0] }
            }
            "harmonic" => {
                expect(1)?;
                ScalarField::Harmonic { k: params[0] }
            }
            "rational-bump" => {
                expect(2)?;
                if params[1] <= 0.0 {
                    return Err(PdmError::InvalidParameter(format!(
                        "rational-bump width a must be positive, got {}",
                        params[1]
                    )));
                }
                ScalarField::RationalBump {
                    m0: params[0],
                    a: params[1],
                }
            }
            "quadratic" => {
                expect(2)?;
                ScalarField::Quadratic {
                    m0: params[0],
                    lambda: params[1],
                }
            }
            other => {
                return Err(PdmError::UnknownKind {
                    what: "field",
                    kind: other.to_string(),
                })
            }
        };
        Ok(field)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ScalarField::Constant { .. } => "constant",
            ScalarField::Linear { .. } => "linear",
            ScalarField::Bilinear { .. } => "bilinear",
            ScalarField::Harmonic { .. } => "harmonic",
            ScalarField::RationalBump { .. } => "rational-bump",
            ScalarField::Quadratic { .. } => "quadratic",
            ScalarField::Shifted { .. } => "shifted",
        }
    }

    /// Positional parameters in catalog order. Empty for derived fields.
    pub fn params(&self) -> Vec<f64> {
        match *self {
            ScalarField::Constant { c } => vec![c],
            ScalarField::Linear { c0, cx, cy } => vec![c0, cx, cy],
            ScalarField::Bilinear { c } => vec![c],
            ScalarField::Harmonic { k } => vec![k],
            ScalarField::RationalBump { m0, a } => vec![m0, a],
            ScalarField::Quadratic { m0, lambda } => vec![m0, lambda],
            ScalarField::Shifted { .. } => Vec::new(),
        }
    }

    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        match self {
            ScalarField::Constant { c } => *c,
            ScalarField::Linear { c0, cx, cy } => c0 + cx * x + cy * y,
            ScalarField::Bilinear { c } => c * x * y,
            ScalarField::Harmonic { k } => 0.5 * k * (x * x + y * y),
            ScalarField::RationalBump { m0, a } => m0 / (1.0 + (x * x + y * y) / (a * a)),
            ScalarField::Quadratic { m0, lambda } => m0 * (1.0 + lambda * (x * x + y * y)),
            ScalarField::Shifted { base, chi, axis } => {
                base.evaluate(x, y) + chi.gradient(x, y)[axis.index()]
            }
        }
    }

    pub fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        match self {
            ScalarField::Constant { .. } => [0.0, 0.0],
            ScalarField::Linear { cx, cy, .. } => [*cx, *cy],
            ScalarField::Bilinear { c } => [c * y, c * x],
            ScalarField::Harmonic { k } => [k * x, k * y],
            ScalarField::RationalBump { m0, a } => {
                let a2 = a * a;
                let s = 1.0 + (x * x + y * y) / a2;
                let f = -2.0 * m0 / (a2 * s * s);
                [f * x, f * y]
            }
            ScalarField::Quadratic { m0, lambda } => {
                let f = 2.0 * m0 * lambda;
                [f * x, f * y]
            }
            ScalarField::Shifted { base, chi, axis } => {
                let g = base.gradient(x, y);
                let h = chi.hessian(x, y).unwrap_or_else(|| chi.numerical_hessian(x, y));
                let row = h[axis.index()];
                [g[0] + row[0], g[1] + row[1]]
            }
        }
    }

    /// Analytic Hessian; `None` for derived (gauge-shifted) fields.
    pub fn hessian(&self, x: f64, y: f64) -> Option<[[f64; 2]; 2]> {
        let h = match self {
            ScalarField::Constant { .. } | ScalarField::Linear { .. } => [[0.0; 2]; 2],
            ScalarField::Bilinear { c } => [[0.0, *c], [*c, 0.0]],
            ScalarField::Harmonic { k } => [[*k, 0.0], [0.0, *k]],
            ScalarField::RationalBump { m0, a } => {
                let a2 = a * a;
                let s = 1.0 + (x * x + y * y) / a2;
                let sx = 2.0 * x / a2;
                let sy = 2.0 * y / a2;
                let s2 = 2.0 / a2;
                let s_sq = s * s;
                let s_cu = s_sq * s;
                let hxx = -m0 * (s2 / s_sq - 2.0 * sx * sx / s_cu);
                let hyy = -m0 * (s2 / s_sq - 2.0 * sy * sy / s_cu);
                let hxy = 2.0 * m0 * sx * sy / s_cu;
                [[hxx, hxy], [hxy, hyy]]
            }
            ScalarField::Quadratic { m0, lambda } => {
                let f = 2.0 * m0 * lambda;
                [[f, 0.0], [0.0, f]]
            }
            ScalarField::Shifted { .. } => return None,
        };
        Some(h)
    }

    fn numerical_hessian(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        let e = 1e-5;
        let gxp = self.gradient(x + e, y);
        let gxm = self.gradient(x - e, y);
        let gyp = self.gradient(x, y + e);
        let gym = self.gradient(x, y - e);
        let hxx = (gxp[0] - gxm[0]) / (2.0 * e);
        let hyy = (gyp[1] - gym[1]) / (2.0 * e);
        let hxy = 0.5 * ((gxp[1] - gxm[1]) + (gyp[0] - gym[0])) / (2.0 * e);
        [[hxx, hxy], [hxy, hyy]]
    }
}

/// Position-dependent mass `M(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MassProfile {
    field: ScalarField,
    m0: f64,
}

/// Builds a mass profile from the catalog.
///
/// `constant` takes `[m0]`, `rational-bump` takes `[m0, a]` and `quadratic`
/// takes `[m0, lambda]`. All catalog profiles are positive on the whole plane.
pub fn make_mass_profile(kind: &str, params: &[f64]) -> Result<MassProfile> {
    let field = match kind {
        "constant" | "rational-bump" | "quadratic" => ScalarField::from_catalog(kind, params)?,
        other => {
            return Err(PdmError::UnknownKind {
                what: "mass profile",
                kind: other.to_string(),
            })
        }
    };
    let m0 = params[0];
    if m0 <= 0.0 {
        return Err(PdmError::InvalidParameter(format!(
            "mass scale m0 must be positive, got {m0}"
        )));
    }
    if let ScalarField::Quadratic { lambda, .. } = field {
        if lambda < 0.0 {
            return Err(PdmError::InvalidParameter(format!(
                "quadratic mass needs lambda >= 0, got {lambda}"
            )));
        }
    }
    Ok(MassProfile { field, m0 })
}

impl MassProfile {
    pub fn constant(m0: f64) -> Result<Self> {
        make_mass_profile("constant", &[m0])
    }

    pub fn rational_bump(m0: f64, a: f64) -> Result<Self> {
        make_mass_profile("rational-bump", &[m0, a])
    }

    pub fn quadratic(m0: f64, lambda: f64) -> Result<Self> {
        make_mass_profile("quadratic", &[m0, lambda])
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.field, ScalarField::Constant { .. })
    }

    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        self.field.evaluate(x, y)
    }

    pub fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        self.field.gradient(x, y)
    }
}

/// Vector potential `A = (A_x, A_y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorPotential {
    pub ax: ScalarField,
    pub ay: ScalarField,
}

impl VectorPotential {
    pub fn zero() -> Self {
        Self {
            ax: ScalarField::zero(),
            ay: ScalarField::zero(),
        }
    }

    pub fn component(&self, axis: Axis) -> &ScalarField {
        match axis {
            Axis::X => &self.ax,
            Axis::Y => &self.ay,
        }
    }

    pub fn evaluate(&self, x: f64, y: f64) -> [f64; 2] {
        [self.ax.evaluate(x, y), self.ay.evaluate(x, y)]
    }

    /// `∂x A_y − ∂y A_x` from the analytic gradients.
    pub fn curl(&self, x: f64, y: f64) -> f64 {
        self.ay.gradient(x, y)[0] - self.ax.gradient(x, y)[1]
    }

    pub fn is_zero(&self) -> bool {
        self.ax == ScalarField::zero() && self.ay == ScalarField::zero()
    }
}

/// Uniform field `B ẑ` in the `symmetric` gauge `(−By/2, Bx/2)` or the
/// `landau-x` gauge `(−By, 0)`.
pub fn make_vector_potential(gauge: &str, b: f64) -> Result<VectorPotential> {
    if !b.is_finite() {
        return Err(PdmError::InvalidParameter(format!(
            "magnetic field must be finite, got {b}"
        )));
    }
    match gauge {
        "symmetric" => Ok(VectorPotential {
            ax: ScalarField::Linear {
                c0: 0.0,
                cx: 0.0,
                cy: -0.5 * b,
            },
            ay: ScalarField::Linear {
                c0: 0.0,
                cx: 0.5 * b,
                cy: 0.0,
            },
        }),
        "landau-x" => Ok(VectorPotential {
            ax: ScalarField::Linear {
                c0: 0.0,
                cx: 0.0,
                cy: -b,
            },
            ay: ScalarField::zero(),
        }),
        other => Err(PdmError::UnknownKind {
            what: "gauge",
            kind: other.to_string(),
        }),
    }
}

/// `A + ∇χ`.
pub fn gauge_transform(a: &VectorPotential, chi: &ScalarField) -> VectorPotential {
    let shift = |base: &ScalarField, axis| ScalarField::Shifted {
        base: Box::new(base.clone()),
        chi: Box::new(chi.clone()),
        axis,
    };
    VectorPotential {
        ax: shift(&a.ax, Axis::X),
        ay: shift(&a.ay, Axis::Y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> Vec<ScalarField> {
        vec![
            ScalarField::Constant { c: 2.5 },
            ScalarField::Linear {
                c0: 0.3,
                cx: -1.2,
                cy: 0.7,
            },
            ScalarField::Bilinear { c: -0.8 },
            ScalarField::Harmonic { k: 1.7 },
            ScalarField::RationalBump { m0: 1.3, a: 0.9 },
            ScalarField::Quadratic {
                m0: 0.7,
                lambda: 0.4,
            },
        ]
    }

    fn lattice() -> impl Iterator<Item = (f64, f64)> {
        (0..10).flat_map(|i| {
            (0..10).map(move |j| (-2.0 + 4.0 * i as f64 / 9.0, -2.0 + 4.0 * j as f64 / 9.0))
        })
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn gradients_match_central_differences() {
        let e = 1e-5;
        for f in catalog() {
            for (x, y) in lattice() {
                let g = f.gradient(x, y);
                let fx = (f.evaluate(x + e, y) - f.evaluate(x - e, y)) / (2.0 * e);
                let fy = (f.evaluate(x, y + e) - f.evaluate(x, y - e)) / (2.0 * e);
                assert!(close(g[0], fx, 1e-6), "{f:?} at ({x},{y}): {} vs {fx}", g[0]);
                assert!(close(g[1], fy, 1e-6), "{f:?} at ({x},{y}): {} vs {fy}", g[1]);
            }
        }
    }

    #[test]
    fn hessians_match_central_differences() {
        let e = 1e-5;
        for f in catalog() {
            for (x, y) in lattice() {
                let h = f.hessian(x, y).unwrap();
                let gx = f.gradient(x + e, y);
                let gxm = f.gradient(x - e, y);
                let gy = f.gradient(x, y + e);
                let gym = f.gradient(x, y - e);
                assert!(close(h[0][0], (gx[0] - gxm[0]) / (2.0 * e), 1e-6));
                assert!(close(h[0][1], (gx[1] - gxm[1]) / (2.0 * e), 1e-6));
                assert!(close(h[1][0], (gy[0] - gym[0]) / (2.0 * e), 1e-6));
                assert!(close(h[1][1], (gy[1] - gym[1]) / (2.0 * e), 1e-6));
            }
        }
    }

    #[test]
    fn mass_catalog_examples() {
        let m = MassProfile::constant(2.0).unwrap();
        assert_eq!(m.evaluate(3.7, -1.0), 2.0);
        assert_eq!(m.gradient(3.7, -1.0), [0.0, 0.0]);

        let m = MassProfile::quadratic(1.0, 1.0).unwrap();
        assert_eq!(m.evaluate(1.0, 0.0), 2.0);
        assert_eq!(m.gradient(1.0, 0.0), [2.0, 0.0]);

        // d/dx [1/(1+x²)] = -2x/(1+x²)² = -0.5 at x = 1
        let m = MassProfile::rational_bump(1.0, 1.0).unwrap();
        assert_eq!(m.evaluate(1.0, 0.0), 0.5);
        let g = m.gradient(1.0, 0.0);
        assert!((g[0] + 0.5).abs() < 1e-15 && g[1] == 0.0);
        let e = 1e-6;
        let fd = (m.evaluate(1.0 + e, 0.0) - m.evaluate(1.0 - e, 0.0)) / (2.0 * e);
        assert!((fd + 0.5).abs() < 1e-9);
    }

    #[test]
    fn mass_catalog_rejects_bad_parameters() {
        assert!(matches!(
            make_mass_profile("gaussian", &[1.0]),
            Err(PdmError::UnknownKind { .. })
        ));
        assert!(MassProfile::constant(0.0).is_err());
        assert!(MassProfile::constant(-1.0).is_err());
        assert!(MassProfile::rational_bump(1.0, 0.0).is_err());
        assert!(MassProfile::quadratic(1.0, -0.1).is_err());
        assert!(make_mass_profile("quadratic", &[1.0]).is_err());
    }

    #[test]
    fn vector_potential_catalog() {
        let a = make_vector_potential("symmetric", 1.0).unwrap();
        assert_eq!(a.evaluate(2.0, 4.0), [-2.0, 1.0]);
        let a = make_vector_potential("landau-x", 1.0).unwrap();
        assert_eq!(a.evaluate(2.0, 4.0), [-4.0, 0.0]);
        let a = make_vector_potential("symmetric", 0.0).unwrap();
        for (x, y) in lattice() {
            assert_eq!(a.evaluate(x, y), [0.0, 0.0]);
        }
        assert!(make_vector_potential("coulomb", 1.0).is_err());
    }

    #[test]
    fn curl_equals_field_in_both_gauges() {
        for b in [-1.5, 0.0, 1.0, 3.0] {
            for gauge in ["symmetric", "landau-x"] {
                let a = make_vector_potential(gauge, b).unwrap();
                for (x, y) in lattice() {
                    assert_eq!(a.curl(x, y), b);
                }
            }
        }
    }

    #[test]
    fn gauge_transform_examples() {
        let a = gauge_transform(&VectorPotential::zero(), &ScalarField::Bilinear { c: 1.0 });
        for (x, y) in lattice() {
            assert_eq!(a.evaluate(x, y), [y, x]);
        }

        let b = 1.3;
        let sym = make_vector_potential("symmetric", b).unwrap();
        let landau = make_vector_potential("landau-x", b).unwrap();
        let shifted = gauge_transform(&sym, &ScalarField::Bilinear { c: -0.5 * b });
        for (x, y) in lattice() {
            let p = shifted.evaluate(x, y);
            let q = landau.evaluate(x, y);
            assert!((p[0] - q[0]).abs() < 1e-14 && (p[1] - q[1]).abs() < 1e-14);
        }

        let same = gauge_transform(&sym, &ScalarField::Constant { c: 4.0 });
        for (x, y) in lattice() {
            assert_eq!(same.evaluate(x, y), sym.evaluate(x, y));
        }
    }

    #[test]
    fn magnetic_field_is_gauge_invariant() {
        let sym = make_vector_potential("symmetric", 0.9).unwrap();
        for chi in catalog() {
            let shifted = gauge_transform(&sym, &chi);
            for (x, y) in lattice() {
                assert!((shifted.curl(x, y) - sym.curl(x, y)).abs() <= 1e-10);
            }
        }
    }
}
