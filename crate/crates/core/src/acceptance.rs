//! The acceptance suite behind `pdmlab validate`.
//!
//! Each criterion is a small self-contained experiment with a pinned
//! tolerance. Tolerances can be overridden, which is how the failure path of
//! the suite is exercised.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classical::{conservation_summary, flow_gradient_mismatch, integrate_trajectory, ClassicalState, ClassicalSystem};
use crate::cli::{self, CliError, Command, CompareConfig, FieldConfig, GaugeConfig, GridConfig, OrderingConfig, RunConfig, SpectrumConfig};
use crate::error::{PdmError, Result};
use crate::evolution::{ehrenfest_check, PacketParams};
use crate::fields::{gauge_transform, make_vector_potential, MassProfile, PhysicalConstants, ScalarField, VectorPotential};
use crate::grid::{make_grid, Grid1D, Grid2D};
use crate::linop::LinearOperator;
use crate::operators::{
    build_corrected_hamiltonian, build_dutra_oliveira_hamiltonian, build_expanded_hamiltonian, build_hamiltonian,
    build_von_roos, consistency_gap, Builder, OrderingParams, Physics,
};
use crate::spectral::{solve_lowest, Method};

pub const IDS: [&str; 12] = [
    "c01-constant-mass-collapse",
    "c02-landau-levels",
    "c03-harmonic-oscillator",
    "c04-factorization-identity",
    "c05-expanded-equals-corrected",
    "c06-gauge-invariance",
    "c07-builders-distinct",
    "c08-orderings-distinct",
    "c09-hermiticity",
    "c10-classical-conservation",
    "c11-ehrenfest",
    "c12-determinism",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative to `‖H‖_max`.
    pub collapse: f64,
    pub landau_rel: f64,
    pub landau_seconds: f64,
    pub oscillator_rel: f64,
    /// Expected error ratio per halving of `h`, and its relative band.
    pub order_ratio: f64,
    pub order_band: f64,
    pub gauge_rel: f64,
    /// Relative to `‖H‖_max`.
    pub hermiticity: f64,
    pub dense_vs_lanczos: f64,
    pub conservation: f64,
    pub flow_rel: f64,
    pub ehrenfest_const: f64,
    pub ehrenfest_naive: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            collapse: 1e-12,
            landau_rel: 0.03,
            landau_seconds: 60.0,
            oscillator_rel: 0.01,
            order_ratio: 4.0,
            order_band: 0.2,
            gauge_rel: 0.02,
            hermiticity: 1e-13,
            dense_vs_lanczos: 1e-9,
            conservation: 1e-8,
            flow_rel: 1e-6,
            ehrenfest_const: 1e-3,
            ehrenfest_naive: 1e-2,
        }
    }
}

/// Config accepted by `pdmlab validate --config`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Subset of [`IDS`] to run; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!("{verdict} {:<30} {:>7.1}s  {}", self.id, self.seconds, self.detail)
    }
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

pub fn run(id: &str, tol: &Tolerances, threads: usize) -> Result<CriterionResult> {
    let id = IDS.iter().copied().find(|&k| k == id).ok_or_else(|| PdmError::UnknownKind {
        what: "criterion",
        kind: id.to_string(),
    })?;
    let start = Instant::now();
    let result = match id {
        "c01-constant-mass-collapse" => constant_mass_collapse(tol),
        "c02-landau-levels" => landau_levels(tol),
        "c03-harmonic-oscillator" => harmonic_oscillator(tol),
        "c04-factorization-identity" => factorization_identity(tol),
        "c05-expanded-equals-corrected" => expanded_equals_corrected(tol),
        "c06-gauge-invariance" => gauge_invariance(tol, threads),
        "c07-builders-distinct" => builders_distinct(threads),
        "c08-orderings-distinct" => orderings_distinct(threads),
        "c09-hermiticity" => hermiticity(tol),
        "c10-classical-conservation" => classical_conservation(tol),
        "c11-ehrenfest" => ehrenfest(tol),
        "c12-determinism" => determinism(),
        _ => unreachable!("every id has a criterion"),
    };
    let (passed, detail) = match result {
        Ok(o) => (o.passed, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    Ok(CriterionResult {
        id,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all(tol: &Tolerances, threads: usize) -> Vec<CriterionResult> {
    IDS.iter()
        .map(|id| run(id, tol, threads).expect("known id"))
        .collect()
}

pub fn run_selected(cfg: &ValidateConfig, threads: usize) -> Result<Vec<CriterionResult>> {
    match &cfg.criteria {
        None => Ok(run_all(&cfg.tolerances, threads)),
        Some(ids) => ids.iter().map(|id| run(id, &cfg.tolerances, threads)).collect(),
    }
}

/// 0 when every criterion passed, 1 otherwise.
pub fn exit_code(results: &[CriterionResult]) -> i32 {
    if !results.is_empty() && results.iter().all(|r| r.passed) {
        0
    } else {
        1
    }
}

// ---------------------------------------------------------------- helpers

const UNITS: PhysicalConstants = PhysicalConstants {
    hbar: 1.0,
    charge: 1.0,
};

fn square(n: usize, half: f64) -> Result<Grid2D> {
    make_grid(n, n, [-half, half, -half, half])
}

fn rel_gap(a: &LinearOperator, b: &LinearOperator) -> Result<f64> {
    Ok(a.sub(b)?.max_abs() / a.max_abs().max(b.max_abs()))
}

fn within_band(ratio: f64, tol: &Tolerances) -> bool {
    (ratio - tol.order_ratio).abs() <= tol.order_band * tol.order_ratio
}

fn physics(mass: MassProfile, a: VectorPotential, v: ScalarField) -> Physics {
    Physics {
        mass,
        vector_potential: a,
        potential: v,
        ordering: OrderingParams::default(),
        constants: UNITS,
    }
}

fn lowest(h: &LinearOperator, k: usize) -> Result<Vec<f64>> {
    Ok(solve_lowest(h, k, Method::Lanczos, 1e-9, 0)?.eigenvalues)
}

fn max_rel_error(got: &[f64], want: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(g, w)| ((g - w) / w).abs())
        .fold(0.0, f64::max)
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.5}")).collect();
    format!("[{}]", items.join(", "))
}

fn cli_error(e: CliError) -> PdmError {
    match e {
        CliError::Pdm(e) => e,
        other => PdmError::InvalidParameter(other.to_string()),
    }
}

fn potentials() -> [ScalarField; 5] {
    [
        ScalarField::zero(),
        ScalarField::Constant { c: 0.3 },
        ScalarField::Linear { c0: 0.1, cx: 0.4, cy: -0.2 },
        ScalarField::Bilinear { c: 0.5 },
        ScalarField::Harmonic { k: 1.0 },
    ]
}

// ---------------------------------------------------------------- criteria

fn constant_mass_collapse(tol: &Tolerances) -> Result<Outcome> {
    let g = make_grid(12, 14, [-2.0, 2.0, -1.5, 2.5])?;
    let m = MassProfile::constant(1.7)?;
    let mut orderings: f64 = 0.0;
    for v in &potentials() {
        let hs = [OrderingParams::ZHU_KROEMER, OrderingParams::MM, OrderingParams::BEN_DANIEL_DUKE]
            .map(|o| build_von_roos(&g, &m, &o, v, &UNITS));
        let [zk, mm, bdd] = hs;
        let (zk, mm, bdd) = (zk?, mm?, bdd?);
        orderings = orderings.max(rel_gap(&zk, &mm)?).max(rel_gap(&zk, &bdd)?);
    }

    let symmetric = make_vector_potential("symmetric", 1.0)?;
    let gauges = [
        VectorPotential::zero(),
        make_vector_potential("landau-x", 0.7)?,
        gauge_transform(&symmetric, &ScalarField::Bilinear { c: 0.3 }),
        symmetric,
    ];
    let mut builders: f64 = 0.0;
    for a in &gauges {
        for v in &potentials() {
            let hc = build_corrected_hamiltonian(&g, &m, a, v, &UNITS)?;
            let he = build_expanded_hamiltonian(&g, &m, a, v, &UNITS)?.symmetrized;
            let hd = build_dutra_oliveira_hamiltonian(&g, &m, a, v, &OrderingParams::MM, &UNITS)?;
            builders = builders.max(rel_gap(&hc, &he)?).max(rel_gap(&hc, &hd)?);
        }
    }
    outcome(
        orderings <= tol.collapse && builders <= tol.collapse,
        format!(
            "orderings {orderings:.2e}, builders {builders:.2e} (limit {:.0e} x |H|max)",
            tol.collapse
        ),
    )
}

fn landau_levels(tol: &Tolerances) -> Result<Outcome> {
    let start = Instant::now();
    let g = square(64, 8.0)?;
    let p = physics(MassProfile::constant(1.0)?, make_vector_potential("symmetric", 1.0)?, ScalarField::zero());
    let h = build_hamiltonian(Builder::Corrected, &g, &p)?;
    let e = lowest(&h, 5)?;
    let seconds = start.elapsed().as_secs_f64();
    let err = max_rel_error(&e, &[0.5; 5]);
    outcome(
        err <= tol.landau_rel && seconds <= tol.landau_seconds,
        format!("lowest 5 {} max rel err {err:.2e}, build+solve {seconds:.1}s", fmt_list(&e)),
    )
}

fn harmonic_oscillator(tol: &Tolerances) -> Result<Outcome> {
    let g = square(64, 8.0)?;
    let p = physics(MassProfile::constant(1.0)?, VectorPotential::zero(), ScalarField::Harmonic { k: 1.0 });
    let h = build_hamiltonian(Builder::Corrected, &g, &p)?;
    let e = lowest(&h, 6)?;
    let err = max_rel_error(&e, &[1.0, 2.0, 2.0, 3.0, 3.0, 3.0]);
    outcome(err <= tol.oscillator_rel, format!("lowest 6 {} max rel err {err:.2e}", fmt_list(&e)))
}

fn sweep<T>(f: impl Fn(&Grid2D) -> Result<T>) -> Result<Vec<T>> {
    [16, 32, 64].into_iter().map(|n| f(&square(n, 1.5)?)).collect()
}

fn ratios(v: &[f64]) -> [f64; 2] {
    [v[0] / v[1], v[1] / v[2]]
}

fn fmt_sci(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    items.join(" ")
}

fn factorization_identity(tol: &Tolerances) -> Result<Outcome> {
    let m = MassProfile::quadratic(1.0, 0.5)?;
    let v = ScalarField::zero();
    let levels = sweep(|g| {
        let hc = build_corrected_hamiltonian(g, &m, &VectorPotential::zero(), &v, &UNITS)?;
        let hv = build_von_roos(g, &m, &OrderingParams::MM, &v, &UNITS)?;
        Ok([consistency_gap(&hc, &hv, g)?, hc.sub(&hv)?.max_abs()])
    })?;
    let gaps: Vec<f64> = levels.iter().map(|l| l[0]).collect();
    let entry: Vec<f64> = levels.iter().map(|l| l[1]).collect();
    let r = ratios(&gaps);
    outcome(
        r.iter().all(|&x| within_band(x, tol)),
        format!(
            "probe gaps {} ratios {:.3} {:.3}; entrywise {}",
            fmt_sci(&gaps),
            r[0],
            r[1],
            fmt_sci(&entry)
        ),
    )
}

fn expanded_equals_corrected(tol: &Tolerances) -> Result<Outcome> {
    let m = MassProfile::quadratic(1.0, 0.1)?;
    let a = make_vector_potential("symmetric", 1.0)?;
    let v = ScalarField::zero();
    let levels = sweep(|g| {
        let hc = build_corrected_hamiltonian(g, &m, &a, &v, &UNITS)?;
        let he = build_expanded_hamiltonian(g, &m, &a, &v, &UNITS)?;
        Ok([
            consistency_gap(&he.symmetrized, &hc, g)?,
            he.hermiticity_defect,
            he.symmetrized.sub(&hc)?.max_abs(),
        ])
    })?;
    let column = |c: usize| -> Vec<f64> { levels.iter().map(|l| l[c]).collect() };
    let (gaps, defects, entry) = (column(0), column(1), column(2));
    let (rg, rd) = (ratios(&gaps), ratios(&defects));
    outcome(
        rg.iter().chain(&rd).all(|&x| within_band(x, tol)),
        format!(
            "probe gap ratios {:.3} {:.3}; literal defect {} ratios {:.3} {:.3}; entrywise {}",
            rg[0],
            rg[1],
            fmt_sci(&defects),
            rd[0],
            rd[1],
            fmt_sci(&entry)
        ),
    )
}

fn gauge_invariance(tol: &Tolerances, threads: usize) -> Result<Outcome> {
    let mass = MassProfile::rational_bump(1.0, 1.0)?;
    let mut jobs = Vec::new();
    for n in [64, 32] {
        let g = square(n, 8.0)?;
        for gauge in ["symmetric", "landau-x"] {
            let p = physics(mass.clone(), make_vector_potential(gauge, 1.0)?, ScalarField::zero());
            jobs.push(build_hamiltonian(Builder::Corrected, &g, &p)?);
        }
    }
    let spectra = cli::parallel_map(&jobs, threads, |h| lowest(h, 5))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let disagreement = |a: &[f64], b: &[f64]| max_rel_error(b, a);
    let fine = disagreement(&spectra[0], &spectra[1]);
    let coarse = disagreement(&spectra[2], &spectra[3]);
    outcome(
        fine <= tol.gauge_rel && fine < coarse,
        format!(
            "64x64 symmetric {} landau-x {} max rel diff {fine:.2e}; 32x32 {coarse:.2e}",
            fmt_list(&spectra[0]),
            fmt_list(&spectra[1])
        ),
    )
}

fn compare_config(mass: FieldConfig, potential: FieldConfig, gauge: Option<GaugeConfig>, compare: CompareConfig) -> RunConfig {
    RunConfig {
        constants: Default::default(),
        grid: Some(GridConfig {
            nx: 64,
            ny: 64,
            bounds: [-8.0, 8.0, -8.0, 8.0],
        }),
        mass,
        potential,
        gauge,
        ordering: OrderingConfig::default(),
        solver: Default::default(),
        spectrum: None,
        compare: Some(compare),
        classical: None,
        evolve: None,
    }
}

fn verdict_of(cfg: &RunConfig, threads: usize) -> Result<Outcome> {
    let report = cli::execute(Command::Compare, cfg, threads).map_err(|f| cli_error(f.error))?;
    let json: serde_json::Value =
        serde_json::from_slice(&report.files["compare.json"]).map_err(|e| PdmError::InvalidParameter(e.to_string()))?;
    let verdict = json["verdict"].as_str().unwrap_or_default().to_string();
    let cmp = &json["comparison"];
    let levels: Vec<String> = cmp["report"]["levels"]
        .as_array()
        .map(|ls| {
            ls.iter()
                .map(|l| format!("{:.4}/{:.4}", l["e1"].as_f64().unwrap_or(f64::NAN), l["e2"].as_f64().unwrap_or(f64::NAN)))
                .collect()
        })
        .unwrap_or_default();
    outcome(
        verdict == "distinct",
        format!(
            "verdict \"{verdict}\", max gap/error {:.1}; levels {}",
            cmp["max_gap_over_error"].as_f64().unwrap_or(f64::NAN),
            levels.join(" ")
        ),
    )
}

fn builders_distinct(threads: usize) -> Result<Outcome> {
    let cfg = compare_config(
        FieldConfig::new("rational-bump", &[("m0", 1.0), ("a", 1.0)]),
        FieldConfig::new("zero", &[]),
        Some(GaugeConfig {
            kind: "symmetric".into(),
            b: 1.0,
        }),
        CompareConfig {
            builders: Some([Builder::Corrected, Builder::DutraOliveira]),
            orderings: None,
            builder: None,
        },
    );
    verdict_of(&cfg, threads)
}

fn orderings_distinct(threads: usize) -> Result<Outcome> {
    let cfg = compare_config(
        FieldConfig::new("quadratic", &[("m0", 1.0), ("lambda", 1.0)]),
        FieldConfig::new("harmonic", &[("k", 1.0)]),
        None,
        CompareConfig {
            builders: None,
            orderings: Some([OrderingConfig::Preset("zk".into()), OrderingConfig::Preset("mm".into())]),
            builder: Some(Builder::VonRoos),
        },
    );
    verdict_of(&cfg, threads)
}

fn hermiticity(tol: &Tolerances) -> Result<Outcome> {
    let g = square(20, 3.0)?;
    let m = MassProfile::rational_bump(1.0, 1.0)?;
    let a = make_vector_potential("symmetric", 1.0)?;
    let v = ScalarField::Harmonic { k: 0.5 };
    let ops = [
        build_von_roos(&g, &m, &OrderingParams::ZHU_KROEMER, &v, &UNITS)?,
        build_von_roos(&g, &m, &OrderingParams::MM, &v, &UNITS)?,
        build_corrected_hamiltonian(&g, &m, &a, &v, &UNITS)?,
        build_expanded_hamiltonian(&g, &m, &a, &v, &UNITS)?.symmetrized,
        build_dutra_oliveira_hamiltonian(&g, &m, &a, &v, &OrderingParams::ZHU_KROEMER, &UNITS)?,
    ];
    let worst = ops
        .iter()
        .map(|h| h.hermiticity_defect() / h.max_abs())
        .fold(0.0, f64::max);

    let h = &ops[2];
    let dense = solve_lowest(h, 5, Method::Dense, 1e-10, 0)?.eigenvalues;
    let lanczos = solve_lowest(h, 5, Method::Lanczos, 1e-10, 0)?.eigenvalues;
    let agreement = max_rel_error(&lanczos, &dense);
    outcome(
        worst <= tol.hermiticity && agreement <= tol.dense_vs_lanczos,
        format!("worst defect {worst:.2e} x |H|max; dense vs Lanczos rel {agreement:.2e}"),
    )
}

fn classical_conservation(tol: &Tolerances) -> Result<Outcome> {
    let bump = MassProfile::rational_bump(1.0, 1.0)?;
    let zero = VectorPotential::zero();
    let v = ScalarField::zero();
    let free = ClassicalSystem {
        mass: &bump,
        vector_potential: &zero,
        potential: &v,
        constants: &UNITS,
    };
    let traj = integrate_trajectory(&ClassicalState::new(-1.5, 0.4, 0.6, -0.1), &free, 10.0, 1e-3)
        .map_err(|abort| abort.source)?;
    let s = conservation_summary(&traj, &free)?;

    let a = make_vector_potential("symmetric", 1.0)?;
    let osc = ScalarField::Harmonic { k: 1.0 };
    let driven = ClassicalSystem {
        mass: &bump,
        vector_potential: &a,
        potential: &osc,
        constants: &UNITS,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut flow: f64 = 0.0;
    for _ in 0..100 {
        let z: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        let state = ClassicalState::new(z[0], z[1], z[2], z[3]);
        flow = flow.max(flow_gradient_mismatch(&state, &driven, 1e-5)?);
    }
    outcome(
        s.energy_drift <= tol.conservation && s.pi_squared_drift <= tol.conservation && flow <= tol.flow_rel,
        format!(
            "energy drift {:.2e}, |Pi|^2 drift {:.2e}, flow vs gradient {flow:.2e}",
            s.energy_drift, s.pi_squared_drift
        ),
    )
}

fn ehrenfest(tol: &Tolerances) -> Result<Outcome> {
    let g = Grid1D::new(999, -10.0, 10.0)?;
    let packet = PacketParams {
        x0: 0.5,
        sigma: 0.7,
        k0: 2.0,
    };
    let residual = |m: MassProfile| -> Result<f64> {
        Ok(ehrenfest_check(&g, &m, &ScalarField::zero(), &UNITS, &packet, 1e-3, 1000)?.residual)
    };
    let constant = residual(MassProfile::constant(1.0)?)?;
    let naive = residual(MassProfile::quadratic(1.0, 1.0)?)?;
    outcome(
        constant <= tol.ehrenfest_const && naive > tol.ehrenfest_naive,
        format!("constant mass {constant:.2e}, position-dependent mass {naive:.2e}"),
    )
}

fn determinism() -> Result<Outcome> {
    let cfg = RunConfig {
        constants: Default::default(),
        grid: Some(GridConfig {
            nx: 24,
            ny: 20,
            bounds: [-4.0, 4.0, -3.5, 3.5],
        }),
        mass: FieldConfig::new("rational-bump", &[("m0", 1.0), ("a", 1.0)]),
        potential: FieldConfig::new("harmonic", &[("k", 0.3)]),
        gauge: Some(GaugeConfig {
            kind: "symmetric".into(),
            b: 0.5,
        }),
        ordering: OrderingConfig::default(),
        solver: cli::SolverConfig {
            seed: 42,
            ..Default::default()
        },
        spectrum: Some(SpectrumConfig {
            builder: Builder::Corrected,
            dump_operator: true,
        }),
        compare: None,
        classical: None,
        evolve: None,
    };
    let run = || cli::execute(Command::Spectrum, &cfg, 1).map_err(|f| cli_error(f.error));
    let (first, second) = (run()?.files, run()?.files);
    let bytes: usize = first.values().map(Vec::len).sum();
    outcome(
        first == second && !first.is_empty(),
        format!("{} files, {bytes} bytes, identical: {}", first.len(), first == second),
    )
}
