//! Config-driven command-line front end.
//!
//! Every command reads one strict JSON config, builds its reports in memory
//! and writes them into the output directory. Report bytes depend only on the
//! config, so repeated runs are byte-identical; wall-clock times go to a
//! separate `timing.json`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::acceptance;
use crate::classical::{conservation_summary, integrate_trajectory, write_trajectory_csv, ClassicalState, ClassicalSystem};
use crate::error::PdmError;
use crate::evolution::{ehrenfest_check, write_series_csv, PacketParams};
use crate::fields::{make_mass_profile, make_vector_potential, PhysicalConstants, ScalarField, VectorPotential};
use crate::grid::{make_grid, Grid1D, Grid2D};
use crate::linop::LinearOperator;
use crate::operators::{build_expanded_hamiltonian, build_hamiltonian, make_ordering, Builder, OrderingParams, Physics};
use crate::spectral::{distinguish, solve_lowest, Method, RefinedSpectrum, Spectrum};

/// Report files keyed by name.
pub type Outputs = BTreeMap<String, Vec<u8>>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Pdm(#[from] PdmError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    /// 2 for bad input, 3 for solver failures, 4 for unphysical fields.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Pdm(e) => match e {
                PdmError::NonConvergence { .. }
                | PdmError::NotHermitian { .. }
                | PdmError::LinearSolve(_)
                | PdmError::Unnormalized { .. } => 3,
                PdmError::NonPositiveMass { .. } | PdmError::NonFinite { .. } => 4,
                PdmError::UnknownKind { .. }
                | PdmError::InvalidParameter(_)
                | PdmError::InvalidGrid(_)
                | PdmError::OrderingConstraint { .. }
                | PdmError::Unsupported(_)
                | PdmError::DimensionMismatch { .. } => 2,
            },
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

// ---------------------------------------------------------------- config

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "one")]
    pub charge: f64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self { hbar: 1.0, charge: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    /// `[xmin, xmax, ymin, ymax]`
    pub bounds: [f64; 4],
}

/// A catalog field with named parameters, e.g.
/// `{"kind": "rational-bump", "params": {"m0": 1, "a": 1}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl FieldConfig {
    pub fn new(kind: &str, params: &[(&str, f64)]) -> Self {
        Self {
            kind: kind.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    fn zero() -> Self {
        Self::new("zero", &[])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeConfig {
    pub kind: String,
    #[serde(rename = "B")]
    pub b: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitOrdering {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// A preset name (`zk`, `mm`, `bdd`, ...) or explicit parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum OrderingConfig {
    Preset(String),
    Explicit(ExplicitOrdering),
}

impl<'de> Deserialize<'de> for OrderingConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::String(name) => Ok(OrderingConfig::Preset(name)),
            other => ExplicitOrdering::deserialize(other)
                .map(OrderingConfig::Explicit)
                .map_err(|e| D::Error::custom(format!("ordering: {e}"))),
        }
    }
}

impl Default for OrderingConfig {
    fn default() -> Self {
        OrderingConfig::Preset("zhu-kroemer".into())
    }
}

impl OrderingConfig {
    pub fn resolve(&self) -> Result<OrderingParams, CliError> {
        Ok(match self {
            OrderingConfig::Preset(name) => OrderingParams::from_preset(name)?,
            OrderingConfig::Explicit(o) => make_ordering(o.alpha, o.beta, o.gamma)?,
        })
    }

    fn label(&self) -> String {
        match self {
            OrderingConfig::Preset(name) => name.clone(),
            OrderingConfig::Explicit(o) => format!("({}, {}, {})", o.alpha, o.beta, o.gamma),
        }
    }
}

fn explicit(o: OrderingParams) -> OrderingConfig {
    OrderingConfig::Explicit(ExplicitOrdering {
        alpha: o.alpha,
        beta: o.beta,
        gamma: o.gamma,
    })
}

fn default_k() -> usize {
    5
}

fn default_method() -> Method {
    Method::Lanczos
}

fn default_tol() -> f64 {
    1e-9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            k: default_k(),
            method: default_method(),
            tol: default_tol(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub builder: Builder,
    /// Also write the assembled matrix as `operator.coo`.
    #[serde(default)]
    pub dump_operator: bool,
}

/// Either two builders on the same physics, or two orderings under one
/// builder (von Roos unless `builder` says otherwise).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builders: Option<[Builder; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orderings: Option<[OrderingConfig; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builder: Option<Builder>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalConfig {
    pub state0: ClassicalState,
    pub t_end: f64,
    pub dt: f64,
}

/// 1D wavepacket run on `n` interior nodes of `[bounds[0], bounds[1]]`;
/// the fields are read along `y = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    pub n: usize,
    pub bounds: [f64; 2],
    pub packet: PacketParams,
    pub dt: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    pub mass: FieldConfig,
    #[serde(default = "FieldConfig::zero")]
    pub potential: FieldConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge: Option<GaugeConfig>,
    #[serde(default)]
    pub ordering: OrderingConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classical: Option<ClassicalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolve: Option<EvolveConfig>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Mass,
    Potential,
}

fn param_names(kind: &str, role: Role) -> Option<&'static [&'static str]> {
    Some(match (kind, role) {
        ("constant", Role::Mass) => &["m0"],
        ("constant", Role::Potential) => &["c"],
        ("zero", Role::Potential) => &[],
        ("linear", Role::Potential) => &["c0", "cx", "cy"],
        ("bilinear", Role::Potential) => &["c"],
        ("harmonic", Role::Potential) => &["k"],
        ("rational-bump", _) => &["m0", "a"],
        ("quadratic", _) => &["m0", "lambda"],
        _ => return None,
    })
}

/// Positional parameters in catalog order.
fn positional(field: &FieldConfig, role: Role) -> Result<Vec<f64>, CliError> {
    let what = match role {
        Role::Mass => "mass profile",
        Role::Potential => "potential",
    };
    let names = param_names(&field.kind, role).ok_or_else(|| PdmError::UnknownKind {
        what,
        kind: field.kind.clone(),
    })?;
    if let Some(extra) = field.params.keys().find(|k| !names.contains(&k.as_str())) {
        return Err(CliError::Config(format!(
            "{what} `{}` has no parameter `{extra}` (expected {names:?})",
            field.kind
        )));
    }
    names
        .iter()
        .map(|n| {
            field.params.get(*n).copied().ok_or_else(|| {
                CliError::Config(format!("{what} `{}` is missing parameter `{n}`", field.kind))
            })
        })
        .collect()
}

/// A config checked and turned into physics objects, before any heavy work.
struct Setup {
    physics: Physics,
    resolved: RunConfig,
}

impl Setup {
    fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let constants = PhysicalConstants::new(cfg.constants.hbar, cfg.constants.charge)?;
        let mass = make_mass_profile(&cfg.mass.kind, &positional(&cfg.mass, Role::Mass)?)?;
        let potential = ScalarField::from_catalog(&cfg.potential.kind, &positional(&cfg.potential, Role::Potential)?)?;
        let vector_potential = match &cfg.gauge {
            Some(g) => make_vector_potential(&g.kind, g.b)?,
            None => VectorPotential::zero(),
        };
        let ordering = cfg.ordering.resolve()?;
        let solver = &cfg.solver;
        if solver.k == 0 {
            return Err(CliError::Config("solver.k must be at least 1".into()));
        }
        if !(solver.tol.is_finite() && solver.tol > 0.0) {
            return Err(CliError::Config(format!("solver.tol must be positive, got {}", solver.tol)));
        }

        let mut resolved = cfg.clone();
        resolved.ordering = explicit(ordering);
        if let Some(pair) = resolved.compare.as_mut().and_then(|c| c.orderings.as_mut()) {
            for o in pair.iter_mut() {
                *o = explicit(o.resolve()?);
            }
        }
        Ok(Self {
            physics: Physics {
                mass,
                vector_potential,
                potential,
                ordering,
                constants,
            },
            resolved,
        })
    }

    fn grid(&self) -> Result<Grid2D, CliError> {
        let g = self
            .resolved
            .grid
            .as_ref()
            .ok_or_else(|| CliError::Config("missing `grid` block".into()))?;
        Ok(make_grid(g.nx, g.ny, g.bounds)?)
    }

    fn check_k(&self, grid: &Grid2D) -> Result<(), CliError> {
        let dim = grid.nx() * grid.ny();
        let k = self.resolved.solver.k;
        if k > dim / 4 {
            return Err(CliError::Config(format!(
                "solver.k = {k} is too large for a {}x{} grid (at most {})",
                grid.nx(),
                grid.ny(),
                dim / 4
            )));
        }
        Ok(())
    }

    fn solve(&self, h: &LinearOperator) -> Result<Spectrum, CliError> {
        let s = &self.resolved.solver;
        Ok(solve_lowest(h, s.k, s.method, s.tol, s.seed)?)
    }

    fn config_json(&self) -> Value {
        serde_json::to_value(&self.resolved).expect("config serializes")
    }
}

fn block<'a, T>(b: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    b.as_ref()
        .ok_or_else(|| CliError::Config(format!("missing `{name}` block")))
}

// ---------------------------------------------------------------- commands

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Compare,
    Classical,
    Evolve,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Compare => "compare",
            Command::Classical => "classical",
            Command::Evolve => "evolve",
        }
    }
}

/// Files produced by a command, plus wall-clock timings kept apart so the
/// files stay reproducible.
#[derive(Clone, Debug)]
pub struct Report {
    /// The config with defaults filled in and orderings made explicit.
    pub config: RunConfig,
    pub files: Outputs,
    pub timing: BTreeMap<String, f64>,
}

/// A failed command and whatever it produced before failing.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct Failure {
    pub error: CliError,
    pub partial: Outputs,
}

impl<E: Into<CliError>> From<E> for Failure {
    fn from(e: E) -> Self {
        Self {
            error: e.into(),
            partial: Outputs::new(),
        }
    }
}

pub fn execute(command: Command, config: &RunConfig, threads: usize) -> Result<Report, Failure> {
    let setup = Setup::new(config)?;
    match command {
        Command::Spectrum => Ok(spectrum(&setup)?),
        Command::Compare => Ok(compare(&setup, threads)?),
        Command::Classical => classical(&setup),
        Command::Evolve => Ok(evolve(&setup)?),
    }
}

fn to_json(value: &Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
    bytes.push(b'\n');
    bytes
}

fn grid_meta(g: &Grid2D) -> Value {
    json!({
        "nx": g.nx(),
        "ny": g.ny(),
        "bounds": g.bounds(),
        "hx": g.hx(),
        "hy": g.hy(),
        "dim": g.nx() * g.ny(),
    })
}

fn spectrum(setup: &Setup) -> Result<Report, CliError> {
    let cfg = block(&setup.resolved.spectrum, "spectrum")?;
    let grid = setup.grid()?;
    setup.check_k(&grid)?;

    let start = Instant::now();
    let (h, literal_defect) = match cfg.builder {
        Builder::Expanded => {
            let p = &setup.physics;
            let e = build_expanded_hamiltonian(&grid, &p.mass, &p.vector_potential, &p.potential, &p.constants)?;
            (e.symmetrized, Some(e.hermiticity_defect))
        }
        b => (build_hamiltonian(b, &grid, &setup.physics)?, None),
    };
    let build_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let solved = setup.solve(&h)?;
    let solve_seconds = start.elapsed().as_secs_f64();

    let mut files = Outputs::new();
    let mut csv = Vec::new();
    solved.write_csv(&mut csv)?;
    files.insert("spectrum.csv".into(), csv);
    let mut report = json!({
        "command": "spectrum",
        "config": setup.config_json(),
        "builder": cfg.builder.name(),
        "grid": grid_meta(&grid),
        "nnz": h.nnz(),
        "norm_max": h.max_abs(),
        "hermiticity_defect": h.hermiticity_defect(),
        "solver": {
            "method": solved.method.name(),
            "iterations": solved.iterations,
        },
        "eigenvalues": solved.eigenvalues,
        "residuals": solved.residuals,
    });
    if let Some(d) = literal_defect {
        report["literal_hermiticity_defect"] = json!(d);
    }
    files.insert("spectrum.json".into(), to_json(&report));
    if cfg.dump_operator {
        let mut coo = Vec::new();
        h.write_coo(&mut coo)?;
        files.insert("operator.coo".into(), coo);
    }
    Ok(Report {
        config: setup.resolved.clone(),
        files,
        timing: BTreeMap::from([
            ("build_seconds".into(), build_seconds),
            ("solve_seconds".into(), solve_seconds),
        ]),
    })
}

/// Applies `f` to every item on up to `threads` scoped threads; results keep
/// the input order.
pub fn parallel_map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let f = &f;
    let mut slots: Vec<Option<R>> = items.iter().map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                scope.spawn(move || {
                    items
                        .iter()
                        .enumerate()
                        .skip(t)
                        .step_by(threads)
                        .map(|(i, item)| (i, f(item)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker thread panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every slot filled")).collect()
}

fn compare(setup: &Setup, threads: usize) -> Result<Report, CliError> {
    let cfg = block(&setup.resolved.compare, "compare")?;
    let variants: Vec<(String, Builder, OrderingParams)> = match (&cfg.builders, &cfg.orderings) {
        (Some(builders), None) => {
            if cfg.builder.is_some() {
                return Err(CliError::Config("`compare.builder` only applies to `compare.orderings`".into()));
            }
            builders
                .iter()
                .map(|b| (b.name().to_string(), *b, setup.physics.ordering))
                .collect()
        }
        (None, Some(orderings)) => {
            let builder = cfg.builder.unwrap_or(Builder::VonRoos);
            orderings
                .iter()
                .map(|o| Ok((o.label(), builder, o.resolve()?)))
                .collect::<Result<_, CliError>>()?
        }
        _ => {
            return Err(CliError::Config(
                "`compare` needs exactly one of `builders` or `orderings`".into(),
            ))
        }
    };
    let fine = setup.grid()?;
    let coarse = make_grid(fine.nx() / 2, fine.ny() / 2, fine.bounds())?;
    setup.check_k(&coarse)?;

    let start = Instant::now();
    let mut operators = Vec::with_capacity(4);
    for (_, builder, ordering) in &variants {
        let physics = Physics {
            ordering: *ordering,
            ..setup.physics.clone()
        };
        for grid in [&fine, &coarse] {
            operators.push(build_hamiltonian(*builder, grid, &physics)?);
        }
    }
    let build_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let spectra = parallel_map(&operators, threads, |h| setup.solve(h))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let solve_seconds = start.elapsed().as_secs_f64();

    let refined: Vec<RefinedSpectrum> = spectra
        .chunks(2)
        .map(|pair| RefinedSpectrum {
            fine: pair[0].eigenvalues.clone(),
            coarse: pair[1].eigenvalues.clone(),
            h_fine: fine.hx().max(fine.hy()),
            h_coarse: coarse.hx().max(coarse.hy()),
        })
        .collect();
    let k = setup.resolved.solver.k;
    let result = distinguish(&refined[0], &refined[1], k)?;

    let mut csv = String::from("level,e1,e2,abs_diff,error1,error2,gap_over_error\n");
    for (i, level) in result.report.levels.iter().enumerate() {
        let err = result.error1[i] + result.error2[i];
        let ratio = if err > 0.0 { level.abs_diff / err } else { f64::INFINITY };
        csv.push_str(&format!(
            "{i},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            level.e1, level.e2, level.abs_diff, result.error1[i], result.error2[i], ratio
        ));
    }
    let sides: Vec<Value> = variants
        .iter()
        .zip(&refined)
        .map(|((label, builder, ordering), r)| {
            json!({
                "label": label,
                "builder": builder.name(),
                "ordering": ordering,
                "fine": r.fine,
                "coarse": r.coarse,
            })
        })
        .collect();
    let report = json!({
        "command": "compare",
        "config": setup.config_json(),
        "grid": grid_meta(&fine),
        "coarse_grid": grid_meta(&coarse),
        "operators": sides,
        "comparison": result,
        "verdict": result.verdict.as_str(),
    });
    let files = Outputs::from([
        ("compare.csv".to_string(), csv.into_bytes()),
        ("compare.json".to_string(), to_json(&report)),
    ]);
    Ok(Report {
        config: setup.resolved.clone(),
        files,
        timing: BTreeMap::from([
            ("build_seconds".into(), build_seconds),
            ("solve_seconds".into(), solve_seconds),
        ]),
    })
}

fn classical(setup: &Setup) -> Result<Report, Failure> {
    let cfg = block(&setup.resolved.classical, "classical")?;
    let p = &setup.physics;
    let system = ClassicalSystem {
        mass: &p.mass,
        vector_potential: &p.vector_potential,
        potential: &p.potential,
        constants: &p.constants,
    };
    let start = Instant::now();
    let (states, abort) = match integrate_trajectory(&cfg.state0, &system, cfg.t_end, cfg.dt) {
        Ok(states) => (states, None),
        Err(abort) if abort.partial.is_empty() => return Err(abort.source.into()),
        Err(abort) => (abort.partial, Some(abort.source)),
    };
    let seconds = start.elapsed().as_secs_f64();

    let mut csv = Vec::new();
    write_trajectory_csv(&mut csv, &states, &system)?;
    let summary = conservation_summary(&states, &system)?;
    let report = json!({
        "command": "classical",
        "config": setup.config_json(),
        "steps": states.len() - 1,
        "final_state": states.last(),
        "conservation": summary,
        "aborted": abort.as_ref().map(|e| e.to_string()),
    });
    let files = Outputs::from([
        ("trajectory.csv".to_string(), csv),
        ("classical.json".to_string(), to_json(&report)),
    ]);
    match abort {
        Some(e) => Err(Failure {
            error: e.into(),
            partial: files,
        }),
        None => Ok(Report {
            config: setup.resolved.clone(),
            files,
            timing: BTreeMap::from([("integrate_seconds".into(), seconds)]),
        }),
    }
}

fn evolve(setup: &Setup) -> Result<Report, CliError> {
    let cfg = block(&setup.resolved.evolve, "evolve")?;
    let p = &setup.physics;
    if !p.vector_potential.is_zero() {
        return Err(PdmError::Unsupported("evolve is one-dimensional and takes no magnetic field".into()).into());
    }
    let grid = Grid1D::new(cfg.n, cfg.bounds[0], cfg.bounds[1])?;
    let start = Instant::now();
    let r = ehrenfest_check(&grid, &p.mass, &p.potential, &p.constants, &cfg.packet, cfg.dt, cfg.steps)?;
    let seconds = start.elapsed().as_secs_f64();

    let mut csv = Vec::new();
    write_series_csv(&mut csv, &r.series)?;
    let report = json!({
        "command": "evolve",
        "config": setup.config_json(),
        "grid": { "n": grid.n, "bounds": cfg.bounds, "h": grid.h },
        "naive_velocity_residual": r.residual,
        "norm_drift": r.norm_drift,
        "energy_drift": r.energy_drift,
        "final": r.series.last(),
    });
    Ok(Report {
        config: setup.resolved.clone(),
        files: Outputs::from([
            ("series.csv".to_string(), csv),
            ("evolve.json".to_string(), to_json(&report)),
        ]),
        timing: BTreeMap::from([("propagate_seconds".into(), seconds)]),
    })
}

// ---------------------------------------------------------------- process

#[derive(Parser, Debug)]
#[command(name = "pdmlab", version, about = "Position-dependent-mass Hamiltonian laboratory")]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand, Debug)]
enum CliCommand {
    /// Lowest eigenvalues of one Hamiltonian builder.
    Spectrum(RunArgs),
    /// Are two builders or orderings distinguishable at this resolution?
    Compare(RunArgs),
    /// Classical trajectory and its conserved quantities.
    Classical(RunArgs),
    /// 1D wavepacket and the naive velocity relation.
    Evolve(RunArgs),
    /// Run the acceptance suite.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Print the criterion IDs and exit.
    #[arg(long)]
    list: bool,
    /// Optional tolerance overrides and criterion selection.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Worker threads from `PDMLAB_THREADS`, 1 when unset.
pub fn threads_from_env() -> Result<usize, CliError> {
    match std::env::var("PDMLAB_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Config(format!("PDMLAB_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(e) => Err(CliError::Config(format!("PDMLAB_THREADS: {e}"))),
    }
}

pub fn write_outputs(dir: &Path, files: &Outputs) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, bytes) in files {
        fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

fn write_timing(dir: &Path, command: Command, config: &RunConfig, timing: &BTreeMap<String, f64>) -> io::Result<()> {
    let value = json!({ "command": command.name(), "config": config, "seconds": timing });
    fs::write(dir.join("timing.json"), to_json(&value))
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (command, args) = match cli.command {
        CliCommand::Spectrum(a) => (Command::Spectrum, a),
        CliCommand::Compare(a) => (Command::Compare, a),
        CliCommand::Classical(a) => (Command::Classical, a),
        CliCommand::Evolve(a) => (Command::Evolve, a),
        CliCommand::Validate(a) => return validate(&a),
    };
    match run_command(command, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("pdmlab {}: {e}", command.name());
            e.exit_code()
        }
    }
}

fn run_command(command: Command, args: &RunArgs) -> Result<(), CliError> {
    let threads = threads_from_env()?;
    let config = RunConfig::load(&args.config)?;
    match execute(command, &config, threads) {
        Ok(report) => {
            write_outputs(&args.out, &report.files)?;
            write_timing(&args.out, command, &report.config, &report.timing)?;
            let names: Vec<&str> = report.files.keys().map(String::as_str).collect();
            println!("{}: wrote {} to {}", command.name(), names.join(", "), args.out.display());
            Ok(())
        }
        Err(Failure { error, partial }) => {
            if !partial.is_empty() {
                write_outputs(&args.out, &partial)?;
            }
            Err(error)
        }
    }
}

fn validate(args: &ValidateArgs) -> i32 {
    if args.list {
        for id in acceptance::IDS {
            println!("{id}");
        }
        return 0;
    }
    let setup = || -> Result<(acceptance::ValidateConfig, usize), CliError> {
        let threads = threads_from_env()?;
        let cfg = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text)?
            }
            None => acceptance::ValidateConfig::default(),
        };
        Ok((cfg, threads))
    };
    let (cfg, threads) = match setup() {
        Ok(v) => v,
        Err(e) => {
            eprintln!("pdmlab validate: {e}");
            return e.exit_code();
        }
    };
    let results = match acceptance::run_selected(&cfg, threads) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("pdmlab validate: {e}");
            return 2;
        }
    };
    for r in &results {
        println!("{}", r.line());
    }
    if let Some(dir) = &args.out {
        let value = json!({ "config": cfg, "results": results });
        if let Err(e) = fs::create_dir_all(dir).and_then(|_| fs::write(dir.join("validate.json"), to_json(&value))) {
            eprintln!("pdmlab validate: {e}");
            return 2;
        }
    }
    acceptance::exit_code(&results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<u64> = (0..11).collect();
        let serial = parallel_map(&items, 1, |x| x * x + 1);
        for threads in [2, 3, 4, 16] {
            assert_eq!(parallel_map(&items, threads, |x| x * x + 1), serial);
        }
        assert!(parallel_map(&[] as &[u64], 4, |x| *x).is_empty());
    }

    #[test]
    fn named_parameters_map_to_catalog_order() {
        let f = FieldConfig::new("linear", &[("cy", 3.0), ("c0", 1.0), ("cx", 2.0)]);
        assert_eq!(positional(&f, Role::Potential).unwrap(), vec![1.0, 2.0, 3.0]);
        let m = FieldConfig::new("constant", &[("m0", 2.0)]);
        assert_eq!(positional(&m, Role::Mass).unwrap(), vec![2.0]);
        assert!(positional(&m, Role::Potential).is_err());
        assert!(positional(&FieldConfig::new("harmonic", &[("k", 1.0)]), Role::Mass).is_err());
    }

    #[test]
    fn defaults_are_filled_in() {
        let cfg = RunConfig::from_json(r#"{"mass": {"kind": "constant", "params": {"m0": 1}}}"#).unwrap();
        assert_eq!(cfg.solver, SolverConfig::default());
        assert_eq!(cfg.ordering, OrderingConfig::Preset("zhu-kroemer".into()));
        assert_eq!(cfg.potential.kind, "zero");
        let setup = Setup::new(&cfg).unwrap();
        assert_eq!(setup.resolved.ordering, explicit(OrderingParams::ZHU_KROEMER));
        let back: RunConfig = serde_json::from_value(setup.config_json()).unwrap();
        assert_eq!(back, setup.resolved);
    }
}
