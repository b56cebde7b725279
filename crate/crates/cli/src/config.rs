//! Run and convergence-study configuration files.
//!
//! Both are TOML (`[section]` headers with `key = value` lines). Unknown keys
//! are rejected, every key has a default, and semantic errors point at the
//! line of the offending key when it appears in the file.

use std::fs;

use apfv_core::cases::{DensityProfile, Perturbation, VortexSpec};
use apfv_core::stepper::{EtaMode, SchemeParams};
use apfv_core::{Error as CoreError, Quadrature};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseName {
    /// Stationary vortex with its compressible density profile.
    #[default]
    Vortex,
    /// Vortex velocity plus a seeded `O(eps)` divergence-free velocity and
    /// `O(eps^2)` density perturbation around `rho = 1`.
    WellPrepared,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    #[default]
    Standard,
    Balanced,
}

impl From<ProfileName> for DensityProfile {
    fn from(p: ProfileName) -> Self {
        match p {
            ProfileName::Standard => DensityProfile::Standard,
            ProfileName::Balanced => DensityProfile::Balanced,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureName {
    Midpoint,
    #[default]
    Gauss3,
}

impl From<QuadratureName> for Quadrature {
    fn from(q: QuadratureName) -> Self {
        match q {
            QuadratureName::Midpoint => Quadrature::Midpoint,
            QuadratureName::Gauss3 => Quadrature::Gauss3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseSection {
    pub name: CaseName,
    pub profile: ProfileName,
    pub quadrature: QuadratureName,
    pub center: [f64; 2],
    pub r1: f64,
    pub r2: f64,
    pub amplitude: f64,
}

impl Default for CaseSection {
    fn default() -> Self {
        let v = VortexSpec::default();
        CaseSection {
            name: CaseName::default(),
            profile: ProfileName::default(),
            quadrature: QuadratureName::default(),
            center: [v.center.0, v.center.1],
            r1: v.r1,
            r2: v.r2,
            amplitude: v.amplitude,
        }
    }
}

impl CaseSection {
    pub fn vortex(&self) -> VortexSpec {
        VortexSpec {
            center: (self.center[0], self.center[1]),
            r1: self.r1,
            r2: self.r2,
            amplitude: self.amplitude,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection {
            nx: 32,
            ny: 32,
            lx: 1.0,
            ly: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsSection {
    pub gamma: f64,
    pub eps: f64,
    pub final_time: f64,
    /// The run fails if `final_time` is not reached within this many steps.
    pub max_steps: usize,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        PhysicsSection {
            gamma: 2.0,
            eps: 1.0,
            final_time: 0.1,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaModeName {
    #[default]
    Auto,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    pub eta_mode: EtaModeName,
    /// Used when `eta_mode = "fixed"`.
    pub eta: f64,
    /// Used when `eta_mode = "auto"`.
    pub eta_safety: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub picard_relax: f64,
    pub dt_max: f64,
    pub cfl_safety: f64,
    pub beta: f64,
    pub viscous_scale: f64,
}

impl Default for SchemeSection {
    fn default() -> Self {
        let p = SchemeParams::default();
        let safety = match p.eta_mode {
            EtaMode::Auto { safety } => safety,
            EtaMode::Fixed(_) => 1.1,
        };
        SchemeSection {
            eta_mode: EtaModeName::Auto,
            eta: 1.0,
            eta_safety: safety,
            newton_tol: p.newton_tol,
            newton_max_iter: p.newton_max_iter,
            picard_relax: p.picard_relax,
            dt_max: p.dt_max,
            cfl_safety: p.cfl_safety,
            beta: p.beta,
            viscous_scale: p.viscous_scale,
        }
    }
}

impl SchemeSection {
    pub fn params(&self, gamma: f64, eps: f64) -> SchemeParams {
        SchemeParams {
            gamma,
            eps,
            eta_mode: match self.eta_mode {
                EtaModeName::Auto => EtaMode::Auto {
                    safety: self.eta_safety,
                },
                EtaModeName::Fixed => EtaMode::Fixed(self.eta),
            },
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
            picard_relax: self.picard_relax,
            dt_max: self.dt_max,
            cfl_safety: self.cfl_safety,
            beta: self.beta,
            viscous_scale: self.viscous_scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: String,
    /// Field snapshots are written at steps divisible by `cadence`.
    pub cadence: usize,
    pub emit_fields: bool,
    pub emit_svg: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: "output".to_string(),
            cadence: 10,
            emit_fields: false,
            emit_svg: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSection {
    pub rho_amplitude: f64,
    pub u_amplitude: f64,
    /// Seeds the phases of the perturbation modes.
    pub seed: u64,
}

impl Default for PerturbationSection {
    fn default() -> Self {
        PerturbationSection {
            rho_amplitude: 0.5,
            u_amplitude: 1.0,
            seed: 0,
        }
    }
}

impl PerturbationSection {
    pub fn perturbation(&self) -> Perturbation {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut phases = [0.0; 4];
        for p in &mut phases {
            *p = rng.random::<f64>();
        }
        Perturbation {
            rho_amplitude: self.rho_amplitude,
            u_amplitude: self.u_amplitude,
            phases,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub case: CaseSection,
    pub mesh: MeshSection,
    pub physics: PhysicsSection,
    pub scheme: SchemeSection,
    pub output: OutputSection,
    pub perturbation: PerturbationSection,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMode {
    /// Every `eps` in the list, errors against a reference-grid run.
    #[default]
    FixedEps,
    /// `eps = h` on each grid, errors against the exact incompressible vortex.
    EpsEqualsH,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub mode: StudyMode,
    /// Cells per side of the unit square, strictly increasing powers of two.
    pub grids: Vec<usize>,
    /// Cells per side of the reference run (fixed-eps mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<usize>,
    pub eps: Vec<f64>,
    pub gamma: f64,
    pub final_time: f64,
    pub max_steps: usize,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            mode: StudyMode::FixedEps,
            grids: vec![8, 16, 32],
            reference: Some(64),
            eps: vec![1.0],
            gamma: 2.0,
            final_time: 0.1,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub case: CaseSection,
    pub study: StudySection,
    pub scheme: SchemeSection,
    pub output: OutputSection,
    pub perturbation: PerturbationSection,
}

/// 1-based line of the first `key = ...` assignment in `text`.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|line| {
        line.trim_start()
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn located(path: &str, text: &str, key: &str, message: String) -> CliError {
    match key_line(text, key) {
        Some(line) => CliError::config(path, format!("line {line}: {message}")),
        None => CliError::config(path, message),
    }
}

fn core_error(path: &str, text: &str, e: CoreError) -> CliError {
    match e {
        CoreError::InvalidParameter { name, .. } => located(path, text, name, e.to_string()),
        CoreError::MeshTooSmall { .. } => located(path, text, "nx", e.to_string()),
        CoreError::InvalidDomain { .. } => located(path, text, "lx", e.to_string()),
        other => CliError::config(path, other.to_string()),
    }
}

fn check(ok: bool, path: &str, text: &str, key: &str, message: &str) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(located(path, text, key, format!("{key}: {message}")))
    }
}

fn check_common(
    case: &CaseSection,
    output: &OutputSection,
    pert: &PerturbationSection,
    path: &str,
    text: &str,
) -> CliResult<()> {
    case.vortex()
        .validate()
        .map_err(|e| core_error(path, text, e))?;
    check(output.cadence >= 1, path, text, "cadence", "cadence >= 1")?;
    check(
        pert.seed <= i64::MAX as u64,
        path,
        text,
        "seed",
        "seed <= 9223372036854775807",
    )?;
    check(
        pert.rho_amplitude >= 0.0 && pert.rho_amplitude.is_finite(),
        path,
        text,
        "rho_amplitude",
        "rho_amplitude >= 0",
    )?;
    check(
        pert.u_amplitude >= 0.0 && pert.u_amplitude.is_finite(),
        path,
        text,
        "u_amplitude",
        "u_amplitude >= 0",
    )?;
    Ok(())
}

fn read(path: &str) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::config(path, e.to_string()))
}

impl RunConfig {
    pub fn load(path: &str) -> CliResult<Self> {
        let text = read(path)?;
        Self::parse(&text, path)
    }

    /// Parses and validates `text`; `path` only labels error messages.
    pub fn parse(text: &str, path: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::config(path, e.to_string()))?;
        cfg.validate_in(path, text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.validate_in("<config>", "")
    }

    fn validate_in(&self, path: &str, text: &str) -> CliResult<()> {
        check_common(&self.case, &self.output, &self.perturbation, path, text)?;
        let m = &self.mesh;
        apfv_core::StructuredMesh::new(m.nx, m.ny, m.lx, m.ly).map_err(|e| core_error(path, text, e))?;
        let ph = &self.physics;
        check(
            ph.final_time > 0.0 && ph.final_time.is_finite(),
            path,
            text,
            "final_time",
            "final_time > 0",
        )?;
        check(ph.max_steps >= 1, path, text, "max_steps", "max_steps >= 1")?;
        if self.case.name == CaseName::WellPrepared {
            check(
                ph.eps * ph.eps * self.perturbation.rho_amplitude < 1.0,
                path,
                text,
                "rho_amplitude",
                "eps^2 rho_amplitude < 1",
            )?;
        }
        self.scheme
            .params(ph.gamma, ph.eps)
            .validate()
            .map_err(|e| core_error(path, text, e))
    }

    /// SHA-256 over the canonical serialisation, ignoring the output
    /// directory so that `--output` does not change the hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.directory.clear();
        sha256_hex(&c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }
}

impl ConvergenceConfig {
    pub fn load(path: &str) -> CliResult<Self> {
        let text = read(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &str) -> CliResult<Self> {
        let cfg: ConvergenceConfig =
            toml::from_str(text).map_err(|e| CliError::config(path, e.to_string()))?;
        cfg.validate_in(path, text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.validate_in("<config>", "")
    }

    fn validate_in(&self, path: &str, text: &str) -> CliResult<()> {
        check_common(&self.case, &self.output, &self.perturbation, path, text)?;
        let s = &self.study;
        check(s.max_steps >= 1, path, text, "max_steps", "max_steps >= 1")?;
        check(!s.grids.is_empty(), path, text, "grids", "at least one grid")?;
        check(
            s.grids.iter().all(|&n| n >= 4 && n.is_power_of_two()),
            path,
            text,
            "grids",
            "every grid a power of two >= 4",
        )?;
        check(
            s.grids.windows(2).all(|w| w[0] < w[1]),
            path,
            text,
            "grids",
            "grids strictly increasing",
        )?;
        check(
            s.final_time > 0.0 && s.final_time.is_finite(),
            path,
            text,
            "final_time",
            "final_time > 0",
        )?;
        let finest = *s.grids.last().unwrap_or(&0);
        let eps_list: Vec<f64> = match s.mode {
            StudyMode::FixedEps => {
                let r = s.reference.unwrap_or(0);
                check(
                    s.reference.is_some(),
                    path,
                    text,
                    "reference",
                    "fixed_eps mode needs a reference grid",
                )?;
                check(
                    r > finest && r.is_power_of_two(),
                    path,
                    text,
                    "reference",
                    "reference grid must be a power of two strictly finer than every study grid",
                )?;
                check(!s.eps.is_empty(), path, text, "eps", "at least one eps")?;
                s.eps.clone()
            }
            StudyMode::EpsEqualsH => s.grids.iter().map(|&n| 1.0 / n as f64).collect(),
        };
        for eps in eps_list {
            self.scheme
                .params(s.gamma, eps)
                .validate()
                .map_err(|e| core_error(path, text, e))?;
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.directory.clear();
        sha256_hex(&c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("convergence config serialises")
    }
}

fn sha256_hex<T: Serialize>(value: &T) -> String {
    let text = toml::to_string(value).expect("config serialises");
    hex::encode(Sha256::digest(text.as_bytes()))
}
