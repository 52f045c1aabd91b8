//! Experiment files.
//!
//! A spec is a TOML document with a `schema` version, an `experiment` kind, an
//! optional `seed` and exactly one table named after the experiment. Unknown
//! keys are rejected and no physics parameter has a default.

use serde::{Deserialize, Serialize};
use swssb_core::config_space::{Boundary, Lattice};
use swssb_core::diagnostics::Insertion;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Evolve,
    Correlators,
    Cmi,
    Decode,
    Winding,
    Hydro,
    Rotor,
    Rg,
    Modelf,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Evolve => "evolve",
            Kind::Correlators => "correlators",
            Kind::Cmi => "cmi",
            Kind::Decode => "decode",
            Kind::Winding => "winding",
            Kind::Hydro => "hydro",
            Kind::Rotor => "rotor",
            Kind::Rg => "rg",
            Kind::Modelf => "modelf",
        }
    }

    pub fn stochastic(self) -> bool {
        matches!(self, Kind::Decode | Kind::Winding | Kind::Modelf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema: u32,
    pub experiment: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolve: Option<EvolveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlators: Option<CorrelatorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cmi: Option<CmiSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decode: Option<DecodeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winding: Option<WindingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hydro: Option<HydroSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotor: Option<RotorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rg: Option<RgSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modelf: Option<ModelFSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Chain,
    Ring,
    Torus,
    /// `extents = [length, width]`.
    Ladder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub shape: Shape,
    pub extents: Vec<usize>,
}

impl LatticeSpec {
    pub fn build(&self) -> Result<Lattice, CliError> {
        let want = match self.shape {
            Shape::Chain | Shape::Ring => 1,
            Shape::Torus | Shape::Ladder => 2,
        };
        if self.extents.len() != want || self.extents.contains(&0) {
            return Err(CliError::Usage(format!(
                "lattice {:?} needs {want} positive extents, got {:?}",
                self.shape, self.extents
            )));
        }
        let e = &self.extents;
        let boundary = match self.shape {
            Shape::Chain | Shape::Ladder => Boundary::Open,
            Shape::Ring | Shape::Torus => Boundary::Periodic,
        };
        Lattice::new(e.clone(), vec![boundary; want]).map_err(CliError::Physics)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedInitial {
    Neel,
    /// Sites with first coordinate below half the length are occupied.
    DomainWall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Named(NamedInitial),
    Occupations(Vec<u8>),
}

impl InitialSpec {
    pub fn occupations(&self, lattice: &Lattice) -> Result<Vec<u8>, CliError> {
        let n = lattice.n_sites();
        match self {
            InitialSpec::Named(NamedInitial::Neel) => {
                let c = swssb_core::config_space::neel_configuration(lattice).map_err(CliError::Physics)?;
                Ok(c.occupations(n))
            }
            InitialSpec::Named(NamedInitial::DomainWall) => {
                let half = lattice.extents[0] / 2;
                Ok((0..n).map(|s| u8::from(lattice.coords(s)[0] < half)).collect())
            }
            InitialSpec::Occupations(v) => {
                if v.len() != n || v.iter().any(|&o| o > 1) {
                    return Err(CliError::Usage(format!("initial occupations must be {n} zeros and ones")));
                }
                Ok(v.clone())
            }
        }
    }
}

/// Rescaling exponents for a collapse score: `x / t^x_exp`, `y * t^y_exp`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseSpec {
    pub x_exp: f64,
    pub y_exp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSpec {
    pub lattice: LatticeSpec,
    pub gamma: f64,
    pub times: Vec<f64>,
    pub initial: InitialSpec,
    /// Separations for Rényi-1 and Rényi-2 correlators on 1d lattices.
    #[serde(default)]
    pub separations: Vec<usize>,
    /// Write a JSON distribution snapshot per time.
    pub snapshots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelatorSpec {
    pub lattice: LatticeSpec,
    pub gamma: f64,
    pub times: Vec<f64>,
    pub initial: InitialSpec,
    pub q: Vec<u8>,
    /// `single` or `symmetrized`.
    pub insertion: Insertion,
    pub separations: Vec<usize>,
    #[serde(default)]
    pub collapse: Vec<CollapseSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmiLayout {
    Covering,
    Interior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmiSpec {
    pub lattice: LatticeSpec,
    pub gamma: f64,
    pub times: Vec<f64>,
    pub initial: InitialSpec,
    pub geometry: CmiLayout,
    pub r_b: Vec<usize>,
    #[serde(default)]
    pub collapse: Vec<CollapseSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeSpec {
    /// Any of `com`, `mwpm`, `height`, `optimal`.
    pub decoders: Vec<String>,
    /// Half-length: the chain has `2L` sites and A is the left half.
    pub l: usize,
    pub gamma: f64,
    pub times: Vec<f64>,
    pub r_b: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub collapse: Vec<CollapseSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindingMode {
    Renyi2,
    Disorder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindingSpec {
    pub lattice: LatticeSpec,
    pub gamma: f64,
    pub times: Vec<f64>,
    pub initial: InitialSpec,
    pub mode: WindingMode,
    /// Accepted samples (Rényi-2) or outer trajectories (disorder).
    pub samples: usize,
    /// Conditioned samples per outcome; disorder mode only.
    #[serde(default)]
    pub inner: Option<usize>,
    /// Loop duration over `t`; 2 matches the doubled Rényi-2 contour.
    pub duration_factor: f64,
    pub acceptance_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydroSpec {
    pub l: usize,
    pub d: f64,
    pub gamma_n: f64,
    pub times: Vec<f64>,
    /// Single-site A and C flanking `R_B` sites.
    pub r_b: Vec<usize>,
    /// Bhattacharyya separations and charges; both may be empty.
    #[serde(default)]
    pub r: Vec<usize>,
    #[serde(default)]
    pub charges: Vec<f64>,
    #[serde(default)]
    pub collapse: Vec<CollapseSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RotorGeometrySpec {
    EdgeCovering,
    Interior { r_a: usize, r_c: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotorSpec {
    /// Dimensionless time `t̃`.
    pub times: Vec<f64>,
    pub r_b: Vec<usize>,
    pub geometry: RotorGeometrySpec,
    /// Rényi indices for the 2d exponents.
    #[serde(default)]
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowGridSpec {
    pub s: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RgSpec {
    /// Replica coefficients `A`.
    pub a: Vec<f64>,
    pub y0: f64,
    pub detunings: Vec<f64>,
    pub threshold: f64,
    #[serde(default)]
    pub flow_grid: Option<FlowGridSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observable {
    FreeEnergy,
    TotalDensity,
    BondOrder,
    DensityVariance,
}

impl Observable {
    pub fn name(self) -> &'static str {
        match self {
            Observable::FreeEnergy => "free_energy",
            Observable::TotalDensity => "total_density",
            Observable::BondOrder => "bond_order",
            Observable::DensityVariance => "density_variance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFSpec {
    pub lattice: LatticeSpec,
    pub j: f64,
    pub k: f64,
    pub beta: f64,
    pub gamma_phi: f64,
    pub gamma_n: f64,
    pub dt: f64,
    pub steps: usize,
    pub record_every: usize,
    pub observables: Vec<Observable>,
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| CliError::Usage(format!("spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA_VERSION {
            return Err(CliError::Usage(format!("unsupported schema {} (expected {SCHEMA_VERSION})", self.schema)));
        }
        let present = [
            (Kind::Evolve, self.evolve.is_some()),
            (Kind::Correlators, self.correlators.is_some()),
            (Kind::Cmi, self.cmi.is_some()),
            (Kind::Decode, self.decode.is_some()),
            (Kind::Winding, self.winding.is_some()),
            (Kind::Hydro, self.hydro.is_some()),
            (Kind::Rotor, self.rotor.is_some()),
            (Kind::Rg, self.rg.is_some()),
            (Kind::Modelf, self.modelf.is_some()),
        ];
        for (k, p) in present {
            if p != (k == self.experiment) {
                let msg = if p { "unexpected" } else { "missing" };
                return Err(CliError::Usage(format!("{msg} [{}] table for experiment '{}'", k.name(), self.experiment.name())));
            }
        }
        Ok(())
    }
}
