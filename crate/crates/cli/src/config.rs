//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use drift_core::maps::{make_family, MapFamily, PerturbationStep};
use drift_core::shadowing::{PaddingOptions, ProperParams};
use drift_core::transport::{EssentialCurve, TransportOptions};
use drift_core::MapDef;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::LabError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub map: MapDef,
    /// Second perturbation generator for `mu-scan`; the first comes from `map`.
    #[serde(default)]
    pub family: Option<FamilyConfig>,
    /// Replaces the map-derived IFS by a hand-made one.
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub band: BandConfig,
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub shadowing: ShadowingConfig,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub mu_scan: MuScanConfig,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    /// Action range of the cylinder graph.
    pub range: (f64, f64),
    /// Where the scattering maps are checked for simplicity.
    pub sub_band: (f64, f64),
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            range: (0.05, 0.35),
            sub_band: (0.1, 0.3),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// `[n_phi, n_i]` of the cylinder graph.
    pub cylinder: [usize; 2],
    /// `[n_phi, n_i]` of the homoclinic cylinders.
    pub scattering: [usize; 2],
    /// Samples per essential curve.
    pub curve: usize,
    pub graph_tol: f64,
    pub graph_iterations: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            cylinder: [128, 32],
            scattering: [32, 16],
            curve: 256,
            graph_tol: 1e-9,
            graph_iterations: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub delta: f64,
    /// Number `N` of homoclinic cylinders; the first is the primary one.
    pub homoclinics: usize,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            homoclinics: 1,
        }
    }
}

/// An essential curve given as a constant action or by samples on a uniform
/// angle grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CurveSpec {
    Constant { y: f64 },
    Sampled { ys: Vec<f64> },
}

impl CurveSpec {
    pub fn curve(&self, n: usize) -> EssentialCurve {
        match self {
            Self::Constant { y } => EssentialCurve::horizontal(n, *y),
            Self::Sampled { ys } => {
                let m = ys.len();
                EssentialCurve::from_fn(n, |p| {
                    // periodic linear interpolation of the samples
                    let s = p / std::f64::consts::TAU * m as f64;
                    let i = s.floor() as usize % m;
                    let t = s - s.floor();
                    ys[i] * (1.0 - t) + ys[(i + 1) % m] * t
                })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    pub gamma_minus: CurveSpec,
    pub gamma_plus: CurveSpec,
    pub tol: f64,
    pub stall: usize,
    #[serde(default)]
    pub max_gen: Option<usize>,
    /// Tolerance of the certificate validation.
    pub validate_tol: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            gamma_minus: CurveSpec::Constant { y: 0.15 },
            gamma_plus: CurveSpec::Constant { y: 0.25 },
            tol: 1e-7,
            stall: 5,
            max_gen: None,
            validate_tol: 1e-9,
        }
    }
}

impl TransportConfig {
    pub fn options(&self) -> TransportOptions {
        TransportOptions {
            tol: self.tol,
            stall: self.stall,
            max_gen: self.max_gen,
            snap: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadowingConfig {
    pub k_bar: usize,
    pub gamma_rate: f64,
    #[serde(rename = "D")]
    pub d: f64,
    /// Largest accepted one-step defect `|Phi(P_t) - P_{t+1}|` of an emitted orbit.
    pub epsilon: f64,
    /// Allowed distance of the shadow's start from the IFS orbit's start.
    pub u0: f64,
    pub return_k_max: usize,
    /// Required action change of the drift orbit.
    pub target_drift: f64,
}

impl Default for ShadowingConfig {
    fn default() -> Self {
        Self {
            k_bar: 10,
            gamma_rate: 2.0,
            d: 5.0,
            epsilon: 1e-8,
            u0: 0.05,
            return_k_max: 200_000,
            target_drift: 0.05,
        }
    }
}

impl ShadowingConfig {
    pub fn properness(&self) -> ProperParams {
        ProperParams {
            k_bar: self.k_bar,
            gamma_rate: self.gamma_rate,
            d: self.d,
        }
    }

    pub fn padding(&self) -> PaddingOptions {
        PaddingOptions {
            u0: self.u0,
            k_max: self.return_k_max,
            ..PaddingOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub points: usize,
    pub loops: usize,
    pub symplectic_tol: f64,
    pub exact_tol: f64,
    pub lambda_iterates: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            points: 1000,
            loops: 5,
            symplectic_tol: 1e-9,
            exact_tol: 1e-8,
            lambda_iterates: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub second: PerturbationStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuScanConfig {
    /// `[lo, hi]` of each parameter.
    pub mu1: (f64, f64),
    pub mu2: (f64, f64),
    /// Nodes per parameter.
    pub nodes: [usize; 2],
}

impl Default for MuScanConfig {
    fn default() -> Self {
        Self {
            mu1: (0.0, 1.0),
            mu2: (0.0, 1.0),
            nodes: [5, 5],
        }
    }
}

impl MuScanConfig {
    pub fn axis(range: (f64, f64), n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![range.0],
            _ => (0..n)
                .map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

/// Hand-made IFS on the band, used instead of the map-derived one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticConfig {
    /// A rotation and a bump lift: every circle is pushed up somewhere.
    Lift { rotation: f64, amount: f64 },
    /// Twist `F_0` and `F_1 = F_0`: every circle is invariant.
    Identity { rotation: f64, slope: f64 },
    /// A randomized twist-and-kick instance on `[0, 1]`.
    Random { seed: u64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Sample points of the invariant checks.
    pub check: u64,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, LabError> {
        let cfg: Self = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let bad = |m: &str| Err(LabError::Config(m.into()));
        self.map
            .validate()
            .map_err(|e| LabError::Config(e.to_string()))?;
        let (lo, hi) = self.band.range;
        let (a, b) = self.band.sub_band;
        if !(lo < hi) || !(lo <= a && a < b && b <= hi) {
            return bad("band: need lo < hi and a sub_band inside the range");
        }
        if self
            .grids
            .cylinder
            .iter()
            .chain(&self.grids.scattering)
            .any(|&n| n < 4)
            || self.grids.curve < 8
        {
            return bad("grids: at least 4 nodes per axis and 8 curve samples");
        }
        if !(self.channel.delta > 0.0) || self.channel.homoclinics == 0 {
            return bad("channel: delta > 0 and at least one homoclinic cylinder");
        }
        if !(self.transport.tol > 0.0) || self.transport.stall == 0 {
            return bad("transport: tol > 0 and stall >= 1");
        }
        if let CurveSpec::Sampled { ys } = &self.transport.gamma_minus {
            if ys.is_empty() {
                return bad("transport.gamma_minus: empty samples");
            }
        }
        if let CurveSpec::Sampled { ys } = &self.transport.gamma_plus {
            if ys.is_empty() {
                return bad("transport.gamma_plus: empty samples");
            }
        }
        let s = &self.shadowing;
        if s.k_bar == 0 || !(s.gamma_rate > 0.0) || !(s.epsilon > 0.0) || !(s.u0 > 0.0) {
            return bad("shadowing: k_bar >= 1, gamma_rate > 0, epsilon > 0, u0 > 0");
        }
        Ok(())
    }

    pub fn family(&self) -> Result<MapFamily, LabError> {
        let fam = self
            .family
            .as_ref()
            .ok_or_else(|| LabError::Config("mu-scan needs a [family] table".into()))?;
        let mut base = self.map.clone();
        let first = match base.perturbations.pop() {
            Some(s) if base.perturbations.is_empty() => s,
            _ => {
                return Err(LabError::Config(
                    "mu-scan needs exactly one perturbation in [map]".into(),
                ))
            }
        };
        base.kind = base.base.take().unwrap_or(base.kind);
        make_family(base, vec![first, fam.second.clone()])
            .map_err(|e| LabError::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
