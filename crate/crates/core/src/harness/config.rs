use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::channel::{ArrayConfig, ChannelConfig};
use crate::model::{Architecture, MatCenetConfig, ModelKind, XlcnetConfig};

pub const CONFIG_VERSION: u32 = 1;

/// Preset scales. `Desk` runs in minutes on one machine, `Paper` matches
/// the reference evaluation (M = 256, 9000 training samples, 200 epochs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "desk" => Some(Profile::Desk),
            "paper" => Some(Profile::Paper),
            _ => None,
        }
    }
}

/// How the per-sample SNR of a dataset is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SnrPolicy {
    Fixed { snr_db: f64 },
    /// Uniform in dB over `[min_db, max_db]`, drawn per sample.
    Uniform { min_db: f64, max_db: f64 },
    Noiseless,
}

impl SnrPolicy {
    pub fn validate(&self) -> Result<(), HarnessError> {
        match *self {
            SnrPolicy::Fixed { snr_db } if !snr_db.is_finite() => {
                Err(HarnessError::Config("fixed SNR must be finite".into()))
            }
            SnrPolicy::Uniform { min_db, max_db } if !(min_db.is_finite() && max_db.is_finite() && min_db <= max_db) => {
                Err(HarnessError::Config(format!("SNR range [{min_db}, {max_db}] is invalid")))
            }
            _ => Ok(()),
        }
    }

    /// Common SNR stored in the dataset header.
    pub fn header_snr(&self) -> Option<f32> {
        match *self {
            SnrPolicy::Fixed { snr_db } => Some(snr_db as f32),
            SnrPolicy::Noiseless => Some(f32::INFINITY),
            SnrPolicy::Uniform { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    /// `L`.
    pub paths: usize,
    /// `L0`.
    pub far_paths: usize,
    /// Near-field distance range in metres; `None` means
    /// `[0.1·D_Ray, 0.8·D_Ray]` for the configured array.
    pub r_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub train_snr: SnrPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// `F`.
    pub features: usize,
    /// `h` (MAT-CENet only).
    pub heads: usize,
    /// Feed-forward hidden width (MAT-CENet only).
    pub ffn_hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Every path in the near field (`L0 = 0`), swept over SNR.
    NearOnly,
    /// Every path in the far field (`L0 = L`), swept over SNR.
    FarOnly,
    /// `L0 = 0..=L` at a fixed SNR.
    HybridL0Sweep,
    /// The training mix (configured `L0`), swept over SNR.
    Hybrid,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::NearOnly => "near_only",
            Scenario::FarOnly => "far_only",
            Scenario::HybridL0Sweep => "hybrid_l0_sweep",
            Scenario::Hybrid => "hybrid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Ls,
    Lmmse,
    Omp,
    Hyomp,
    Xlcnet,
    Matcenet,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Ls,
        EstimatorKind::Lmmse,
        EstimatorKind::Omp,
        EstimatorKind::Hyomp,
        EstimatorKind::Xlcnet,
        EstimatorKind::Matcenet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Ls => "ls",
            EstimatorKind::Lmmse => "lmmse",
            EstimatorKind::Omp => "omp",
            EstimatorKind::Hyomp => "hyomp",
            EstimatorKind::Xlcnet => "xlcnet",
            EstimatorKind::Matcenet => "matcenet",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    pub fn model_kind(self) -> Option<ModelKind> {
        match self {
            EstimatorKind::Xlcnet => Some(ModelKind::Xlcnet),
            EstimatorKind::Matcenet => Some(ModelKind::MatCenet),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenarios: Vec<Scenario>,
    pub snr_grid_db: Vec<f64>,
    /// SNR of the `L0` sweep.
    pub sweep_snr_db: f64,
    /// Test samples per grid point.
    pub n_test: usize,
    pub estimators: Vec<EstimatorKind>,
    /// Samples used to fit the LMMSE covariance for each `L0`.
    pub covariance_samples: usize,
    /// Angular grid size of the OMP dictionaries.
    pub n_angles: usize,
    /// Number of geometric distance rings for polar atoms.
    pub rings: usize,
    /// Atoms selected by OMP; `None` uses the path count `L`.
    pub sparsity: Option<usize>,
    /// Network checkpoints to evaluate.
    pub checkpoints: Vec<String>,
}

/// Fully resolved run configuration shared by every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub profile: Profile,
    pub seed: u64,
    #[serde(rename = "M")]
    pub antennas: usize,
    /// Carrier wavelength in metres; antennas are spaced by half of it.
    pub wavelength: f64,
    pub channel: ChannelSpec,
    pub data: DataSpec,
    pub model: ModelSpec,
    pub train: TrainSpec,
    pub experiment: ExperimentSpec,
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let (m, f, n_train, n_val, epochs, batch, r_range) = match profile {
            Profile::Desk => (64, 32, 2000, 500, 30, 32, None),
            Profile::Paper => (256, 64, 9000, 1000, 200, 128, Some((10.0, 80.0))),
        };
        RunConfig {
            version: CONFIG_VERSION,
            profile,
            seed: 1,
            antennas: m,
            wavelength: 0.01,
            channel: ChannelSpec {
                paths: 6,
                far_paths: 1,
                r_range,
            },
            data: DataSpec {
                n_train,
                n_val,
                train_snr: SnrPolicy::Uniform {
                    min_db: -10.0,
                    max_db: 20.0,
                },
            },
            model: ModelSpec {
                kind: ModelKind::MatCenet,
                features: f,
                heads: 4,
                ffn_hidden: 4 * f,
            },
            train: TrainSpec {
                batch_size: batch,
                epochs,
                learning_rate: 1e-3,
            },
            experiment: ExperimentSpec {
                scenarios: vec![
                    Scenario::NearOnly,
                    Scenario::FarOnly,
                    Scenario::HybridL0Sweep,
                    Scenario::Hybrid,
                ],
                snr_grid_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
                sweep_snr_db: 10.0,
                n_test: match profile {
                    Profile::Desk => 2000,
                    Profile::Paper => 10_000,
                },
                estimators: vec![EstimatorKind::Ls, EstimatorKind::Lmmse, EstimatorKind::Omp, EstimatorKind::Hyomp],
                covariance_samples: 10_000,
                n_angles: m,
                rings: 7,
                sparsity: None,
                checkpoints: Vec::new(),
            },
        }
    }

    pub fn array(&self) -> Result<ArrayConfig, HarnessError> {
        Ok(ArrayConfig::new(self.antennas, self.wavelength)?)
    }

    pub fn r_range(&self) -> Result<(f64, f64), HarnessError> {
        match self.channel.r_range {
            Some(r) => Ok(r),
            None => {
                let d = self.array()?.rayleigh_distance();
                Ok((0.1 * d, 0.8 * d))
            }
        }
    }

    /// Channel statistics with `far_paths` overriding `L0`.
    pub fn channel_with(&self, far_paths: usize) -> Result<ChannelConfig, HarnessError> {
        Ok(ChannelConfig::new(self.array()?, self.channel.paths, far_paths, self.r_range()?)?)
    }

    pub fn training_channel(&self) -> Result<ChannelConfig, HarnessError> {
        self.channel_with(self.channel.far_paths)
    }

    pub fn architecture(&self, kind: ModelKind) -> Architecture {
        match kind {
            ModelKind::MatCenet => Architecture::MatCenet(MatCenetConfig {
                antennas: self.antennas,
                features: self.model.features,
                heads: self.model.heads,
                ffn_hidden: self.model.ffn_hidden,
            }),
            ModelKind::Xlcnet => Architecture::Xlcnet(XlcnetConfig {
                antennas: self.antennas,
                features: self.model.features,
            }),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        self.training_channel()?;
        self.data.train_snr.validate()?;
        if self.data.n_train == 0 || self.data.n_val == 0 {
            return bad("n_train and n_val must be positive".into());
        }
        let t = &self.train;
        if t.batch_size == 0 || t.epochs == 0 || !(t.learning_rate > 0.0) {
            return bad("batch_size, epochs and learning_rate must be positive".into());
        }
        if t.batch_size > self.data.n_train {
            return bad(format!("batch_size {} exceeds n_train {}", t.batch_size, self.data.n_train));
        }
        let _ = crate::model::Network::<f32>::new(
            &self.architecture(self.model.kind),
            &mut crate::rng::stream_rng(0, crate::rng::Stream::Init),
        )
        .map_err(|e| HarnessError::Config(e.to_string()))?;
        let e = &self.experiment;
        if e.snr_grid_db.is_empty() || e.scenarios.is_empty() {
            return bad("experiment grids must not be empty".into());
        }
        if e.n_test == 0 || e.n_angles == 0 {
            return bad("n_test and n_angles must be positive".into());
        }
        if e.snr_grid_db.iter().chain([&e.sweep_snr_db]).any(|s| !s.is_finite()) {
            return bad("SNR grid values must be finite".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serialises");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_are_valid_and_roundtrip() {
        for p in [Profile::Desk, Profile::Paper] {
            let c = RunConfig::for_profile(p);
            c.validate().unwrap();
            let json = serde_json::to_string_pretty(&c).unwrap();
            let back: RunConfig = serde_json::from_str(&json).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.hash(), c.hash());
        }
    }

    #[test]
    fn desk_range_scales_with_rayleigh_distance() {
        let c = RunConfig::for_profile(Profile::Desk);
        let (lo, hi) = c.r_range().unwrap();
        let d = c.array().unwrap().rayleigh_distance();
        assert!((lo - 0.1 * d).abs() < 1e-12 && (hi - 0.8 * d).abs() < 1e-12);
        assert_eq!(RunConfig::for_profile(Profile::Paper).r_range().unwrap(), (10.0, 80.0));
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        let mut v = serde_json::to_value(RunConfig::for_profile(Profile::Desk)).unwrap();
        v["train"]["epochz"] = 3.into();
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
        let mut c = RunConfig::for_profile(Profile::Desk);
        c.train.batch_size = 5000;
        assert!(c.validate().is_err());
        let mut c = RunConfig::for_profile(Profile::Desk);
        c.model.heads = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn estimator_names() {
        for e in EstimatorKind::ALL {
            assert_eq!(EstimatorKind::parse(e.name()), Some(e));
        }
        assert_eq!(EstimatorKind::parse("foo"), None);
    }
}
