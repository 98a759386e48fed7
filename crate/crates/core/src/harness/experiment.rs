use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{dataset_tensors, generate_dataset, nmse, EstimatorKind, HarnessError, NmseStats, RunConfig, Scenario, SnrPolicy, EVAL_BATCH};
use crate::channel::{ChannelDataset, SignalConfig};
use crate::estimators::{
    build_dictionary, default_distance_rings, fit_covariance, hybrid_omp, omp, CovarianceModel, Dictionary,
    LmmseFilter,
};
use crate::model::Network;
use crate::par;
use crate::rng::{derive_seed, Stream};

pub const RESULTS_HEADER: &str =
    "scenario,estimator,snr_db,l0,nmse_linear,nmse_db,n_samples,ci95_halfwidth_db,seed,config_hash,nmse_ratio_of_sums";

/// One estimator at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: Scenario,
    pub estimator: String,
    pub snr_db: f64,
    pub l0: usize,
    pub stats: NmseStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{RESULTS_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.scenario.name(),
                r.estimator,
                r.snr_db,
                r.l0,
                r.stats.mean(),
                r.stats.mean_db(),
                r.stats.count,
                r.stats.ci95_halfwidth_db(),
                self.seed,
                self.config_hash,
                r.stats.ratio_of_sums()
            );
        }
        s
    }

    /// Rows of one estimator in one scenario, in grid order.
    pub fn series<'a>(&'a self, scenario: Scenario, estimator: &'a str) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.scenario == scenario && r.estimator == estimator)
    }
}

/// `(L0, SNR)` points of a scenario.
fn grid(cfg: &RunConfig, scenario: Scenario) -> Vec<(usize, f64)> {
    let l = cfg.channel.paths;
    let e = &cfg.experiment;
    match scenario {
        Scenario::NearOnly => e.snr_grid_db.iter().map(|&s| (0, s)).collect(),
        Scenario::FarOnly => e.snr_grid_db.iter().map(|&s| (l, s)).collect(),
        Scenario::HybridL0Sweep => (0..=l).map(|l0| (l0, e.sweep_snr_db)).collect(),
        Scenario::Hybrid => e.snr_grid_db.iter().map(|&s| (cfg.channel.far_paths, s)).collect(),
    }
}

fn scenario_index(s: Scenario) -> u64 {
    match s {
        Scenario::NearOnly => 0,
        Scenario::FarOnly => 1,
        Scenario::HybridL0Sweep => 2,
        Scenario::Hybrid => 3,
    }
}

/// Random stream of the test set at `point` of `scenario`.
pub fn test_stream(scenario: Scenario, point: usize) -> Stream {
    Stream::Custom((scenario_index(scenario) << 32) | point as u64)
}

fn covariance(cfg: &RunConfig, l0: usize) -> Result<CovarianceModel, HarnessError> {
    let ds = generate_dataset(
        &cfg.channel_with(l0)?,
        &SnrPolicy::Noiseless,
        cfg.experiment.covariance_samples,
        derive_seed(cfg.seed, Stream::Covariance),
        Stream::Custom(l0 as u64),
    )?;
    Ok(fit_covariance(ds.samples.iter().map(|s| &s.truth))?)
}

fn classical_stats<F>(ds: &ChannelDataset, f: F) -> Result<NmseStats, HarnessError>
where
    F: Fn(&crate::channel::ComplexChannel) -> Result<crate::channel::ComplexChannel, HarnessError> + Sync + Send,
{
    let pairs = par::map_indexed(ds.len(), |i| {
        let s = &ds.samples[i];
        f(&s.estimate).map(|h| (h.distance_sqr(&s.truth), s.truth.norm_sqr()))
    });
    let mut stats = NmseStats::default();
    for p in pairs {
        let (err, sig) = p?;
        stats.push(err, sig);
    }
    Ok(stats)
}

/// Evaluates every configured estimator on fresh seeded test sets.
///
/// All estimators at a grid point see the same samples. Classical estimators
/// come from `cfg.experiment.estimators`; every supplied network is
/// evaluated under its label. Listing `xlcnet` or `matcenet` without a
/// matching network is an error.
pub fn run_experiment(
    cfg: &RunConfig,
    models: &mut [(String, Network<f32>)],
) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let e = &cfg.experiment;
    if e.estimators.is_empty() && models.is_empty() {
        return Err(HarnessError::Config("no estimators selected".into()));
    }
    for kind in e.estimators.iter().filter_map(|k| k.model_kind()) {
        if !models.iter().any(|(_, m)| m.architecture().kind() == kind) {
            return Err(HarnessError::MissingCheckpoint(kind.name().into()));
        }
    }
    for (_, m) in models.iter() {
        let a = m.architecture().antennas();
        if a != cfg.antennas {
            return Err(HarnessError::Mismatch {
                what: "model antenna count",
                expected: cfg.antennas,
                actual: a,
            });
        }
    }

    let has = |k: EstimatorKind| e.estimators.contains(&k);
    let dictionary: Option<Dictionary> = if has(EstimatorKind::Omp) || has(EstimatorKind::Hyomp) {
        let rings = default_distance_rings(cfg.r_range()?, e.rings);
        Some(build_dictionary(&cfg.array()?, e.n_angles, &rings)?)
    } else {
        None
    };
    let l = cfg.channel.paths;
    let k = e.sparsity.unwrap_or(l);
    let mut covariances: BTreeMap<usize, CovarianceModel> = BTreeMap::new();
    let mut rows = Vec::new();

    for &scenario in &e.scenarios {
        for (point, (l0, snr_db)) in grid(cfg, scenario).into_iter().enumerate() {
            let chan = cfg.channel_with(l0)?;
            let ds = generate_dataset(
                &chan,
                &SnrPolicy::Fixed { snr_db },
                e.n_test,
                cfg.seed,
                test_stream(scenario, point),
            )?;
            let sig = SignalConfig::from_snr_db(snr_db);
            let mut push = |estimator: &str, stats: NmseStats| {
                rows.push(ResultRow {
                    scenario,
                    estimator: estimator.to_string(),
                    snr_db,
                    l0,
                    stats,
                })
            };
            for &est in &e.estimators {
                let stats = match est {
                    EstimatorKind::Ls => classical_stats(&ds, |ls| Ok(ls.clone()))?,
                    EstimatorKind::Lmmse => {
                        if !covariances.contains_key(&l0) {
                            covariances.insert(l0, covariance(cfg, l0)?);
                        }
                        let filter = LmmseFilter::new(&covariances[&l0], &sig)?;
                        classical_stats(&ds, |ls| Ok(filter.apply(ls)?))?
                    }
                    EstimatorKind::Omp => {
                        let dict = dictionary.as_ref().expect("dictionary built for omp");
                        classical_stats(&ds, |ls| Ok(omp(ls, dict, k)?.channel))?
                    }
                    EstimatorKind::Hyomp => {
                        let dict = dictionary.as_ref().expect("dictionary built for hyomp");
                        let k_far = l0.min(k);
                        classical_stats(&ds, |ls| Ok(hybrid_omp(ls, dict, k_far, k - k_far)?.channel))?
                    }
                    EstimatorKind::Xlcnet | EstimatorKind::Matcenet => continue,
                };
                push(est.name(), stats);
            }
            if !models.is_empty() {
                let (x, y) = dataset_tensors::<f32>(&ds)?;
                for (label, net) in models.iter_mut() {
                    let pred = net.predict_batched(&x, EVAL_BATCH)?;
                    push(label, nmse(&pred, &y)?);
                }
            }
        }
    }
    Ok(ExperimentResult {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{db, Profile};
    use crate::model::{Architecture, XlcnetConfig};

    fn small() -> RunConfig {
        let mut c = RunConfig::for_profile(Profile::Desk);
        c.antennas = 16;
        c.model.features = 4;
        c.model.ffn_hidden = 16;
        c.data.n_train = 64;
        c.train.batch_size = 16;
        c.experiment.n_test = 200;
        c.experiment.n_angles = 16;
        c.experiment.covariance_samples = 2000;
        c
    }

    #[test]
    fn grid_shapes() {
        let c = small();
        assert_eq!(grid(&c, Scenario::HybridL0Sweep).len(), 7);
        assert_eq!(grid(&c, Scenario::HybridL0Sweep)[6], (6, 10.0));
        assert!(grid(&c, Scenario::FarOnly).iter().all(|&(l0, _)| l0 == 6));
        assert_eq!(grid(&c, Scenario::NearOnly).len(), 7);
    }

    #[test]
    fn ls_follows_snr_and_csv_is_reproducible() {
        let mut c = small();
        c.experiment.estimators = vec![EstimatorKind::Ls, EstimatorKind::Lmmse, EstimatorKind::Hyomp];
        c.experiment.scenarios = vec![Scenario::NearOnly];
        c.experiment.snr_grid_db = vec![0.0, 10.0];
        let a = run_experiment(&c, &mut []).unwrap();
        let b = run_experiment(&c, &mut []).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        for r in a.series(Scenario::NearOnly, "ls") {
            assert!((db(r.stats.ratio_of_sums()) + r.snr_db).abs() < 0.5, "{r:?}");
        }
        let ls: Vec<_> = a.series(Scenario::NearOnly, "ls").collect();
        let lm: Vec<_> = a.series(Scenario::NearOnly, "lmmse").collect();
        for (x, y) in ls.iter().zip(&lm) {
            assert!(y.stats.mean_db() <= x.stats.mean_db() + 0.1);
        }
        assert_eq!(a.to_csv().lines().next().unwrap(), RESULTS_HEADER);
        assert_eq!(a.to_csv().lines().count(), 1 + 6);
    }

    #[test]
    fn networks_need_checkpoints_and_matching_m() {
        let mut c = small();
        c.experiment.estimators = vec![EstimatorKind::Xlcnet];
        assert!(matches!(run_experiment(&c, &mut []), Err(HarnessError::MissingCheckpoint(_))));
        let arch = Architecture::Xlcnet(XlcnetConfig { antennas: 64, features: 2 });
        let net = Network::new(&arch, &mut crate::rng::stream_rng(0, Stream::Init)).unwrap();
        let err = run_experiment(&c, &mut [("xlcnet".into(), net)]).unwrap_err();
        assert!(matches!(err, HarnessError::Mismatch { expected: 16, actual: 64, .. }));
        c.experiment.estimators.clear();
        assert!(run_experiment(&c, &mut []).is_err());
    }

    #[test]
    fn paired_network_rows() {
        let mut c = small();
        c.experiment.estimators = vec![EstimatorKind::Ls];
        c.experiment.scenarios = vec![Scenario::FarOnly];
        c.experiment.snr_grid_db = vec![5.0];
        let arch = Architecture::Xlcnet(XlcnetConfig { antennas: 16, features: 2 });
        let mk = |s| Network::new(&arch, &mut crate::rng::stream_rng(s, Stream::Init)).unwrap();
        let mut models = vec![("a".to_string(), mk(1)), ("b".to_string(), mk(2))];
        let r = run_experiment(&c, &mut models).unwrap();
        let names: Vec<_> = r.rows.iter().map(|r| r.estimator.as_str()).collect();
        assert_eq!(names, ["ls", "a", "b"]);
        assert!(r.rows.iter().all(|x| x.stats.count == 200));
    }
}
