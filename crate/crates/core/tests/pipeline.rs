use proptest::prelude::*;
use xlmimo::channel::{read_dataset, write_dataset, ArrayConfig, ChannelConfig};
use xlmimo::harness::{
    generate_dataset, run_experiment, train, EstimatorKind, Profile, RunConfig, Scenario, SnrPolicy, TrainConfig,
};
use xlmimo::model::{Architecture, MatCenetConfig, Network};
use xlmimo::nn::{read_checkpoint, write_checkpoint, AdamConfig, Layer, Mode, Tensor};
use xlmimo::par::run_sequential;
use xlmimo::rng::{stream_rng, Stream};

fn channel16() -> ChannelConfig {
    let array = ArrayConfig::new(16, 0.01).unwrap();
    let d = array.rayleigh_distance();
    ChannelConfig::new(array, 6, 1, (0.1 * d, 0.8 * d)).unwrap()
}

#[test]
fn dataset_file_train_checkpoint_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let snr = SnrPolicy::Uniform {
        min_db: 0.0,
        max_db: 20.0,
    };
    let tr = generate_dataset(&channel16(), &snr, 64, 3, Stream::Dataset).unwrap();
    let va = generate_dataset(&channel16(), &snr, 16, 3, Stream::Validation).unwrap();
    let path = dir.path().join("train.xlce");
    write_dataset(&tr, &path).unwrap();
    let tr = read_dataset(&path).unwrap();

    let arch = Architecture::MatCenet(MatCenetConfig {
        antennas: 16,
        features: 4,
        heads: 2,
        ffn_hidden: 8,
    });
    let mut net = Network::<f32>::new(&arch, &mut stream_rng(3, Stream::Init)).unwrap();
    let cfg = TrainConfig {
        batch_size: 16,
        epochs: 2,
        adam: AdamConfig::default(),
        seed: 3,
    };
    let out = train(&mut net, &tr, &va, &cfg, None, None).unwrap();
    assert!(out.best_val_nmse_db <= out.initial_val_nmse_db);

    let ck_path = dir.path().join("net.xlnw");
    write_checkpoint(&out.checkpoint, &ck_path).unwrap();
    let mut loaded = Network::<f32>::from_checkpoint(&read_checkpoint(&ck_path).unwrap()).unwrap();
    assert_eq!(loaded.architecture(), arch);

    let mut rc = RunConfig::for_profile(Profile::Desk);
    rc.antennas = 16;
    rc.model.features = 4;
    rc.model.heads = 2;
    rc.data.n_train = 64;
    rc.train.batch_size = 16;
    rc.experiment.n_test = 50;
    rc.experiment.n_angles = 16;
    rc.experiment.scenarios = vec![Scenario::HybridL0Sweep];
    rc.experiment.estimators = vec![EstimatorKind::Ls, EstimatorKind::Omp, EstimatorKind::Matcenet];
    let x = Tensor::<f32>::uniform(&[2, 4, 4, 2], 1.0, &mut stream_rng(0, Stream::Test));
    let a = loaded.forward(&x, Mode::Infer).unwrap();
    let b = net.forward(&x, Mode::Infer).unwrap();
    assert_eq!(a.data(), b.data());
    let res = run_experiment(&rc, &mut [("matcenet".into(), loaded)]).unwrap();
    assert_eq!(res.rows.len(), 7 * 3);
    assert!(res.rows.iter().all(|r| r.stats.mean() >= 0.0));
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let mut rc = RunConfig::for_profile(Profile::Desk);
    rc.antennas = 16;
    rc.model.features = 4;
    rc.data.n_train = 64;
    rc.train.batch_size = 16;
    rc.experiment.n_test = 100;
    rc.experiment.n_angles = 16;
    rc.experiment.covariance_samples = 500;
    rc.experiment.scenarios = vec![Scenario::FarOnly];
    rc.experiment.snr_grid_db = vec![0.0, 10.0];
    let par = run_experiment(&rc, &mut []).unwrap().to_csv();
    let seq = run_sequential(|| run_experiment(&rc, &mut []).unwrap().to_csv());
    assert_eq!(par, seq);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn datasets_are_prefix_stable(seed in 0u64..1000, n in 1usize..20) {
        let snr = SnrPolicy::Fixed { snr_db: 5.0 };
        let short = generate_dataset(&channel16(), &snr, n, seed, Stream::Test).unwrap();
        let long = generate_dataset(&channel16(), &snr, n + 3, seed, Stream::Test).unwrap();
        prop_assert_eq!(&short.samples[..], &long.samples[..n]);
    }

    #[test]
    fn noiseless_estimates_are_exact(seed in 0u64..1000) {
        let ds = generate_dataset(&channel16(), &SnrPolicy::Noiseless, 4, seed, Stream::Dataset).unwrap();
        for s in &ds.samples {
            prop_assert_eq!(&s.estimate, &s.truth);
        }
    }
}
