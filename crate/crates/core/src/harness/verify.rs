use std::f64::consts::FRAC_PI_2;
use std::fmt;

use rand::Rng as _;

use super::{generate_dataset, mse_loss, HarnessError, SnrPolicy};
use crate::channel::{
    far_field_steering, near_field_steering, rayleigh_distance, read_dataset_from, write_dataset_to, ArrayConfig,
    ChannelConfig,
};
use crate::estimators::{fit_covariance, read_covariance_from, write_covariance_to};
use crate::model::{ConvBlock, Encoder, FeatureMapAttention, MatCenet, MatCenetConfig, SpatialAttention};
use crate::nn::gradcheck::{check_layer, grad_check};
use crate::nn::{
    read_checkpoint_from, write_checkpoint_to, AttentionConfig, BatchNorm, Checkpoint, Conv2d, Layer, LayerNorm,
    Linear, Mode, MultiHeadAttention, NnError, Parameterized, Relu, Role, Tensor,
};
use crate::rng::{stream_rng, Rng, Stream};

/// Which side of the tolerance counts as a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    AtMost,
    /// Negative controls: the measured error must exceed the tolerance.
    Above,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub bound: Bound,
}

impl Check {
    fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            tolerance,
            bound: Bound::AtMost,
        }
    }

    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::AtMost => self.measured <= self.tolerance,
            Bound::Above => self.measured > self.tolerance,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.bound {
            Bound::AtMost => "<=",
            Bound::Above => ">",
        };
        write!(
            f,
            "{} {:<40} measured {:.3e} (want {op} {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {failed} failed", self.checks.len())
    }
}

fn angle(rng: &mut Rng) -> f64 {
    rng.random_range(-FRAC_PI_2..=FRAC_PI_2)
}

fn steering_checks(seed: u64, out: &mut Vec<Check>) -> Result<(), HarnessError> {
    let mut rng = stream_rng(seed, Stream::Custom(1));
    let mut norm_err = 0.0f64;
    let mut limit_err = 0.0f64;
    for m in [16, 64, 256] {
        let array = ArrayConfig::new(m, 0.01)?;
        let d = array.rayleigh_distance();
        for _ in 0..100 {
            let phi = angle(&mut rng);
            let r = rng.random_range(0.05 * d..=2.0 * d);
            let far = far_field_steering(&array, phi)?;
            let near = near_field_steering(&array, phi, r)?;
            norm_err = norm_err.max((far.norm() - 1.0).abs()).max((near.norm() - 1.0).abs());
            let distant = near_field_steering(&array, phi, 1e6 * d)?;
            let gap = far.0.iter().zip(&distant.0).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            limit_err = limit_err.max(gap);
        }
    }
    out.push(Check::at_most("steering vectors unit norm", norm_err, 1e-12));
    out.push(Check::at_most("near field -> far field at 1e6 D_Ray", limit_err, 1e-4));
    let d = rayleigh_distance(256, 0.01, 0.005)?;
    out.push(Check::at_most("rayleigh distance (256, 0.01, λ/2) = 327.68", (d - 327.68).abs(), 1e-9));
    Ok(())
}

fn ls_law_checks(seed: u64, out: &mut Vec<Check>) -> Result<(), HarnessError> {
    let array = ArrayConfig::new(64, 0.01)?;
    let d = array.rayleigh_distance();
    let chan = ChannelConfig::new(array, 6, 1, (0.1 * d, 0.8 * d))?;
    for snr_db in [0.0, 10.0] {
        let ds = generate_dataset(&chan, &SnrPolicy::Fixed { snr_db }, 10_000, seed, Stream::Custom(2))?;
        let mut stats = super::NmseStats::default();
        for s in &ds.samples {
            stats.push(s.estimate.distance_sqr(&s.truth), s.truth.norm_sqr());
        }
        // The oracle is a ratio of expectations, E‖n‖²/E‖h‖² = σ²/P.
        out.push(Check::at_most(
            format!("LS error/signal energy = -SNR at {snr_db} dB (dB error)"),
            (super::db(stats.ratio_of_sums()) + snr_db).abs(),
            0.3,
        ));
    }
    Ok(())
}

fn input(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    Tensor::uniform(shape, 1.0, rng)
}

fn layer_check<L: Layer<f64>>(
    name: &str,
    layer: &mut L,
    x: &Tensor<f64>,
    mode: Mode,
    tol: f64,
    out: &mut Vec<Check>,
) -> Result<(), HarnessError> {
    let rep = check_layer(layer, x, mode, 3, tol)?;
    out.push(Check::at_most(format!("gradient {name}"), rep.max_rel_error(), tol));
    Ok(())
}

/// Wraps a layer and scales its input gradient by `1 + error`.
struct Corrupted<L> {
    inner: L,
    error: f64,
}

impl<L: Parameterized<f64>> Parameterized<f64> for Corrupted<L> {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<f64>, Role)) {
        self.inner.visit(f);
    }
}

impl<L: Layer<f64>> Layer<f64> for Corrupted<L> {
    fn forward(&mut self, x: &Tensor<f64>, mode: Mode) -> Result<Tensor<f64>, NnError> {
        self.inner.forward(x, mode)
    }

    fn backward(&mut self, dy: &Tensor<f64>) -> Result<Tensor<f64>, NnError> {
        let e = self.error;
        Ok(self.inner.backward(dy)?.map(|v| v * (1.0 + e)))
    }
}

/// Largest relative error the gradient check reports for a convolution
/// whose input gradient is off by one percent.
pub fn corrupted_conv_error(seed: u64) -> Result<f64, HarnessError> {
    let mut rng = stream_rng(seed, Stream::Custom(4));
    let mut layer = Corrupted {
        inner: Conv2d::<f64>::new(3, 2, 3, &mut rng),
        error: 0.01,
    };
    let x = input(&[2, 4, 4, 2], &mut rng);
    Ok(check_layer(&mut layer, &x, Mode::Train, 3, 1e-4)?.max_rel_error())
}

fn gradient_checks(seed: u64, out: &mut Vec<Check>) -> Result<(), HarnessError> {
    let mut rng = stream_rng(seed, Stream::Custom(3));
    let r = &mut rng;

    let x = input(&[2, 3, 5], r);
    layer_check("linear", &mut Linear::<f64>::new(5, 4, r), &x, Mode::Train, 1e-6, out)?;

    let x = input(&[2, 4, 4, 3], r);
    let mut conv = Conv2d::<f64>::new(3, 3, 4, r);
    conv.bias.data_mut().iter_mut().for_each(|b| *b = r.random_range(-0.5..0.5));
    layer_check("conv2d 3x3", &mut conv, &x, Mode::Train, 1e-4, out)?;

    let x = input(&[3, 2, 2, 3], r).map(|v| 2.0 * v);
    let mut bn = BatchNorm::<f64>::new(3);
    bn.gamma.data_mut().copy_from_slice(&[1.5, -0.7, 0.3]);
    layer_check("batch norm (train)", &mut bn, &x, Mode::Train, 1e-4, out)?;
    layer_check("batch norm (infer)", &mut bn, &x, Mode::Infer, 1e-4, out)?;

    let x = input(&[2, 3, 6], r);
    layer_check("layer norm", &mut LayerNorm::<f64>::new(6), &x, Mode::Train, 1e-4, out)?;

    // Keep inputs at least 0.1 away from the kink.
    let x = input(&[4, 6], r).map(|v| v + 0.1 * v.signum());
    layer_check("relu", &mut Relu::new(), &x, Mode::Train, 1e-4, out)?;

    let x = input(&[2, 5, 8], r);
    let mut mha = MultiHeadAttention::<f64>::new(AttentionConfig::new(8, 2)?, r);
    layer_check("multi-head attention", &mut mha, &x, Mode::Train, 1e-4, out)?;

    let x = input(&[2, 16, 4], r);
    layer_check("feature-map attention", &mut FeatureMapAttention::<f64>::new(16, 2, r)?, &x, Mode::Train, 1e-4, out)?;
    layer_check("spatial attention", &mut SpatialAttention::<f64>::new(4, 2, r)?, &x, Mode::Train, 1e-4, out)?;
    layer_check("encoder", &mut Encoder::<f64>::new(16, 4, 2, 8, r)?, &x, Mode::Train, 1e-4, out)?;

    let x = input(&[3, 4, 4, 2], r);
    layer_check("conv block", &mut ConvBlock::<f64>::new(2, 3, false, r), &x, Mode::Train, 1e-4, out)?;

    let pred = input(&[2, 4, 4, 2], r);
    let target = input(&[2, 4, 4, 2], r);
    let (_, grad) = mse_loss(&pred, &target)?;
    let rep = grad_check(
        pred.data(),
        grad.data(),
        |v| {
            let p = Tensor::from_vec(pred.shape(), v.to_vec()).expect("same shape");
            mse_loss(&p, &target).expect("same shape").0
        },
        1e-6,
    );
    out.push(Check::at_most("gradient mse loss", rep.max_rel_error, 1e-6));

    let cfg = MatCenetConfig {
        antennas: 16,
        features: 8,
        heads: 2,
        ffn_hidden: 16,
    };
    let x = input(&[2, 4, 4, 2], r);
    let mut net = MatCenet::<f64>::new(cfg, r)?;
    // A zero output scale would hide every gradient upstream of it.
    net.tail.bn.gamma.data_mut().copy_from_slice(&[0.8, -1.3]);
    layer_check("mat-cenet end to end", &mut net, &x, Mode::Train, 1e-3, out)?;

    out.push(Check {
        name: "negative control: corrupted conv backward".into(),
        measured: corrupted_conv_error(seed)?,
        tolerance: 1e-4,
        bound: Bound::Above,
    });
    Ok(())
}

/// Largest deviation of any attention row sum from one.
pub fn row_sum_error(weights: &Tensor<f64>) -> f64 {
    let cols = *weights.shape().last().unwrap_or(&1);
    weights
        .data()
        .chunks(cols)
        .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

fn attention_checks(seed: u64, out: &mut Vec<Check>) -> Result<(), HarnessError> {
    let mut rng = stream_rng(seed, Stream::Custom(5));
    let cfg = MatCenetConfig {
        antennas: 64,
        features: 8,
        heads: 2,
        ffn_hidden: 32,
    };
    let mut net = MatCenet::<f64>::new(cfg, &mut rng)?;
    let x = input(&[3, 8, 8, 2], &mut rng).map(|v| 3.0 * v);
    let (_, acts) = net.forward_traced(&x, Mode::Train)?;
    out.push(Check::at_most("feature-map weights row-stochastic", row_sum_error(&acts.feature_weights), 1e-12));
    out.push(Check::at_most("spatial weights row-stochastic", row_sum_error(&acts.spatial_weights), 1e-12));

    let x = input(&[2, 16, 4], &mut rng);
    let mut fma = FeatureMapAttention::<f64>::new(16, 2, &mut rng)?;
    fma.mha.w_v.fill(0.0);
    let y = fma.forward(&x, Mode::Infer)?;
    out.push(Check::at_most("feature-map attention, zero W_v = identity", y.sub(&x)?.max_abs(), 0.0));
    let mut sa = SpatialAttention::<f64>::new(4, 2, &mut rng)?;
    sa.mha.w_v.fill(0.0);
    let y = sa.forward(&x, Mode::Infer)?;
    out.push(Check::at_most("spatial attention, zero W_v = identity", y.sub(&x)?.max_abs(), 0.0));
    Ok(())
}

fn mismatch(equal: bool) -> f64 {
    if equal {
        0.0
    } else {
        1.0
    }
}

fn roundtrip_checks(seed: u64, out: &mut Vec<Check>) -> Result<(), HarnessError> {
    let array = ArrayConfig::new(16, 0.01)?;
    let d = array.rayleigh_distance();
    let chan = ChannelConfig::new(array, 6, 1, (0.1 * d, 0.8 * d))?;
    let ds = generate_dataset(&chan, &SnrPolicy::Fixed { snr_db: 5.0 }, 20, seed, Stream::Custom(6))?;
    let mut buf = Vec::new();
    write_dataset_to(&ds, &mut buf)?;
    let back = read_dataset_from(buf.as_slice())?;
    out.push(Check::at_most("dataset file roundtrip", mismatch(back == ds.quantized()), 0.0));

    let mut net = MatCenet::<f32>::new(
        MatCenetConfig {
            antennas: 16,
            features: 4,
            heads: 2,
            ffn_hidden: 8,
        },
        &mut stream_rng(seed, Stream::Init),
    )?;
    let ck = Checkpoint::from_model(&mut net);
    let mut buf = Vec::new();
    write_checkpoint_to(&ck, &mut buf)?;
    let back = read_checkpoint_from(buf.as_slice())?;
    out.push(Check::at_most("checkpoint file roundtrip", mismatch(back == ck), 0.0));

    let cov = fit_covariance(ds.samples.iter().map(|s| &s.truth))?;
    let mut buf = Vec::new();
    write_covariance_to(&cov, &mut buf)?;
    let back = read_covariance_from(buf.as_slice())?;
    out.push(Check::at_most("covariance file roundtrip", mismatch(back.r == cov.r), 0.0));
    Ok(())
}

/// Runs the analytic oracles, gradient checks, attention structure checks
/// and file roundtrips.
pub fn run_verification(seed: u64) -> Result<VerifyReport, HarnessError> {
    let mut checks = Vec::new();
    steering_checks(seed, &mut checks)?;
    ls_law_checks(seed, &mut checks)?;
    gradient_checks(seed, &mut checks)?;
    attention_checks(seed, &mut checks)?;
    roundtrip_checks(seed, &mut checks)?;
    Ok(VerifyReport { checks })
}
