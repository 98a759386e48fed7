use rand::Rng as _;

use super::{HarnessError, SnrPolicy};
use crate::channel::{
    generate_channel, ls_estimate, pack_real, received_signal, sample_paths, ChannelConfig, ChannelDataset,
    ChannelSample, ComplexChannel, SignalConfig,
};
use crate::nn::{Scalar, Tensor};
use crate::par;
use crate::rng::{indexed_rng, Stream};

/// Draws the true channel and its LS estimate for sample `index` of a stream.
pub fn generate_sample(
    chan: &ChannelConfig,
    snr: &SnrPolicy,
    seed: u64,
    stream: Stream,
    index: u64,
) -> Result<ChannelSample, HarnessError> {
    let mut rng = indexed_rng(seed, stream, index);
    let paths = sample_paths(chan, &mut rng);
    let truth = generate_channel(&paths, &chan.array)?;
    let sig = match *snr {
        SnrPolicy::Fixed { snr_db } => SignalConfig::from_snr_db(snr_db),
        SnrPolicy::Uniform { min_db, max_db } => SignalConfig::from_snr_db(rng.random_range(min_db..=max_db)),
        SnrPolicy::Noiseless => SignalConfig::noiseless(),
    };
    let y = received_signal(&truth, &sig, &mut rng);
    let estimate = ls_estimate(&y, &sig)?;
    Ok(ChannelSample { estimate, truth })
}

/// `n` independent samples. Sample `i` depends only on `(seed, stream, i)`,
/// so the result is identical for any thread count.
pub fn generate_dataset(
    chan: &ChannelConfig,
    snr: &SnrPolicy,
    n: usize,
    seed: u64,
    stream: Stream,
) -> Result<ChannelDataset, HarnessError> {
    chan.validate()?;
    snr.validate()?;
    let samples = par::map_indexed(n, |i| generate_sample(chan, snr, seed, stream, i as u64))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ChannelDataset {
        antennas: chan.array.antennas(),
        snr_db: snr.header_snr(),
        samples,
    })
}

/// Packs channels into an `[N, √M, √M, 2]` tensor.
pub fn pack_batch<'a, T: Scalar, I>(channels: I, antennas: usize) -> Result<Tensor<T>, HarnessError>
where
    I: IntoIterator<Item = &'a ComplexChannel>,
{
    let side = crate::channel::square_side(antennas).ok_or(crate::channel::ChannelError::NotSquare(antennas))?;
    let mut data = Vec::new();
    let mut n = 0;
    for h in channels {
        if h.len() != antennas {
            return Err(HarnessError::Mismatch {
                what: "channel length",
                expected: antennas,
                actual: h.len(),
            });
        }
        data.extend(pack_real(h)?.as_slice().iter().map(|&v| T::of(v)));
        n += 1;
    }
    Ok(Tensor::from_vec(&[n, side, side, 2], data)?)
}

/// Network inputs (LS estimates) and targets (true channels) of a dataset.
pub fn dataset_tensors<T: Scalar>(ds: &ChannelDataset) -> Result<(Tensor<T>, Tensor<T>), HarnessError> {
    let x = pack_batch(ds.samples.iter().map(|s| &s.estimate), ds.antennas)?;
    let y = pack_batch(ds.samples.iter().map(|s| &s.truth), ds.antennas)?;
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{write_dataset_to, ArrayConfig};

    fn chan() -> ChannelConfig {
        let array = ArrayConfig::new(16, 0.01).unwrap();
        let d = array.rayleigh_distance();
        ChannelConfig::new(array, 6, 1, (0.1 * d, 0.8 * d)).unwrap()
    }

    #[test]
    fn deterministic_bytes_and_header() {
        let snr = SnrPolicy::Uniform {
            min_db: -10.0,
            max_db: 20.0,
        };
        let a = generate_dataset(&chan(), &snr, 50, 7, Stream::Dataset).unwrap();
        let b = generate_dataset(&chan(), &snr, 50, 7, Stream::Dataset).unwrap();
        let c = generate_dataset(&chan(), &snr, 50, 7, Stream::Validation).unwrap();
        let bytes = |d: &ChannelDataset| {
            let mut v = Vec::new();
            write_dataset_to(d, &mut v).unwrap();
            v
        };
        assert_eq!(bytes(&a), bytes(&b));
        assert_ne!(bytes(&a), bytes(&c));
        assert_eq!(a.len(), 50);
        assert_eq!(a.antennas, 16);
        assert!(a.snr_db.is_none());
    }

    #[test]
    fn prefix_is_stable_under_size_change() {
        let snr = SnrPolicy::Fixed { snr_db: 5.0 };
        let a = generate_dataset(&chan(), &snr, 10, 3, Stream::Test).unwrap();
        let b = generate_dataset(&chan(), &snr, 20, 3, Stream::Test).unwrap();
        assert_eq!(a.samples[..], b.samples[..10]);
        assert_eq!(a.snr_db, Some(5.0));
    }

    #[test]
    fn noiseless_inputs_equal_targets() {
        let d = generate_dataset(&chan(), &SnrPolicy::Noiseless, 20, 1, Stream::Dataset).unwrap();
        for s in &d.samples {
            assert_eq!(s.estimate, s.truth);
        }
        let (x, y) = dataset_tensors::<f32>(&d).unwrap();
        assert_eq!(x.shape(), &[20, 4, 4, 2]);
        assert_eq!(x.data(), y.data());
    }

    #[test]
    fn channel_power_is_normalised() {
        let d = generate_dataset(&chan(), &SnrPolicy::Noiseless, 4000, 2, Stream::Dataset).unwrap();
        let p: f64 = d.samples.iter().map(|s| s.truth.norm_sqr()).sum::<f64>() / (4000.0 * 16.0);
        assert!((p - 1.0).abs() < 0.05, "{p}");
    }
}
