use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::NumericsError;

/// Seedable random stream. Identical `(seed, stream)` pairs replay identical
/// draws; distinct stream ids select independent ChaCha streams.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    /// Stream keyed by a list of labels (e.g. unit id, arm, purpose).
    pub fn keyed(seed: u64, labels: &[u64]) -> Self {
        Self::new(seed, stream_id(labels))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Child stream derived from this stream id and a label.
    pub fn fork(&self, label: u64) -> Rng {
        Rng::new(self.seed, stream_id(&[self.stream, label]))
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes labels into a stream id.
pub fn stream_id(labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(0x5EED_u64, |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

/// `n` i.i.d. draws from N(mean, sd^2).
pub fn sample_normal(rng: &mut Rng, mean: f64, sd: f64, n: usize) -> Result<Vec<f64>, NumericsError> {
    if !(sd >= 0.0) || !mean.is_finite() || !sd.is_finite() {
        return Err(NumericsError::InvalidArgument(format!(
            "normal parameters must be finite with sd >= 0, got mean {mean}, sd {sd}"
        )));
    }
    Ok((0..n).map(|_| mean + sd * rng.normal()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sd_returns_mean() {
        let mut rng = Rng::new(1, 0);
        let xs = sample_normal(&mut rng, 3.5, 0.0, 10).unwrap();
        assert!(xs.iter().all(|&x| x == 3.5));
    }

    #[test]
    fn negative_sd_is_rejected() {
        let mut rng = Rng::new(1, 0);
        assert!(sample_normal(&mut rng, 0.0, -1.0, 3).is_err());
    }

    #[test]
    fn replay_is_identical() {
        let a = sample_normal(&mut Rng::new(9, 4), 0.0, 1.0, 100).unwrap();
        let b = sample_normal(&mut Rng::new(9, 4), 0.0, 1.0, 100).unwrap();
        let c = sample_normal(&mut Rng::new(9, 5), 0.0, 1.0, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn law_of_large_numbers() {
        let xs = sample_normal(&mut Rng::new(2024, 0), 0.0, 1.0, 1_000_000).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn streams_look_independent() {
        let a = sample_normal(&mut Rng::new(3, 1), 0.0, 1.0, 20_000).unwrap();
        let b = sample_normal(&mut Rng::new(3, 2), 0.0, 1.0, 20_000).unwrap();
        let r = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / 20_000.0;
        assert!(r.abs() < 4.0 / (20_000f64).sqrt());
    }
}
