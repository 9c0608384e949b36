//! Rayleigh block fading with per-receiver antenna modes.
//!
//! Every receiver `k` sees, in mode `m` and coherence block `q`, a `1 x A`
//! vector `h_k^[m]` of i.i.d. CN(0,1) entries. Randomness comes from ChaCha8
//! streams selected by key, so any draw can be reproduced without replaying
//! the ones before it.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{BiaError, Result};
use crate::linalg::{c64, ComplexMatrix};

const DOMAIN_CHANNEL: u64 = 1;
const DOMAIN_NOISE: u64 = 2;
const DOMAIN_SYMBOLS: u64 = 3;
pub(crate) const DOMAIN_PAYLOAD: u64 = 5;

/// Generator for one keyed substream of a run seed.
pub fn substream(seed: u64, domain: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 60) ^ (a << 40) ^ (b & ((1 << 40) - 1)));
    rng
}

/// One CN(0, variance) draw: independent real and imaginary parts of variance `variance / 2`.
pub fn complex_normal<R: Rng>(rng: &mut R, variance: f64) -> Complex64 {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sd * re, sd * im)
}

/// `count` unit-power complex Gaussian symbols from a keyed substream.
pub fn random_symbols(seed: u64, a: u64, b: u64, count: usize) -> Vec<Complex64> {
    let mut rng = substream(seed, DOMAIN_SYMBOLS, a, b);
    (0..count).map(|_| complex_normal(&mut rng, 1.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelBook {
    pub users: usize,
    pub modes: usize,
    pub antennas: usize,
    pub blocks: usize,
    pub coherence: usize,
    pub seed: u64,
    #[serde(skip)]
    coeffs: Vec<Complex64>,
}

pub fn draw_channels(
    users: usize,
    modes: usize,
    antennas: usize,
    blocks: usize,
    coherence: usize,
    seed: u64,
) -> Result<ChannelBook> {
    if users == 0 || modes == 0 || antennas == 0 || blocks == 0 || coherence == 0 {
        return Err(BiaError::param("channel dimensions must all be at least 1"));
    }
    let mut coeffs = Vec::with_capacity(users * modes * blocks * antennas);
    for k in 1..=users {
        let mut rng = substream(seed, DOMAIN_CHANNEL, k as u64, 0);
        for _ in 0..modes * blocks * antennas {
            coeffs.push(complex_normal(&mut rng, 1.0));
        }
    }
    Ok(ChannelBook { users, modes, antennas, blocks, coherence, seed, coeffs })
}

impl ChannelBook {
    /// `h_k^[m]` in coherence block `block` (all 1-based).
    pub fn vector(&self, k: usize, mode: usize, block: usize) -> &[Complex64] {
        assert!((1..=self.users).contains(&k), "receiver {k} out of range");
        assert!((1..=self.modes).contains(&mode), "mode {mode} out of range");
        assert!((1..=self.blocks).contains(&block), "block {block} out of range");
        let start = (((k - 1) * self.blocks + block - 1) * self.modes + mode - 1) * self.antennas;
        &self.coeffs[start..start + self.antennas]
    }

    /// Coherence block of a 1-based slot.
    pub fn block_of(&self, slot: usize) -> usize {
        slot.div_ceil(self.coherence)
    }

    /// Slots covered by the book.
    pub fn span(&self) -> usize {
        self.blocks * self.coherence
    }

    /// All modes of receiver `k` stacked: `modes x antennas`.
    pub fn receiver_channel_matrix(&self, k: usize, block: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.modes, self.antennas, |m, a| self.vector(k, m + 1, block)[a])
    }

    /// Rows `1..=modes` restricted to the given antenna columns (1-based).
    pub fn mode_submatrix(&self, k: usize, block: usize, modes: usize, columns: &[usize]) -> ComplexMatrix {
        ComplexMatrix::from_fn(modes, columns.len(), |m, j| self.vector(k, m + 1, block)[columns[j] - 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReceivedSignal {
    pub receiver: usize,
    pub samples: Vec<Complex64>,
    pub noise_variance: f64,
    pub pattern: Vec<u32>,
}

/// `y_k(t) = h_k^[m_k(t)] x(t) + z_k(t)` with `x` given row-major as `slots x antennas`.
///
/// Noise comes from the substream keyed by `(k, call_index)`; `noise_variance = 0`
/// returns the noiseless signal.
pub fn receive(
    book: &ChannelBook,
    k: usize,
    pattern: &[u32],
    x: &[Complex64],
    noise_variance: f64,
    call_index: u64,
) -> Result<ReceivedSignal> {
    let a = book.antennas;
    if k == 0 || k > book.users {
        return Err(BiaError::param(format!("receiver {k} outside 1..={}", book.users)));
    }
    if x.len() != pattern.len() * a {
        return Err(BiaError::param(format!(
            "transmit matrix has {} entries, expected {} slots x {a} antennas",
            x.len(),
            pattern.len()
        )));
    }
    if pattern.len() > book.span() {
        return Err(BiaError::param(format!(
            "{} slots exceed the {} covered by the channel book",
            pattern.len(),
            book.span()
        )));
    }
    if let Some(m) = pattern.iter().find(|&&m| m == 0 || m as usize > book.modes) {
        return Err(BiaError::param(format!("mode {m} outside 1..={}", book.modes)));
    }
    if !(noise_variance >= 0.0) {
        return Err(BiaError::param("noise variance must be non-negative"));
    }
    let mut rng = substream(book.seed, DOMAIN_NOISE, k as u64, call_index);
    let samples = pattern
        .iter()
        .enumerate()
        .map(|(t, &m)| {
            let h = book.vector(k, m as usize, book.block_of(t + 1));
            let clean: Complex64 = h.iter().zip(&x[t * a..(t + 1) * a]).map(|(h, x)| h * x).sum();
            if noise_variance > 0.0 {
                clean + complex_normal(&mut rng, noise_variance)
            } else {
                clean
            }
        })
        .collect();
    Ok(ReceivedSignal { receiver: k, samples, noise_variance, pattern: pattern.to_vec() })
}

/// Scale that brings the worst expected per-antenna slot energy to `power`.
pub fn power_scale(peak_energy: f64, power: f64) -> Result<f64> {
    if !(power > 0.0) {
        return Err(BiaError::param("power must be positive"));
    }
    if !(peak_energy > 0.0) {
        return Ok(power.sqrt());
    }
    Ok((power / peak_energy).sqrt())
}

/// Applies [`power_scale`] to a transmit matrix and reports the scale used.
pub fn power_normalize(x: &[Complex64], peak_energy: f64, power: f64) -> Result<(Vec<Complex64>, f64)> {
    let s = power_scale(peak_energy, power)?;
    Ok((x.iter().map(|v| v * c64(s)).collect(), s))
}
