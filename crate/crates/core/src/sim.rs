//! End-to-end runs: random symbols through a drawn channel book, decoded at
//! every receiver and compared against what was sent.

use num_complex::Complex64;
use serde::Serialize;

use crate::bcgm::{rank_profile, undo_block_channel, BcgmScheme, DecoderColumns, SchemeParams};
use crate::channel::{draw_channels, power_scale, random_symbols, receive};
use crate::error::{BiaError, Result};
use crate::linalg::{c64, DEFAULT_TOL};
use crate::metrics::{dimension_count, RunDimensions, Setting};
use crate::usi::{SideInformation, UsiLayout, UsiScheme};
use crate::Rational;

/// Noise-free unless `snr_db` is set; with noise, transmit power is scaled to
/// the per-antenna average and noise has unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub snr_db: Option<f64>,
}

impl RunConfig {
    pub fn noiseless(seed: u64) -> Self {
        RunConfig { seed, snr_db: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReceiverSummary {
    pub rx: usize,
    pub messages: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodingReport {
    #[serde(flatten)]
    pub setting: Setting,
    pub seed: u64,
    pub snr_db: Option<f64>,
    pub slots: usize,
    pub symbols_per_message: usize,
    pub messages: usize,
    pub full_rank: bool,
    /// Receiver-message pairs decoded, so a groupcast message counts once per member.
    pub recovered: usize,
    pub max_relative_error: f64,
    pub receivers: Vec<ReceiverSummary>,
    pub warnings: Vec<String>,
    #[serde(serialize_with = "crate::serialize_opt_rational")]
    pub dof_per_message: Option<Rational>,
    #[serde(serialize_with = "crate::serialize_opt_rational")]
    pub dof_sum: Option<Rational>,
}

impl DecodingReport {
    pub fn dimensions(&self) -> RunDimensions {
        RunDimensions {
            symbols_per_message: self.symbols_per_message,
            messages: self.messages,
            slots: self.slots,
            full_rank: self.full_rank,
        }
    }

    fn finish(mut self) -> Self {
        if self.snr_db.is_none() {
            if let Ok((per, sum)) = dimension_count(&self.dimensions()) {
                self.dof_per_message = Some(per);
                self.dof_sum = Some(sum);
            }
        }
        self.recovered = self.receivers.iter().map(|r| r.messages).sum();
        self.max_relative_error = self.receivers.iter().map(|r| r.max_relative_error).fold(0.0, f64::max);
        self
    }
}

pub fn relative_error(estimate: &[Complex64], truth: &[Complex64]) -> f64 {
    let err: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b).norm_sqr()).sum();
    let norm: f64 = truth.iter().map(|z| z.norm_sqr()).sum();
    if norm == 0.0 {
        err.sqrt()
    } else {
        (err / norm).sqrt()
    }
}

fn noise(config: &RunConfig, energy: f64) -> Result<(f64, f64)> {
    match config.snr_db {
        None => Ok((1.0, 0.0)),
        Some(db) => Ok((power_scale(energy, 10f64.powf(db / 10.0))?, 1.0)),
    }
}

fn scaled(x: Vec<Complex64>, scale: f64) -> Vec<Complex64> {
    if scale == 1.0 {
        x
    } else {
        x.into_iter().map(|v| v * c64(scale)).collect()
    }
}

/// Groupcast broadcast run; `modes = 1` sends one message per slot.
pub fn simulate_bcgm(users: usize, group_size: usize, modes: usize, config: RunConfig) -> Result<DecodingReport> {
    let params = SchemeParams::new(users, group_size, modes)?;
    let setting = Setting::Bcgm { users, group_size, modes };
    let mut report = DecodingReport {
        setting,
        seed: config.seed,
        snr_db: config.snr_db,
        slots: params.slots,
        symbols_per_message: params.streams,
        messages: params.groups,
        full_rank: true,
        recovered: 0,
        max_relative_error: 0.0,
        receivers: Vec::new(),
        warnings: Vec::new(),
        dof_per_message: None,
        dof_sum: None,
    };
    if modes == 1 {
        let msgs: Vec<Vec<Complex64>> = (0..params.groups).map(|n| random_symbols(config.seed, 0, n as u64, 1)).collect();
        let table = crate::combinatorics::ordered_subsets(users, group_size)?;
        let (scale, var) = noise(&config, 1.0)?;
        let x = scaled(msgs.iter().map(|w| w[0]).collect(), scale);
        let book = draw_channels(users, 1, 1, 1, params.slots, config.seed)?;
        for rx in 1..=users {
            let y = receive(&book, rx, &vec![1; params.slots], &x, var, rx as u64)?;
            let h = book.vector(rx, 1, 1)[0] * c64(scale);
            let wanted = table.desired_indices(rx)?;
            let worst = wanted
                .iter()
                .map(|&n| relative_error(&[y.samples[n - 1] / h], &msgs[n - 1]))
                .fold(0.0, f64::max);
            report.receivers.push(ReceiverSummary { rx, messages: wanted.len(), max_relative_error: worst });
        }
        return Ok(report.finish());
    }

    let scheme = BcgmScheme::new(params)?;
    let mut decoders = Vec::with_capacity(users);
    for rx in 1..=users {
        let pattern = scheme.pattern(rx);
        let profile = rank_profile(pattern, &scheme.precoders, DEFAULT_TOL)?;
        if !profile.separable(&pattern.desired, &scheme.precoders) {
            report.full_rank = false;
            report.warnings.push(format!("receiver {rx} rank profile {:?}", profile.per_message));
        }
        decoders.push(scheme.decoders(rx)?);
    }
    report.receivers = bcgm_recovery(&scheme, &decoders, config)?;
    Ok(report.finish())
}

/// Sends random symbols through `scheme` and decodes them with `decoders[rx - 1]`
/// at every receiver.
pub fn bcgm_recovery(
    scheme: &BcgmScheme,
    decoders: &[Vec<DecoderColumns>],
    config: RunConfig,
) -> Result<Vec<ReceiverSummary>> {
    let p = &scheme.params;
    let msgs: Vec<Vec<Complex64>> =
        (0..p.groups).map(|n| random_symbols(config.seed, 0, n as u64, p.streams)).collect();
    let (scale, var) = noise(&config, scheme.precoders.mean_antenna_energy())?;
    let x = scaled(scheme.precoders.encode(&msgs)?, scale);
    let book = draw_channels(p.users, p.modes, p.modes, 1, p.slots, config.seed)?;
    (1..=p.users)
        .map(|rx| {
            let y = receive(&book, rx, &scheme.pattern(rx).modes, &x, var, rx as u64)?;
            let h = book.receiver_channel_matrix(rx, 1) * c64(scale);
            let mut worst = 0.0f64;
            for d in &decoders[rx - 1] {
                let w = undo_block_channel(&d.apply(&y.samples), &h)?;
                worst = worst.max(relative_error(&w, &msgs[d.msg - 1]));
            }
            Ok(ReceiverSummary { rx, messages: decoders[rx - 1].len(), max_relative_error: worst })
        })
        .collect()
}

/// Side-information unicast run over the layout chosen for `(users, group_size, modes)`.
pub fn simulate_usi(users: usize, group_size: usize, modes: usize, config: RunConfig) -> Result<DecodingReport> {
    let scheme = UsiScheme::new(users, group_size, modes)?;
    let setting = Setting::Usi { users, group_size, modes };
    let len = scheme.message_len();
    let count = scheme.table.message_count();
    let mut report = DecodingReport {
        setting,
        seed: config.seed,
        snr_db: config.snr_db,
        slots: scheme.slots(),
        symbols_per_message: len,
        messages: count,
        full_rank: true,
        recovered: 0,
        max_relative_error: 0.0,
        receivers: Vec::new(),
        warnings: Vec::new(),
        dof_per_message: None,
        dof_sum: None,
    };
    let msgs: Vec<Vec<Complex64>> = (0..count).map(|i| random_symbols(config.seed, 0, i as u64, len)).collect();
    let (scale, var) = noise(&config, scheme.mean_energy())?;
    let x = scaled(scheme.transmit(&msgs)?, scale);
    let book = draw_channels(users, scheme.rx_modes(), scheme.tx_count(), 1, scheme.slots(), config.seed)?;
    for rx in 1..=users {
        if let UsiLayout::Aligned(b) | UsiLayout::Central(Some(b)) = &scheme.layout {
            let pattern = b.pattern(rx);
            let profile = rank_profile(pattern, &b.precoders, DEFAULT_TOL)?;
            if !profile.separable(&pattern.desired, &b.precoders) {
                report.full_rank = false;
                report.warnings.push(format!("receiver {rx} rank profile {:?}", profile.per_message));
            }
        }
        let y = receive(&book, rx, &scheme.pattern(rx), &x, var, rx as u64)?;
        // side information is known exactly, so it is subtracted at transmit scale
        let side_msgs: Vec<Vec<Complex64>> =
            msgs.iter().map(|w| w.iter().map(|v| v * c64(scale)).collect()).collect();
        let side = SideInformation::gather(rx, &scheme.table, &side_msgs);
        let out = scheme.decode(rx, &y.samples, &side, &scheme.decoders(rx)?, &book, 1)?;
        if out.messages.len() != scheme.wanted(rx).len() {
            return Err(BiaError::Decoding(format!(
                "receiver {rx} decoded {} of {} wanted messages",
                out.messages.len(),
                scheme.wanted(rx).len()
            )));
        }
        let worst = out
            .messages
            .iter()
            .map(|d| {
                let est: Vec<Complex64> = d.symbols.iter().map(|v| v / c64(scale)).collect();
                relative_error(&est, &msgs[scheme.table.index(d.group, d.index)])
            })
            .fold(0.0, f64::max);
        report.warnings.extend(out.warnings);
        report.receivers.push(ReceiverSummary { rx, messages: out.messages.len(), max_relative_error: worst });
    }
    Ok(report.finish())
}
