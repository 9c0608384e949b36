use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;

use bia_core::metrics::Setting;
use bia_core::{BiaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Bcgm,
    Usi,
    Mapreduce,
    Mimo,
}

/// Flags shared by every subcommand. Values from `--config` win over flags.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    /// Number of users (nodes).
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Group size.
    #[arg(long, global = true)]
    pub g: Option<usize>,
    /// Computation load of a MapReduce job.
    #[arg(long, global = true)]
    pub r: Option<usize>,
    /// Antennas at the transmitter and modes per receive antenna.
    #[arg(long, global = true)]
    pub m: Option<usize>,
    #[arg(long = "m-tx", global = true)]
    pub m_tx: Option<usize>,
    #[arg(long = "m-rx", global = true)]
    pub m_rx: Option<usize>,
    #[arg(long = "snr-db", global = true, allow_negative_numbers = true)]
    #[serde(default)]
    pub snr_db: Vec<f64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true, env = "BIA_SIM_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    #[serde(default)]
    pub noiseless: bool,
    /// Write records here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write the rate curve of `sweep` as CSV.
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    /// IVA payload bytes per file for `mapreduce-demo`.
    #[arg(long = "payload-bytes", global = true)]
    pub payload_bytes: Option<usize>,
    /// Largest user count in the `verify` grid.
    #[arg(long = "max-k", global = true)]
    pub max_k: Option<usize>,
    /// Channel seeds per case in `verify`.
    #[arg(long, global = true)]
    pub seeds: Option<usize>,
}

impl ExperimentConfig {
    /// Fields set in the file at `path` replace those given on the command line.
    pub fn overlay_file(self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BiaError::param(format!("cannot read config {}: {e}", path.display())))?;
        let file: ExperimentConfig =
            toml::from_str(&text).map_err(|e| BiaError::param(format!("bad config {}: {e}", path.display())))?;
        Ok(self.overlay(file))
    }

    pub fn overlay(self, top: ExperimentConfig) -> Self {
        ExperimentConfig {
            mode: top.mode.or(self.mode),
            k: top.k.or(self.k),
            g: top.g.or(self.g),
            r: top.r.or(self.r),
            m: top.m.or(self.m),
            m_tx: top.m_tx.or(self.m_tx),
            m_rx: top.m_rx.or(self.m_rx),
            snr_db: if top.snr_db.is_empty() { self.snr_db } else { top.snr_db },
            trials: top.trials.or(self.trials),
            seed: top.seed.or(self.seed),
            noiseless: top.noiseless || self.noiseless,
            out: top.out.or(self.out),
            csv: top.csv.or(self.csv),
            payload_bytes: top.payload_bytes.or(self.payload_bytes),
            max_k: top.max_k.or(self.max_k),
            seeds: top.seeds.or(self.seeds),
        }
    }

    fn need<T: Copy>(v: Option<T>, flag: &str) -> Result<T> {
        v.ok_or_else(|| BiaError::param(format!("--{flag} is required")))
    }

    pub fn mode(&self) -> Result<Mode> {
        Self::need(self.mode, "mode")
    }

    pub fn users(&self) -> Result<usize> {
        Self::need(self.k, "k")
    }

    pub fn seed(&self) -> Result<u64> {
        Self::need(self.seed, "seed (or BIA_SIM_SEED)")
    }

    /// Mode count, either `--m` or the smaller of `--m-tx` / `--m-rx`.
    pub fn modes(&self) -> Result<usize> {
        match (self.m, self.m_tx, self.m_rx) {
            (Some(m), None, None) => Ok(m),
            (None, Some(t), Some(r)) => Ok(t.min(r)),
            (None, None, None) => Err(BiaError::param("--m (or --m-tx with --m-rx) is required")),
            _ => Err(BiaError::param("give either --m or both --m-tx and --m-rx")),
        }
    }

    /// Group size for groupcast and unicast; load for MapReduce. Exactly one may be set.
    pub fn setting(&self) -> Result<Setting> {
        let mode = self.mode()?;
        match (mode, self.g, self.r) {
            (Mode::Mimo, None, None) => Ok(Setting::Mimo { modes: self.modes()? }),
            (Mode::Mimo, _, _) => Err(BiaError::param("--g and --r do not apply to mimo")),
            (Mode::Bcgm | Mode::Usi, Some(g), None) => {
                let (users, modes) = (self.users()?, self.modes()?);
                Ok(if mode == Mode::Bcgm {
                    Setting::Bcgm { users, group_size: g, modes }
                } else {
                    Setting::Usi { users, group_size: g, modes }
                })
            }
            (Mode::Mapreduce, None, Some(r)) => Ok(Setting::Mapreduce { users: self.users()?, load: r, modes: self.modes()? }),
            (Mode::Mapreduce, _, _) => Err(BiaError::param("mapreduce takes --r and not --g")),
            _ => Err(BiaError::param("bcgm and usi take --g and not --r")),
        }
    }

    /// `None` for a noiseless run (the default), otherwise the single SNR point.
    pub fn run_snr(&self) -> Result<Option<f64>> {
        match (self.noiseless, self.snr_db.as_slice()) {
            (true, []) => Ok(None),
            (true, _) => Err(BiaError::param("--noiseless conflicts with --snr-db")),
            (false, [snr]) => Ok(Some(*snr)),
            (false, []) => Ok(None),
            (false, _) => Err(BiaError::param("this command takes a single --snr-db")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_win() {
        let flags = ExperimentConfig { k: Some(4), g: Some(3), m: Some(2), seed: Some(1), ..Default::default() };
        let file: ExperimentConfig = toml::from_str("mode = \"usi\"\nseed = 9\nsnr_db = [40.0, 60.0]").unwrap();
        let c = flags.overlay(file);
        assert_eq!((c.seed, c.k, c.mode), (Some(9), Some(4), Some(Mode::Usi)));
        assert_eq!(c.snr_db, vec![40.0, 60.0]);
        assert!(toml::from_str::<ExperimentConfig>("bogus = 1").is_err());
    }

    #[test]
    fn group_and_load_are_exclusive() {
        let c = ExperimentConfig { mode: Some(Mode::Bcgm), k: Some(4), g: Some(2), r: Some(1), m: Some(2), ..Default::default() };
        assert!(c.setting().is_err());
        let c = ExperimentConfig { mode: Some(Mode::Mapreduce), k: Some(4), r: Some(2), m: Some(1), ..Default::default() };
        assert_eq!(c.setting().unwrap(), Setting::Mapreduce { users: 4, load: 2, modes: 1 });
    }

    #[test]
    fn asymmetric_antennas_use_the_smaller() {
        let c = ExperimentConfig { m_tx: Some(5), m_rx: Some(2), ..Default::default() };
        assert_eq!(c.modes().unwrap(), 2);
        let c = ExperimentConfig { m: Some(2), m_tx: Some(5), ..Default::default() };
        assert!(c.modes().is_err());
    }
}
