use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{PhasePolicy, SimConfig};
use crate::channel::parse_taps;
use crate::receiver::ReceiverMode;
use crate::{Error, Result};

/// Simulation options as given on the command line or in a TOML file.
///
/// Every field is optional; [`SimOptions::merge`] layers flags over the file
/// and [`SimOptions::resolve`] fills the rest from defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, clap::Args)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimOptions {
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<ReceiverMode>,
    /// Comma-separated SNR list in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr: Option<Vec<f64>>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Channel taps, e.g. `0.5,0.7,0.5` or `0.5+0.1j,0.7`.
    #[arg(long, allow_hyphen_values = true)]
    pub taps: Option<String>,
    /// `uniform`, `quarter` or a fixed phase in radians.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub ncp: Option<usize>,
    /// Assumed channel length for the truncation step.
    #[arg(long = "channel-len")]
    pub channel_len: Option<usize>,
    #[arg(long = "init-iters")]
    pub init_iters: Option<usize>,
    #[arg(long = "em-per-turbo")]
    pub em_per_turbo: Option<usize>,
    #[arg(long = "turbo-iters")]
    pub turbo_iters: Option<usize>,
    /// Relative-change early stop for EM (off unless given).
    #[arg(long = "early-stop")]
    pub early_stop: Option<f64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

fn parse_mode(s: &str) -> std::result::Result<ReceiverMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl SimOptions {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Fields set in `self` win over `lower`.
    pub fn merge(self, lower: SimOptions) -> SimOptions {
        SimOptions {
            mode: self.mode.or(lower.mode),
            snr: self.snr.or(lower.snr),
            runs: self.runs.or(lower.runs),
            seed: self.seed.or(lower.seed),
            taps: self.taps.or(lower.taps),
            theta: self.theta.or(lower.theta),
            m: self.m.or(lower.m),
            n: self.n.or(lower.n),
            ncp: self.ncp.or(lower.ncp),
            channel_len: self.channel_len.or(lower.channel_len),
            init_iters: self.init_iters.or(lower.init_iters),
            em_per_turbo: self.em_per_turbo.or(lower.em_per_turbo),
            turbo_iters: self.turbo_iters.or(lower.turbo_iters),
            early_stop: self.early_stop.or(lower.early_stop),
            workers: self.workers.or(lower.workers),
            out: self.out.or(lower.out),
            summary: self.summary.or(lower.summary),
        }
    }

    pub fn resolve(&self) -> Result<SimConfig> {
        let mut cfg = SimConfig::default();
        let f = &mut cfg.frame;
        if let Some(v) = self.m {
            f.subcarriers = v;
        }
        if let Some(v) = self.n {
            f.symbols = v;
        }
        if let Some(v) = self.ncp {
            f.cyclic_prefix = v;
        }
        if let Some(v) = self.channel_len {
            f.channel_len = v;
        }
        if let Some(v) = self.init_iters {
            f.init_iters = v;
        }
        if let Some(v) = self.em_per_turbo {
            f.em_per_turbo = v;
        }
        if let Some(v) = self.turbo_iters {
            f.turbo_iters = v;
        }
        f.early_stop = self.early_stop;
        if let Some(t) = &self.taps {
            cfg.taps = parse_taps(t)?;
        }
        if let Some(t) = &self.theta {
            cfg.phase = t.parse::<PhasePolicy>()?;
        }
        if let Some(v) = &self.snr {
            cfg.snr_db = v.clone();
        }
        if let Some(v) = self.runs {
            cfg.runs = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        cfg.workers = self.workers;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file = SimOptions::from_toml_str(
            r#"
            mode = "conventional"
            snr = [0, 6.5]
            runs = 10
            taps = "0.5,0.7,0.5"
            init-iters = 12
            "#,
        )
        .unwrap();
        let flags = SimOptions {
            runs: Some(3),
            seed: Some(9),
            ..SimOptions::default()
        };
        let cfg = flags.merge(file).resolve().unwrap();
        assert_eq!(cfg.runs, 3);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.mode, ReceiverMode::Conventional);
        assert_eq!(cfg.snr_db, vec![0.0, 6.5]);
        assert_eq!(cfg.frame.init_iters, 12);
        assert_eq!(cfg.frame.turbo_iters, 6);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(SimOptions::from_toml_str("colour = 3").is_err());
        assert!(SimOptions::from_toml_str("mode = \"fast\"").is_err());
        let bad = SimOptions {
            m: Some(100),
            ..SimOptions::default()
        };
        assert!(bad.resolve().is_err());
    }
}
