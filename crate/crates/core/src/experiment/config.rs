//! Experiment configuration assembled from layered `key=value` settings.
//!
//! Layers, lowest precedence first: built-in defaults, a named preset, a
//! config file, command-line flags. Keys are the long flag names without the
//! leading dashes (`snr-db`, `rate`, `epsilon`, ...).

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::analytic::ThresholdMode;
use crate::channel::{variances_from_geometry, LinkVariances, NetworkGeometry};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Analytic,
    Outage,
    Capacity,
    Ratio,
    Lemma1,
    Placement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

/// Inclusive SNR sweep in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrSweep {
    pub start_db: f64,
    pub stop_db: f64,
    pub step_db: f64,
}

impl SnrSweep {
    pub fn single(db: f64) -> Self {
        Self { start_db: db, stop_db: db, step_db: 1.0 }
    }

    /// Parses `start:stop:step` or a single value.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let sweep = match parts.as_slice() {
            [one] => Self::single(parse_f64("snr-db", one)?),
            [a, b, c] => Self { start_db: parse_f64("snr-db", a)?, stop_db: parse_f64("snr-db", b)?, step_db: parse_f64("snr-db", c)? },
            _ => return Err(invalid(format!("snr-db must be start:stop:step or a single value, got '{s}'"))),
        };
        sweep.validate()?;
        Ok(sweep)
    }

    fn validate(&self) -> Result<()> {
        if !(self.step_db > 0.0 && self.step_db.is_finite()) {
            return Err(invalid(format!("SNR sweep step must be positive, got {}", self.step_db)));
        }
        if !(self.start_db.is_finite() && self.stop_db.is_finite()) || self.stop_db < self.start_db {
            return Err(invalid(format!("SNR sweep {}:{} is empty", self.start_db, self.stop_db)));
        }
        Ok(())
    }

    /// Sweep points in dB, each rounded to 1e-9 dB to avoid accumulated drift.
    pub fn points_db(&self) -> Vec<f64> {
        let n = ((self.stop_db - self.start_db) / self.step_db + 1e-9).floor() as usize + 1;
        (0..n).map(|i| ((self.start_db + i as f64 * self.step_db) * 1e9).round() / 1e9).collect()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Flat string settings; later layers overwrite earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

pub const KNOWN_KEYS: &[&str] = &[
    "snr-db", "rate", "epsilon", "k", "relay-pos", "pathloss", "trials", "seed", "mode", "out", "format", "preset",
    "config", "sigma-sd2", "sigma-sr2", "sigma-rd2", "grid", "g", "x-over-g",
];

impl Settings {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(invalid(format!("unknown setting '{key}'")));
        }
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Overlays `other` on top of `self`.
    pub fn merge(&mut self, other: &Settings) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    /// Parses flat `key = value` text; `#` starts a comment.
    pub fn parse_file(text: &str) -> Result<Self> {
        let mut s = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("config line {}: expected key=value, got '{raw}'", lineno + 1)))?;
            s.set(k.trim(), v.trim())?;
        }
        Ok(s)
    }

    /// Settings of a named preset.
    pub fn preset(name: &str) -> Result<Self> {
        let mut s = Self::default();
        match name {
            "fig2" => {
                s.set("epsilon", "0.001")?;
                s.set("rate", "0.009,0.05,0.1")?;
                s.set("snr-db", "-10:10:1")?;
                s.set("k", "1")?;
                s.set("sigma-sd2", "1")?;
            }
            other => return Err(invalid(format!("unknown preset '{other}'"))),
        }
        Ok(s)
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| invalid(format!("{key}: cannot parse '{s}' as a number")))
}

fn parse_u64(key: &str, s: &str) -> Result<u64> {
    s.trim().parse::<u64>().map_err(|_| invalid(format!("{key}: cannot parse '{s}' as a nonnegative integer")))
}

fn parse_list(key: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(|p| parse_f64(key, p)).collect()
}

/// Where the link variances come from.
#[derive(Debug, Clone, PartialEq)]
pub enum LinkSpec {
    Geometry(NetworkGeometry),
    Variances(LinkVariances),
}

impl LinkSpec {
    pub fn variances(&self) -> Result<LinkVariances> {
        match self {
            LinkSpec::Geometry(g) => variances_from_geometry(g),
            LinkSpec::Variances(v) => Ok(v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub subcommand: Subcommand,
    pub links: LinkSpec,
    pub snr_sweep: SnrSweep,
    pub rates: Vec<f64>,
    pub epsilon: f64,
    pub k_relays: usize,
    pub n_trials: u64,
    pub master_seed: u64,
    pub mode: ThresholdMode,
    pub pathloss_exponent: f64,
    pub grid_resolution: usize,
    pub g_sequence: Vec<f64>,
    /// `x = c·g` in the Lemma-1 experiment; `None` follows the burst policy.
    pub x_over_g: Option<f64>,
    pub output_path: Option<PathBuf>,
    pub output_format: OutputFormat,
}

pub const DEFAULT_TRIALS: u64 = 1_000_000;
pub const DEFAULT_SEED: u64 = 20_100_101;
pub const DEFAULT_PATHLOSS: f64 = 3.0;
pub const DEFAULT_GRID: usize = 201;
pub const DEFAULT_G_SEQUENCE: [f64; 4] = [0.1, 0.05, 0.02, 0.01];

impl ExperimentConfig {
    pub fn from_settings(subcommand: Subcommand, s: &Settings) -> Result<Self> {
        let snr_sweep = match s.get("snr-db") {
            Some(v) => SnrSweep::parse(v)?,
            None => SnrSweep::single(0.0),
        };
        let rates = match s.get("rate") {
            Some(v) => parse_list("rate", v)?,
            None => vec![0.01],
        };
        if rates.is_empty() || rates.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
            return Err(invalid("rate list must be nonempty and nonnegative"));
        }
        let epsilon = s.get("epsilon").map(|v| parse_f64("epsilon", v)).transpose()?.unwrap_or(0.001);
        if !(0.0..1.0).contains(&epsilon) {
            return Err(invalid(format!("epsilon must lie in [0, 1), got {epsilon}")));
        }
        let pathloss_exponent =
            s.get("pathloss").map(|v| parse_f64("pathloss", v)).transpose()?.unwrap_or(DEFAULT_PATHLOSS);
        let k_flag = s.get("k").map(|v| parse_u64("k", v)).transpose()?.map(|k| k as usize);

        let has_sigma = ["sigma-sd2", "sigma-sr2", "sigma-rd2"].iter().any(|k| s.get(k).is_some());
        let links = match (s.get("relay-pos"), has_sigma) {
            (Some(_), true) => {
                return Err(invalid("give either relay positions or explicit variances, not both"));
            }
            (Some(pos), false) => {
                let positions = parse_list("relay-pos", pos)?;
                LinkSpec::Geometry(NetworkGeometry::new(1.0, positions, pathloss_exponent)?)
            }
            (None, _) => {
                let sd = s.get("sigma-sd2").map(|v| parse_f64("sigma-sd2", v)).transpose()?.unwrap_or(1.0);
                let k_default = k_flag.unwrap_or(1);
                let sr = s.get("sigma-sr2").map(|v| parse_list("sigma-sr2", v)).transpose()?;
                let rd = s.get("sigma-rd2").map(|v| parse_list("sigma-rd2", v)).transpose()?;
                let (sr, rd) = match (sr, rd) {
                    (Some(sr), Some(rd)) => (sr, rd),
                    (Some(sr), None) => {
                        let n = sr.len();
                        (sr, vec![1.0; n])
                    }
                    (None, Some(rd)) => (vec![1.0; rd.len()], rd),
                    (None, None) => (vec![1.0; k_default], vec![1.0; k_default]),
                };
                LinkSpec::Variances(LinkVariances::new(sd, sr, rd)?)
            }
        };
        let k_links = links.variances()?.k_relays();
        if let Some(k) = k_flag {
            if k != k_links {
                return Err(invalid(format!("--k {k} does not match the {k_links} relays described by the link settings")));
            }
        }
        if k_links == 0 {
            return Err(invalid("at least one relay is required"));
        }

        let n_trials = s.get("trials").map(|v| parse_u64("trials", v)).transpose()?.unwrap_or(DEFAULT_TRIALS);
        let master_seed = s.get("seed").map(|v| parse_u64("seed", v)).transpose()?.unwrap_or(DEFAULT_SEED);
        let mode = match s.get("mode").unwrap_or("exact") {
            "exact" => ThresholdMode::Exact,
            "linearized" => ThresholdMode::Linearized,
            other => return Err(invalid(format!("mode must be exact or linearized, got '{other}'"))),
        };
        let output_format = match s.get("format").unwrap_or("csv") {
            "csv" => OutputFormat::Csv,
            "jsonl" => OutputFormat::Jsonl,
            other => return Err(invalid(format!("format must be csv or jsonl, got '{other}'"))),
        };
        let grid_resolution =
            s.get("grid").map(|v| parse_u64("grid", v)).transpose()?.map(|g| g as usize).unwrap_or(DEFAULT_GRID);
        let g_sequence = match s.get("g") {
            Some(v) => parse_list("g", v)?,
            None => DEFAULT_G_SEQUENCE.to_vec(),
        };
        let x_over_g = s.get("x-over-g").map(|v| parse_f64("x-over-g", v)).transpose()?;
        if let Some(c) = x_over_g {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(invalid(format!("x-over-g must be nonnegative, got {c}")));
            }
        }

        Ok(Self {
            subcommand,
            links,
            snr_sweep,
            rates,
            epsilon,
            k_relays: k_links,
            n_trials,
            master_seed,
            mode,
            pathloss_exponent,
            grid_resolution,
            g_sequence,
            x_over_g,
            output_path: s.get("out").map(PathBuf::from),
            output_format,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_points() {
        let s = SnrSweep::parse("-10:10:0.5").unwrap();
        let p = s.points_db();
        assert_eq!(p.len(), 41);
        assert_eq!(p[0], -10.0);
        assert_eq!(p[40], 10.0);
        assert_eq!(p[3], -8.5);
        assert_eq!(SnrSweep::parse("3").unwrap().points_db(), vec![3.0]);
        assert_eq!(SnrSweep::parse("-10:-9.7:0.1").unwrap().points_db(), vec![-10.0, -9.9, -9.8, -9.7]);
    }

    #[test]
    fn bad_sweeps() {
        assert!(SnrSweep::parse("0:10:0").is_err());
        assert!(SnrSweep::parse("0:10:-1").is_err());
        assert!(SnrSweep::parse("10:0:1").is_err());
        assert!(SnrSweep::parse("0:1").is_err());
        assert!(SnrSweep::parse("a:1:1").is_err());
    }

    #[test]
    fn config_file_parsing() {
        let s = Settings::parse_file("# comment\nepsilon = 0.01\n\nrate=0.1,0.2 # trailing\n").unwrap();
        assert_eq!(s.get("epsilon"), Some("0.01"));
        assert_eq!(s.get("rate"), Some("0.1,0.2"));
        assert!(Settings::parse_file("nonsense").is_err());
        assert!(Settings::parse_file("colour=blue").is_err());
    }

    #[test]
    fn layering_and_defaults() {
        let mut s = Settings::preset("fig2").unwrap();
        let mut flags = Settings::default();
        flags.set("epsilon", "0.002").unwrap();
        s.merge(&flags);
        let c = ExperimentConfig::from_settings(Subcommand::Ratio, &s).unwrap();
        assert_eq!(c.epsilon, 0.002);
        assert_eq!(c.rates, vec![0.009, 0.05, 0.1]);
        assert_eq!(c.snr_sweep.points_db().len(), 21);
        assert_eq!(c.links, LinkSpec::Variances(LinkVariances::unit(1)));
        assert!(Settings::preset("fig9").is_err());
    }

    #[test]
    fn geometry_and_variances_are_exclusive() {
        let mut s = Settings::default();
        s.set("relay-pos", "0.5").unwrap();
        s.set("sigma-sd2", "2").unwrap();
        assert!(ExperimentConfig::from_settings(Subcommand::Analytic, &s).is_err());
    }

    #[test]
    fn relay_count_must_agree() {
        let mut s = Settings::default();
        s.set("relay-pos", "0.3,0.6").unwrap();
        let c = ExperimentConfig::from_settings(Subcommand::Analytic, &s).unwrap();
        assert_eq!(c.k_relays, 2);
        s.set("k", "3").unwrap();
        assert!(ExperimentConfig::from_settings(Subcommand::Analytic, &s).is_err());
        let mut u = Settings::default();
        u.set("k", "3").unwrap();
        assert_eq!(ExperimentConfig::from_settings(Subcommand::Analytic, &u).unwrap().links.variances().unwrap(), LinkVariances::unit(3));
    }

    #[test]
    fn rejects_bad_values() {
        for (k, v) in [("epsilon", "1.5"), ("rate", "-0.1"), ("mode", "fast"), ("format", "xml"), ("trials", "-3"), ("relay-pos", "1.2")] {
            let mut s = Settings::default();
            s.set(k, v).unwrap();
            assert!(ExperimentConfig::from_settings(Subcommand::Analytic, &s).is_err(), "{k}={v} accepted");
        }
    }
}
