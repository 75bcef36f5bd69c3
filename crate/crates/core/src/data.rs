//! Synthetic evaluation sets and the `score,label` CSV format.
//!
//! The CSV format is two comma-separated columns, one sample per line. A
//! header row is optional and recognized by a non-numeric first field.
//! Scores are written in shortest round-trip decimal form, so saving and
//! loading is lossless.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::metrics::{Dataset, Sample};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreFamily {
    /// Positives ~ Beta(1 + s, 1), negatives ~ Beta(1, 1 + s).
    BetaPair,
    /// Scores are `sigmoid(z)` with `z ~ N(±s/2, 1)` by class. The clean AUC
    /// is `Φ(s/√2)`.
    LogitGaussian,
}

impl fmt::Display for ScoreFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreFamily::BetaPair => "beta-pair",
            ScoreFamily::LogitGaussian => "logit-gaussian",
        })
    }
}

impl FromStr for ScoreFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "beta-pair" | "beta" => Ok(ScoreFamily::BetaPair),
            "logit-gaussian" | "logit" => Ok(ScoreFamily::LogitGaussian),
            other => Err(invalid(format!("unknown score family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub m: usize,
    pub base_rate: f64,
    pub separation: f64,
    pub family: ScoreFamily,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(invalid(format!("m must be at least 2, got {}", self.m)));
        }
        if !(self.base_rate > 0.0 && self.base_rate < 1.0) {
            return Err(invalid(format!("base rate must be in (0, 1), got {}", self.base_rate)));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(invalid(format!(
                "separation must be finite and >= 0, got {}",
                self.separation
            )));
        }
        let expected_pos = self.base_rate * self.m as f64;
        if expected_pos < 1.0 || self.m as f64 - expected_pos < 1.0 {
            return Err(invalid("expected positives and negatives must both be at least 1"));
        }
        Ok(())
    }
}

/// Labels are Bernoulli(π); scores come from the class-conditional
/// distribution of `spec.family`. Draw order per sample: label, then score.
/// A draw without both classes is retried once before failing.
pub fn gen_synthetic(spec: &SyntheticSpec, rng: &mut SeededRng) -> Result<Dataset> {
    spec.validate()?;
    for _ in 0..2 {
        let samples = draw_samples(spec, rng)?;
        let positives = samples.iter().filter(|s| s.is_positive()).count();
        if positives > 0 && positives < samples.len() {
            return Dataset::new(samples);
        }
    }
    Err(invalid(format!(
        "generated data lacks one class twice in a row (m={}, base rate={})",
        spec.m, spec.base_rate
    )))
}

fn draw_samples(spec: &SyntheticSpec, rng: &mut SeededRng) -> Result<Vec<Sample>> {
    let s = spec.separation;
    let mut samples = Vec::with_capacity(spec.m);
    match spec.family {
        ScoreFamily::BetaPair => {
            let pos = Beta::new(1.0 + s, 1.0).map_err(|e| invalid(e.to_string()))?;
            let neg = Beta::new(1.0, 1.0 + s).map_err(|e| invalid(e.to_string()))?;
            for _ in 0..spec.m {
                let label = rng.random_bool(spec.base_rate);
                let score: f64 = if label { pos.sample(rng) } else { neg.sample(rng) };
                samples.push(Sample { score: score.clamp(0.0, 1.0), label: u8::from(label) });
            }
        }
        ScoreFamily::LogitGaussian => {
            let pos = Normal::new(s / 2.0, 1.0).map_err(|e| invalid(e.to_string()))?;
            let neg = Normal::new(-s / 2.0, 1.0).map_err(|e| invalid(e.to_string()))?;
            for _ in 0..spec.m {
                let label = rng.random_bool(spec.base_rate);
                let z: f64 = if label { pos.sample(rng) } else { neg.sample(rng) };
                samples.push(Sample { score: 1.0 / (1.0 + (-z).exp()), label: u8::from(label) });
            }
        }
    }
    Ok(samples)
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if i == 0 && fields[0].parse::<f64>().is_err() {
            continue;
        }
        if fields.len() != 2 {
            return Err(parse_err(format!("expected 2 fields, found {}", fields.len())));
        }
        let score: f64 = fields[0]
            .parse()
            .map_err(|_| parse_err(format!("score `{}` is not a number", fields[0])))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(parse_err(format!("score {score} outside [0, 1]")));
        }
        let label = match fields[1] {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(format!("label `{other}` is not 0 or 1"))),
        };
        samples.push(Sample { score, label });
    }
    if samples.is_empty() {
        return Err(Error::Parse { line: 0, message: "no samples found".into() });
    }
    Dataset::new(samples)
}

pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "score,label")?;
    for s in dataset.iter() {
        writeln!(w, "{},{}", s.score, s.label)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    read_csv(fs::File::open(path)?)
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv(dataset, fs::File::create(path)?)
}
