//! Per-step metrics rows, per-episode rows and key=value summaries.

use std::fmt::Write as _;
use std::path::Path;

use crate::episode::EpisodeReport;
use crate::error::{Error, Result};

pub const STEP_HEADER: &str = "episode,step,reward,return_to_date,epsilon,loss,hit_requests,total_requests,cache_size,zipf";
pub const EPISODE_HEADER: &str = "episode,mean_reward,average_return,hit_requests,total_requests,hit_rate";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub episode: usize,
    pub step: usize,
    pub reward: f64,
    /// Discounted reward accumulated from the start of the episode.
    pub return_to_date: f64,
    pub epsilon: Option<f64>,
    pub loss: Option<f64>,
    pub hit_requests: u64,
    pub total_requests: u64,
    pub cache_size: usize,
    pub zipf: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.episode,
            self.step,
            self.reward,
            self.return_to_date,
            opt(self.epsilon),
            opt(self.loss),
            self.hit_requests,
            self.total_requests,
            self.cache_size,
            self.zipf
        )
    }

    pub fn parse_csv(line: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed metrics row `{line}`"));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let int = |s: &str| s.parse::<u64>().map_err(|_| bad());
        let maybe = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        Ok(MetricsRow {
            episode: int(f[0])? as usize,
            step: int(f[1])? as usize,
            reward: num(f[2])?,
            return_to_date: num(f[3])?,
            epsilon: maybe(f[4])?,
            loss: maybe(f[5])?,
            hit_requests: int(f[6])?,
            total_requests: int(f[7])?,
            cache_size: int(f[8])? as usize,
            zipf: num(f[9])?,
        })
    }
}

/// Appends one row per step of `report` to `out`.
pub fn push_episode_rows(out: &mut String, episode: usize, report: &EpisodeReport, gamma: f64, zipf: f64) {
    let mut acc = 0.0;
    let mut discount = 1.0;
    for (t, s) in report.steps.iter().enumerate() {
        acc += discount * s.reward;
        discount *= gamma;
        let row = MetricsRow {
            episode,
            step: t,
            reward: s.reward,
            return_to_date: acc,
            epsilon: s.epsilon,
            loss: s.loss,
            hit_requests: s.hit_requests,
            total_requests: s.total_requests,
            cache_size: s.cache_size,
            zipf,
        };
        out.push_str(&row.to_csv());
        out.push('\n');
    }
}

pub fn episode_row(episode: usize, report: &EpisodeReport) -> String {
    format!(
        "{episode},{},{},{},{},{}\n",
        report.mean_reward(),
        report.average_return,
        report.hit_requests,
        report.total_requests,
        report.hit_rate()
    )
}

/// Reads a step metrics file back.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(STEP_HEADER) {
        return Err(Error::InvalidArgument(format!("{} is not a metrics file", path.display())));
    }
    lines.map(MetricsRow::parse_csv).collect()
}

/// Request-weighted hit rate over rows.
pub fn hit_rate_of(rows: &[MetricsRow]) -> f64 {
    let hits: u64 = rows.iter().map(|r| r.hit_requests).sum();
    let total: u64 = rows.iter().map(|r| r.total_requests).sum();
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Ordered `key=value` summary text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    entries: Vec<(String, String)>,
}

impl Summary {
    pub fn put(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn parse(text: &str) -> Self {
        Summary {
            entries: text
                .lines()
                .filter_map(|l| l.split_once('='))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

/// Sample mean and standard deviation (n − 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
