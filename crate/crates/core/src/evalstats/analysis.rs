use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::records::RatingRecord;
use super::stats::{holm_bonferroni, paired_t_test, PairedTTest};
use crate::error::{Error, Result};

pub const REPORT_VERSION: u32 = 1;
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Optional post-screening, not part of the standard analysis: drop
/// listeners who score the hidden reference below `min_reference_score` on
/// more than `max_fraction` of their screens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ListenerScreening {
    pub min_reference_score: u8,
    pub max_fraction: f64,
}

impl Default for ListenerScreening {
    fn default() -> Self {
        Self { min_reference_score: 90, max_fraction: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub natural_id: String,
    pub alpha: f64,
    pub screening: Option<ListenerScreening>,
}

impl AnalysisConfig {
    pub fn new(natural_id: impl Into<String>) -> Self {
        Self { natural_id: natural_id.into(), alpha: DEFAULT_ALPHA, screening: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub system_id: String,
    pub n_ratings: usize,
    pub mean_score: f64,
    /// Mean score as a percentage of the natural recording's mean.
    pub relative_mushra: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub system_a: String,
    pub system_b: String,
    /// (listener, utterance) pairs rated for both systems.
    pub n_pairs: usize,
    pub test: Option<PairedTTest>,
    /// Why no test could be run (too few pairs, zero-variance differences).
    pub degenerate: Option<String>,
    pub reject: bool,
}

impl Comparison {
    pub fn label(&self) -> String {
        format!("{} vs {}", self.system_a, self.system_b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceBreakdown {
    pub utterance_id: String,
    pub mean_scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub version: u32,
    pub natural_id: String,
    pub alpha: f64,
    pub n_ratings: usize,
    pub excluded_listeners: Vec<String>,
    pub systems: Vec<SystemSummary>,
    pub comparisons: Vec<Comparison>,
    pub per_utterance: Vec<UtteranceBreakdown>,
}

/// `100 * mean(system) / mean(natural)`.
pub fn relative_mushra(system_mean: f64, natural_mean: f64) -> Result<f64> {
    if natural_mean == 0.0 || !natural_mean.is_finite() {
        return Err(Error::Degenerate(format!("relative score undefined: natural mean is {natural_mean}")));
    }
    Ok(100.0 * system_mean / natural_mean)
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

fn screened_out(records: &[RatingRecord], natural_id: &str, s: &ListenerScreening) -> Vec<String> {
    let mut by_listener: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.system_id == natural_id) {
        let e = by_listener.entry(&r.listener_id).or_default();
        e.0 += 1;
        if r.score < s.min_reference_score {
            e.1 += 1;
        }
    }
    by_listener
        .into_iter()
        .filter(|(_, (n, low))| *low as f64 > s.max_fraction * *n as f64)
        .map(|(l, _)| l.to_string())
        .collect()
}

/// Per-system means and relative scores, Holm-corrected paired t-tests
/// between every pair of systems other than the natural one (pairs matched
/// on listener and utterance), and per-utterance means.
pub fn analyze(records: &[RatingRecord], config: &AnalysisConfig) -> Result<AnalysisReport> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", config.alpha)));
    }
    for r in records {
        r.validate()?;
    }
    let excluded = match &config.screening {
        Some(s) => screened_out(records, &config.natural_id, s),
        None => Vec::new(),
    };
    let kept: Vec<&RatingRecord> = records.iter().filter(|r| !excluded.contains(&r.listener_id)).collect();

    let mut by_system: BTreeMap<&str, Vec<&RatingRecord>> = BTreeMap::new();
    for r in &kept {
        by_system.entry(&r.system_id).or_default().push(r);
    }
    let natural = by_system
        .get(config.natural_id.as_str())
        .ok_or_else(|| Error::Validation(format!("no ratings for natural reference system {:?}", config.natural_id)))?;
    let natural_mean = mean(natural.iter().map(|r| r.score as f64));

    let mut systems = Vec::new();
    for (id, rs) in &by_system {
        let m = mean(rs.iter().map(|r| r.score as f64));
        systems.push(SystemSummary {
            system_id: id.to_string(),
            n_ratings: rs.len(),
            mean_score: m,
            relative_mushra: relative_mushra(m, natural_mean)?,
        });
    }

    let keyed: HashMap<&str, HashMap<(&str, &str), f64>> = by_system
        .iter()
        .map(|(id, rs)| {
            let map = rs
                .iter()
                .map(|r| ((r.listener_id.as_str(), r.utterance_id.as_str()), r.score as f64))
                .collect();
            (*id, map)
        })
        .collect();
    let tested: Vec<&str> = by_system.keys().copied().filter(|s| *s != config.natural_id).collect();
    let mut comparisons = Vec::new();
    for (i, a) in tested.iter().enumerate() {
        for b in &tested[i + 1..] {
            let (ma, mb) = (&keyed[a], &keyed[b]);
            let common: BTreeSet<&(&str, &str)> = ma.keys().filter(|k| mb.contains_key(*k)).collect();
            let xs: Vec<f64> = common.iter().map(|k| ma[*k]).collect();
            let ys: Vec<f64> = common.iter().map(|k| mb[*k]).collect();
            let (test, degenerate) = match paired_t_test(&xs, &ys) {
                Ok(t) => (Some(t), None),
                Err(Error::Degenerate(why)) => (None, Some(why)),
                Err(e) => return Err(e),
            };
            comparisons.push(Comparison {
                system_a: a.to_string(),
                system_b: b.to_string(),
                n_pairs: common.len(),
                test,
                degenerate,
                reject: false,
            });
        }
    }
    let labeled: Vec<(String, f64)> = comparisons
        .iter()
        .filter_map(|c| c.test.map(|t| (c.label(), t.p)))
        .collect();
    let rejected = holm_bonferroni(&labeled, config.alpha);
    for c in &mut comparisons {
        c.reject = rejected.contains(&c.label());
    }

    let mut per_utt: BTreeMap<&str, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for r in &kept {
        per_utt.entry(&r.utterance_id).or_default().entry(&r.system_id).or_default().push(r.score as f64);
    }
    let per_utterance = per_utt
        .into_iter()
        .map(|(u, m)| UtteranceBreakdown {
            utterance_id: u.to_string(),
            mean_scores: m.into_iter().map(|(s, v)| (s.to_string(), mean(v))).collect(),
        })
        .collect();

    Ok(AnalysisReport {
        version: REPORT_VERSION,
        natural_id: config.natural_id.clone(),
        alpha: config.alpha,
        n_ratings: kept.len(),
        excluded_listeners: excluded,
        systems,
        comparisons,
        per_utterance,
    })
}

/// Renders rows of per-system means as a table with one mean column per
/// system (natural last) followed by a relative column per non-natural
/// system. Every row must include the natural system.
pub fn mean_table(rows: &[(String, BTreeMap<String, f64>)], natural_id: &str) -> Result<String> {
    let mut systems: Vec<&str> = rows
        .iter()
        .flat_map(|(_, m)| m.keys().map(String::as_str))
        .filter(|s| *s != natural_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let rel: Vec<String> = systems.iter().map(|s| format!("{s} Rel.")).collect();
    systems.push(natural_id);
    let mut header: Vec<String> = vec![String::new()];
    header.extend(systems.iter().map(|s| s.to_string()));
    header.extend(rel);

    let mut body = Vec::new();
    for (label, means) in rows {
        let nat = *means
            .get(natural_id)
            .ok_or_else(|| Error::Validation(format!("row {label:?} has no {natural_id:?} mean")))?;
        let mut cells = vec![label.clone()];
        let cell = |s: &str| means.get(s).map(|m| format!("{m:.1}")).unwrap_or_else(|| "-".into());
        cells.extend(systems.iter().map(|s| cell(s)));
        for s in &systems[..systems.len() - 1] {
            cells.push(match means.get(*s) {
                Some(m) => format!("{:.1}%", relative_mushra(*m, nat)?),
                None => "-".into(),
            });
        }
        body.push(cells);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| body.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap())
        .collect();
    let mut out = String::new();
    for row in std::iter::once(&header).chain(&body) {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, w))| if i == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    Ok(out)
}

impl AnalysisReport {
    /// Means table followed by the comparisons.
    pub fn to_table(&self) -> Result<String> {
        let means = self.systems.iter().map(|s| (s.system_id.clone(), s.mean_score)).collect();
        let mut out = mean_table(&[("all".to_string(), means)], &self.natural_id)?;
        let _ = writeln!(out, "\n{} ratings", self.n_ratings);
        if !self.comparisons.is_empty() {
            let _ = writeln!(out, "\nPaired t-tests, Holm-corrected at alpha = {}:", self.alpha);
            for c in &self.comparisons {
                match (&c.test, &c.degenerate) {
                    (Some(t), _) => {
                        let _ = writeln!(
                            out,
                            "  {}: n = {}, diff {:+.2}, t({}) = {:.3}, p = {:.4}{}",
                            c.label(),
                            c.n_pairs,
                            t.mean_diff,
                            t.df,
                            t.t,
                            t.p,
                            if c.reject { "  significant" } else { "" }
                        );
                    }
                    (None, why) => {
                        let _ = writeln!(out, "  {}: n = {}, no test ({})", c.label(), c.n_pairs, why.as_deref().unwrap_or("?"));
                    }
                }
            }
        }
        if !self.excluded_listeners.is_empty() {
            let _ = writeln!(out, "\nExcluded by reference screening: {}", self.excluded_listeners.join(", "));
        }
        Ok(out)
    }
}
