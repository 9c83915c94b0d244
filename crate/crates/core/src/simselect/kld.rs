use serde::{Deserialize, Serialize};

use super::gmm::SpeakerGmm;
use crate::error::{Error, Result};
use crate::rng::seeded;

pub const DEFAULT_KLD_SAMPLES: usize = 10_000;

/// Monte Carlo estimate of KL(p || q) in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KldEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// `E_{x ~ p}[ln p(x) - ln q(x)]` from `n_samples` seeded draws of `p`.
pub fn gmm_kld(p: &SpeakerGmm, q: &SpeakerGmm, n_samples: usize, seed: u64) -> Result<KldEstimate> {
    if p.dim() != q.dim() {
        return Err(Error::Shape(format!("dimension mismatch: {} vs {}", p.dim(), q.dim())));
    }
    if n_samples < 2 {
        return Err(Error::Input("need at least two Monte Carlo samples".into()));
    }
    let mut rng = seeded(seed);
    let mut x = vec![0.0; p.dim()];
    // Welford running moments.
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..n_samples {
        p.sample(&mut rng, &mut x);
        let d = p.log_pdf(&x) - q.log_pdf(&x);
        let delta = d - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (d - mean);
    }
    let var = m2 / (n_samples - 1) as f64;
    Ok(KldEstimate {
        estimate: mean,
        std_error: (var / n_samples as f64).sqrt(),
        n_samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub name: String,
    #[serde(flatten)]
    pub kld: KldEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSelection {
    pub selected: String,
    /// KL(target || candidate) for every candidate, sorted by name.
    pub table: Vec<DivergenceRow>,
}

impl AnchorSelection {
    /// Divergences in ascending order, e.g. `"2.64 against Univ, 5.42 against 3Spk"`.
    pub fn summary(&self) -> String {
        let mut rows: Vec<&DivergenceRow> = self.table.iter().collect();
        rows.sort_by(|a, b| a.kld.estimate.total_cmp(&b.kld.estimate).then_with(|| a.name.cmp(&b.name)));
        rows.iter()
            .map(|r| format!("{:.2} against {}", r.kld.estimate, r.name))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Picks the candidate minimizing KL(target || candidate).
///
/// Every candidate is scored against the same target draws, and ties go to
/// the lexicographically smallest name, so the result does not depend on
/// candidate order.
pub fn select_anchor(
    target: &SpeakerGmm,
    candidates: &[(String, SpeakerGmm)],
    n_samples: usize,
    seed: u64,
) -> Result<AnchorSelection> {
    if candidates.is_empty() {
        return Err(Error::Input("no anchor candidates".into()));
    }
    let mut sorted: Vec<&(String, SpeakerGmm)> = candidates.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let table = sorted
        .iter()
        .map(|(name, gmm)| {
            Ok(DivergenceRow {
                name: name.clone(),
                kld: gmm_kld(target, gmm, n_samples, seed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = &table[0];
    for row in &table[1..] {
        if row.kld.estimate < best.kld.estimate {
            best = row;
        }
    }
    Ok(AnchorSelection {
        selected: best.name.clone(),
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(mean: f64) -> SpeakerGmm {
        SpeakerGmm::new(vec![1.0], vec![vec![mean]], vec![vec![1.0]]).unwrap()
    }

    #[test]
    fn summary_lists_ascending() {
        let row = |name: &str, e: f64| DivergenceRow {
            name: name.into(),
            kld: KldEstimate { estimate: e, std_error: 0.0, n_samples: 10 },
        };
        let sel = AnchorSelection {
            selected: "Univ".into(),
            table: vec![row("3Spk", 5.42), row("7Spk", 14.45), row("SD", 14.62), row("Univ", 2.64)],
        };
        assert_eq!(sel.summary(), "2.64 against Univ, 5.42 against 3Spk, 14.45 against 7Spk, 14.62 against SD");
    }

    #[test]
    fn errors() {
        let two_d = SpeakerGmm::new(vec![1.0], vec![vec![0.0, 0.0]], vec![vec![1.0, 1.0]]).unwrap();
        assert!(matches!(gmm_kld(&gauss(0.0), &two_d, 100, 0), Err(Error::Shape(_))));
        assert!(select_anchor(&gauss(0.0), &[], 100, 0).is_err());
    }

    #[test]
    fn ties_break_by_name() {
        let c = vec![("b".to_string(), gauss(1.0)), ("a".to_string(), gauss(1.0))];
        assert_eq!(select_anchor(&gauss(0.0), &c, 1000, 3).unwrap().selected, "a");
    }
}
