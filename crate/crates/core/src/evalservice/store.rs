use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::evalstats::{LenientRatings, RatingRecord};

/// One submitted screen, stored as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenSubmission {
    pub v: u32,
    pub listener_id: String,
    pub screen_index: usize,
    pub utterance_id: String,
    pub timestamp: u64,
    pub ratings: Vec<SystemScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemScore {
    pub system_id: String,
    pub score: u8,
}

impl ScreenSubmission {
    pub fn records(&self) -> impl Iterator<Item = RatingRecord> + '_ {
        self.ratings.iter().map(|r| RatingRecord {
            listener_id: self.listener_id.clone(),
            utterance_id: self.utterance_id.clone(),
            system_id: r.system_id.clone(),
            score: r.score,
            screen_index: self.screen_index,
            timestamp: self.timestamp,
        })
    }
}

fn parse_submission(line: &str) -> Option<ScreenSubmission> {
    let s: ScreenSubmission = serde_json::from_str(line).ok()?;
    let valid = s.records().all(|r| r.validate().is_ok());
    valid.then_some(s)
}

/// Append-only submission log. Every append is flushed to disk before it
/// returns.
pub struct RatingStore {
    path: PathBuf,
    file: File,
    submitted: HashSet<(String, usize)>,
}

impl RatingStore {
    /// Opens or creates the log and rebuilds the submitted set from it. A
    /// torn final line (a write that was never acknowledged) is terminated
    /// so that later appends start on a fresh line; it is otherwise left in
    /// place and reported as malformed by [`export_ratings`].
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(&path)?;
        let mut text = String::new();
        file.read_to_string(&mut text)?;
        let mut submitted = HashSet::new();
        for line in text.lines() {
            if let Some(s) = parse_submission(line) {
                submitted.insert((s.listener_id, s.screen_index));
            }
        }
        if !text.is_empty() && !text.ends_with('\n') {
            log::warn!("{}: terminating torn final line", path.display());
            file.seek(SeekFrom::End(0))?;
            file.write_all(b"\n")?;
            file.sync_data()?;
        }
        Ok(Self { path, file, submitted })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn is_submitted(&self, listener_id: &str, screen_index: usize) -> bool {
        self.submitted.contains(&(listener_id.to_string(), screen_index))
    }

    pub fn submitted_count(&self) -> usize {
        self.submitted.len()
    }

    pub fn append(&mut self, submission: &ScreenSubmission) -> Result<()> {
        let mut line = serde_json::to_vec(submission)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.submitted.insert((submission.listener_id.clone(), submission.screen_index));
        Ok(())
    }
}

/// Flattens a submission log into rating records. Malformed lines are
/// skipped and their 1-based line numbers returned.
pub fn export_ratings(path: impl AsRef<Path>) -> Result<LenientRatings> {
    let text = std::fs::read_to_string(path)?;
    let mut out = LenientRatings::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_submission(line) {
            Some(s) => out.records.extend(s.records()),
            None => out.malformed_lines.push(i + 1),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sub(listener: &str, screen: usize) -> ScreenSubmission {
        ScreenSubmission {
            v: 1,
            listener_id: listener.into(),
            screen_index: screen,
            utterance_id: "u".into(),
            timestamp: 1,
            ratings: vec![SystemScore { system_id: "a".into(), score: 40 }, SystemScore { system_id: "nat".into(), score: 95 }],
        }
    }

    #[test]
    fn reopen_restores_submitted_set() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        {
            let mut s = RatingStore::open(&path).unwrap();
            s.append(&sub("l1", 0)).unwrap();
            s.append(&sub("l2", 3)).unwrap();
        }
        let s = RatingStore::open(&path).unwrap();
        assert!(s.is_submitted("l1", 0) && s.is_submitted("l2", 3));
        assert!(!s.is_submitted("l1", 1));
        assert_eq!(export_ratings(&path).unwrap().records.len(), 4);
    }

    #[test]
    fn torn_tail_is_isolated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut good = serde_json::to_string(&sub("l1", 0)).unwrap();
        good.push('\n');
        std::fs::write(&path, format!("{good}{}", &good[..20])).unwrap();
        let mut s = RatingStore::open(&path).unwrap();
        assert_eq!(s.submitted_count(), 1);
        s.append(&sub("l1", 1)).unwrap();
        let exported = export_ratings(&path).unwrap();
        assert_eq!(exported.malformed_lines, vec![2]);
        assert_eq!(exported.records.len(), 4);
    }
}
