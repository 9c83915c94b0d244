use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_SCORE: u8 = 100;

/// One listener's score for one stimulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub listener_id: String,
    pub utterance_id: String,
    pub system_id: String,
    /// 0 (very poor) to 100 (completely natural).
    pub score: u8,
    pub screen_index: usize,
    /// Unix time in milliseconds.
    pub timestamp: u64,
}

impl RatingRecord {
    pub fn validate(&self) -> Result<()> {
        if self.score > MAX_SCORE {
            return Err(Error::Validation(format!("score {} outside [0, {MAX_SCORE}]", self.score)));
        }
        if self.listener_id.is_empty() || self.utterance_id.is_empty() || self.system_id.is_empty() {
            return Err(Error::Validation("empty identifier in rating".into()));
        }
        Ok(())
    }
}

fn parse_line(line: &str) -> std::result::Result<RatingRecord, String> {
    let r: RatingRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    r.validate().map_err(|e| e.to_string())?;
    Ok(r)
}

/// Reads a JSON-lines ratings file, failing on the first bad line.
pub fn read_ratings(path: impl AsRef<Path>) -> Result<Vec<RatingRecord>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&line).map_err(|message| Error::Parse { line: i + 1, message })?);
    }
    Ok(out)
}

/// Valid records plus the 1-based numbers of lines that failed to parse.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LenientRatings {
    pub records: Vec<RatingRecord>,
    pub malformed_lines: Vec<usize>,
}

/// Parses JSON lines, collecting malformed ones instead of failing. A torn
/// final line left by a crash shows up here.
pub fn parse_ratings_lenient(text: &str) -> LenientRatings {
    let mut out = LenientRatings::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line) {
            Ok(r) => out.records.push(r),
            Err(_) => out.malformed_lines.push(i + 1),
        }
    }
    out
}

pub fn write_ratings(path: impl AsRef<Path>, records: &[RatingRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
