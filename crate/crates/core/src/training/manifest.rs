use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of a JSON-lines corpus manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub speaker_id: String,
    pub language: String,
    pub audio_path: PathBuf,
}

/// Validated corpus description. `entries` are sorted by utterance id and
/// `audio_path`s are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
    pub per_speaker_cap: Option<usize>,
}

/// Speaker / utterance / language counts of a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusSummary {
    pub speakers: usize,
    pub utterances: usize,
    pub languages: usize,
}

impl CorpusManifest {
    pub fn summary(&self) -> CorpusSummary {
        let speakers: BTreeSet<_> = self.entries.iter().map(|e| &e.speaker_id).collect();
        let languages: BTreeSet<_> = self.entries.iter().map(|e| &e.language).collect();
        CorpusSummary {
            speakers: speakers.len(),
            utterances: self.entries.len(),
            languages: languages.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parses, caps and validates a manifest.
///
/// With a cap, each speaker keeps the lexicographically first `cap`
/// utterance ids.
pub fn load_manifest(path: impl AsRef<Path>, per_speaker_cap: Option<usize>) -> Result<CorpusManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut entry: ManifestEntry = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if entry.audio_path.is_relative() {
            entry.audio_path = base.join(&entry.audio_path);
        }
        entries.push(entry);
    }
    from_entries(entries, per_speaker_cap)
}

/// Same validation as [`load_manifest`] on already-parsed entries.
pub fn from_entries(entries: Vec<ManifestEntry>, per_speaker_cap: Option<usize>) -> Result<CorpusManifest> {
    let mut seen = HashSet::new();
    let mut dupes = BTreeSet::new();
    for e in &entries {
        if !seen.insert(e.utterance_id.as_str()) {
            dupes.insert(e.utterance_id.clone());
        }
    }
    if !dupes.is_empty() {
        return Err(Error::Validation(format!("duplicate utterance ids: {dupes:?}")));
    }

    let mut by_speaker: BTreeMap<String, Vec<ManifestEntry>> = BTreeMap::new();
    for e in entries {
        by_speaker.entry(e.speaker_id.clone()).or_default().push(e);
    }
    let mut kept = Vec::new();
    for (_, mut list) in by_speaker {
        list.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
        if let Some(cap) = per_speaker_cap {
            list.truncate(cap);
        }
        kept.extend(list);
    }
    kept.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));

    let missing: Vec<PathBuf> = kept
        .iter()
        .filter(|e| !e.audio_path.is_file())
        .map(|e| e.audio_path.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles {
            message: format!("{} audio files not found", missing.len()),
            paths: missing,
        });
    }
    Ok(CorpusManifest {
        entries: kept,
        per_speaker_cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_manifest(dir: &Path, lines: &[String]) -> PathBuf {
        let path = dir.join("manifest.jsonl");
        let mut f = fs::File::create(&path).unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        path
    }

    fn line(utt: &str, spk: &str, audio: &str) -> String {
        format!(r#"{{"utterance_id":"{utt}","speaker_id":"{spk}","language":"en-US","audio_path":"{audio}"}}"#)
    }

    #[test]
    fn cap_keeps_first_ids_per_speaker() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.wav"), b"").unwrap();
        let mut lines = Vec::new();
        for s in 0..3 {
            for u in (0..10).rev() {
                lines.push(line(&format!("s{s}_u{u:02}"), &format!("s{s}"), "a.wav"));
            }
        }
        let path = write_manifest(dir.path(), &lines);
        let m = load_manifest(&path, Some(5)).unwrap();
        assert_eq!(m.len(), 15);
        assert!(m.entries.iter().all(|e| e.utterance_id.ends_with(&['0', '1', '2', '3', '4'][..])));
        assert_eq!(m.summary(), CorpusSummary { speakers: 3, utterances: 15, languages: 1 });
        assert_eq!(load_manifest(&path, None).unwrap().len(), 30);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.wav"), b"").unwrap();
        let path = write_manifest(dir.path(), &[line("u1", "s", "a.wav"), "{not json".into()]);
        match load_manifest(&path, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicates_and_missing_audio_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.wav"), b"").unwrap();
        let path = write_manifest(dir.path(), &[line("u1", "s", "a.wav"), line("u1", "t", "a.wav")]);
        assert!(matches!(load_manifest(&path, None), Err(Error::Validation(_))));

        let path = write_manifest(dir.path(), &[line("u1", "s", "a.wav"), line("u2", "s", "gone.wav")]);
        match load_manifest(&path, None) {
            Err(Error::MissingFiles { paths, .. }) => {
                assert_eq!(paths.len(), 1);
                assert!(paths[0].ends_with("gone.wav"));
            }
            other => panic!("{other:?}"),
        }
    }
}
