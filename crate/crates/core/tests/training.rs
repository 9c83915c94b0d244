mod common;

use std::io::Write;

use common::*;
use rand::Rng as _;
use rnnms::dsp::{write_wav, AudioBuffer};
use rnnms::model::{load_checkpoint, ModelConfig};
use rnnms::rng::seeded;
use rnnms::training::{
    checkpoint_path, from_entries, load_manifest, train, train_corpus, Corpus, LogRecord, ManifestEntry, TrainConfig,
    Utterance,
};
use rnnms::Error;

fn tone(freq: f64, n: usize, seed: u64) -> AudioBuffer {
    let mut rng = seeded(seed);
    let samples = (0..n)
        .map(|i| {
            let s = 0.4 * (2.0 * std::f64::consts::PI * freq * i as f64 / 24_000.0).sin();
            (s + 0.01 * rng.random_range(-1.0..1.0)) as f32
        })
        .collect();
    AudioBuffer::new(samples, 24_000).unwrap()
}

fn small_config() -> rnnms::VocoderConfig {
    tiny_vocoder(ModelConfig { n_mels: 8, cond_hidden: 4, ar_hidden: 12, n_classes: 32, hop: 16 })
}

fn small_corpus() -> Corpus {
    let config = small_config();
    let utts = (0..4)
        .map(|i| Utterance::prepare(format!("utt{i}"), &tone(200.0 + 50.0 * i as f64, 400 + 37 * i, i as u64), &config).unwrap())
        .collect();
    Corpus::from_utterances(config, utts)
}

fn quick(steps: u64) -> TrainConfig {
    TrainConfig {
        tbptt_len: 64,
        batch_size: 2,
        learning_rate: 5e-3,
        max_steps: steps,
        seed: 17,
        checkpoint_every: 10,
        serial: true,
        ..TrainConfig::default()
    }
}

#[test]
fn univ_scale_manifest_summary_and_cap() {
    let dir = tempfile::tempdir().unwrap();
    let audio = dir.path().join("placeholder.wav");
    write_wav(&audio, &AudioBuffer::new(vec![0.0; 10], 24_000).unwrap()).unwrap();
    let path = dir.path().join("univ.jsonl");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path).unwrap());
    let (speakers, utterances, languages) = (74usize, 149_134usize, 17usize);
    for i in 0..utterances {
        let spk = i % speakers;
        let entry = ManifestEntry {
            utterance_id: format!("u{i:06}"),
            speaker_id: format!("spk{spk:02}"),
            language: format!("lang{:02}", spk % languages),
            audio_path: "placeholder.wav".into(),
        };
        writeln!(f, "{}", serde_json::to_string(&entry).unwrap()).unwrap();
    }
    drop(f);

    let m = load_manifest(&path, None).unwrap();
    let s = m.summary();
    assert_eq!((s.speakers, s.utterances, s.languages), (74, 149_134, 17));
    assert!(m.entries.iter().all(|e| e.audio_path == audio));

    let capped = load_manifest(&path, Some(10)).unwrap();
    assert_eq!(capped.len(), 740);
    // The cap keeps each speaker's lexicographically first ids.
    let spk0: Vec<&str> = capped.entries.iter().filter(|e| e.speaker_id == "spk00").map(|e| e.utterance_id.as_str()).collect();
    assert_eq!(spk0.first(), Some(&"u000000"));
    assert_eq!(spk0.last(), Some(&"u000666"));
}

#[test]
fn manifest_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let entry = |id: &str, path: &str| ManifestEntry {
        utterance_id: id.into(),
        speaker_id: "s".into(),
        language: "en".into(),
        audio_path: dir.path().join(path),
    };
    match from_entries(vec![entry("a", "nope.wav")], None) {
        Err(Error::MissingFiles { paths, .. }) => assert_eq!(paths, vec![dir.path().join("nope.wav")]),
        other => panic!("{other:?}"),
    }
    assert!(matches!(from_entries(vec![entry("a", "x"), entry("a", "y")], None), Err(Error::Validation(_))));

    let path = dir.path().join("m.jsonl");
    std::fs::write(&path, "{\"utterance_id\": \"a\"}\n").unwrap();
    assert!(matches!(load_manifest(&path, None), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn training_writes_checkpoints_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus();
    let out = train_corpus(&corpus, &quick(25), Some(dir.path())).unwrap();
    let steps: Vec<u64> = [0, 10, 20, 25].to_vec();
    assert_eq!(out.checkpoints, steps.iter().map(|&s| checkpoint_path(dir.path(), s)).collect::<Vec<_>>());

    let last = load_checkpoint(out.checkpoints.last().unwrap()).unwrap();
    assert_eq!(last.step, 25);
    assert_eq!(last.params, out.params);
    assert_eq!(last.config, corpus.config);

    let log: Vec<LogRecord> = std::fs::read_to_string(dir.path().join("train_log.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(log.len(), 25);
    assert!(log.iter().enumerate().all(|(i, r)| r.step == i as u64 + 1 && r.loss_nats == out.losses[i]));
    assert!(log.windows(2).all(|w| w[0].wall_ms <= w[1].wall_ms));
}

#[test]
fn loss_falls_on_a_small_corpus() {
    let out = train_corpus(&small_corpus(), &quick(150), None).unwrap();
    let head: f64 = out.losses[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = out.losses[140..].iter().sum::<f64>() / 10.0;
    assert!(tail < head - 0.5, "{head} -> {tail}");
    assert!(head < (32f64).ln() + 0.5);
}

#[test]
fn serial_runs_are_bit_identical_and_match_parallel() {
    let corpus = small_corpus();
    let a = train_corpus(&corpus, &quick(12), None).unwrap();
    let b = train_corpus(&corpus, &quick(12), None).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.params, b.params);
    let par = train_corpus(&corpus, &TrainConfig { serial: false, ..quick(12) }, None).unwrap();
    assert_eq!(a.losses, par.losses);
    assert_eq!(a.params, par.params);
    let other = train_corpus(&corpus, &TrainConfig { seed: 18, ..quick(12) }, None).unwrap();
    assert_ne!(a.losses, other.losses);
}

#[test]
fn holdout_is_reported_not_trained() {
    let config = small_config();
    let utts = (0..50)
        .map(|i| Utterance::prepare(format!("u{i:02}"), &tone(300.0, 200, i), &config).unwrap())
        .collect();
    let corpus = Corpus::from_utterances(config, utts);
    let out = train_corpus(&corpus, &quick(3), None).unwrap();
    assert_eq!(out.heldout.len(), 1);
    assert!(out.heldout_nll.unwrap().is_finite());
}

#[test]
fn short_utterances_are_skipped_and_all_short_is_an_error() {
    let config = small_config();
    let mut utts: Vec<Utterance> = (0..3)
        .map(|i| Utterance::prepare(format!("long{i}"), &tone(300.0, 400, i), &config).unwrap())
        .collect();
    utts.push(Utterance::prepare("short", &tone(300.0, 40, 9), &config).unwrap());
    let out = train_corpus(&Corpus::from_utterances(config, utts), &quick(2), None).unwrap();
    assert_eq!(out.skipped, 1);

    let only_short = vec![Utterance::prepare("short", &tone(300.0, 40, 9), &config).unwrap()];
    assert!(matches!(
        train_corpus(&Corpus::from_utterances(config, only_short), &quick(2), None),
        Err(Error::Input(_))
    ));
}

#[test]
fn divergence_stops_with_a_dump() {
    let dir = tempfile::tempdir().unwrap();
    let tc = TrainConfig { learning_rate: 1e30, ..quick(20) };
    match train_corpus(&small_corpus(), &tc, Some(dir.path())) {
        Err(Error::NonFiniteLoss { step, utterances }) => {
            assert!(!utterances.is_empty());
            assert!(dir.path().join(format!("nonfinite_step_{step:08}.json")).is_file());
        }
        other => panic!("expected a non-finite loss, got {:?}", other.map(|o| o.losses)),
    }
}

#[test]
fn end_to_end_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut lines = String::new();
    for i in 0..3 {
        let name = format!("a{i}.wav");
        write_wav(dir.path().join(&name), &tone(250.0, 500, i)).unwrap();
        lines.push_str(&format!(
            "{{\"utterance_id\":\"a{i}\",\"speaker_id\":\"s{}\",\"language\":\"en\",\"audio_path\":\"{name}\"}}\n",
            i % 2
        ));
    }
    std::fs::write(dir.path().join("m.jsonl"), lines).unwrap();
    let manifest = load_manifest(dir.path().join("m.jsonl"), None).unwrap();
    let run = dir.path().join("run");
    let out = train(&manifest, &small_config(), &quick(5), &run).unwrap();
    assert_eq!(out.losses.len(), 5);
    assert!(run.join("train_log.jsonl").is_file());
    assert!(checkpoint_path(&run, 5).is_file());
}
