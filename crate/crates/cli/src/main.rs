use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rnnms::dsp::{extract_mel, read_features, read_wav, write_features, write_wav, MelConfig, MelSpectrogram};
use rnnms::evalservice::{export_ratings, Service, ServiceConfig};
use rnnms::evalstats::{analyze, plan_sessions, read_ratings, write_ratings, AnalysisConfig, ListenerScreening, PlanConfig, SessionPlan};
use rnnms::model::load_checkpoint;
use rnnms::simselect::{fit_gmm, gmm_kld, select_anchor, stack_frames, SpeakerGmm, DEFAULT_COMPONENTS, DEFAULT_KLD_SAMPLES};
use rnnms::synthesis::{generate, Sampling};
use rnnms::training::{load_manifest, train, TrainConfig};
use rnnms::VocoderConfig;

#[derive(Parser)]
#[command(name = "rnnms", version, about = "Speaker-independent neural vocoder toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a vocoder from a JSON-lines corpus manifest.
    Train(TrainArgs),
    /// Vocode a WAV file (copy synthesis) or a stored spectrogram.
    Synthesize(SynthArgs),
    /// Write the log-mel spectrogram of a WAV file.
    ExtractMel {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON mel configuration; canonical when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit a diagonal GMM to every .mel or .wav file in a directory.
    GmmFit {
        #[arg(long)]
        features_dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo KL(p || q) between two GMM files.
    Kld {
        #[arg(long)]
        p: PathBuf,
        #[arg(long)]
        q: PathBuf,
        #[arg(long, default_value_t = DEFAULT_KLD_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pick the candidate GMM closest to the target; candidates are the
    /// .json files of a directory, named by file stem.
    AnchorSelect {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long, default_value_t = DEFAULT_KLD_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a balanced MUSHRA session plan.
    MushraPlan(PlanArgs),
    /// Summarize collected ratings.
    MushraAnalyze {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long, default_value = "nat")]
        natural_id: String,
        #[arg(long, default_value_t = rnnms::evalstats::DEFAULT_ALPHA)]
        alpha: f64,
        /// Extension: drop listeners who rate the hidden reference below 90
        /// on more than 15% of their screens.
        #[arg(long)]
        screen_listeners: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Host a session plan over HTTP.
    Serve {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        audio_dir: PathBuf,
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Convert the service's submission log into rating records.
    ExportRatings {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// JSON vocoder configuration; canonical when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    tbptt: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long)]
    per_speaker_cap: Option<usize>,
    #[arg(long)]
    grad_clip: Option<f64>,
    /// Single-threaded, bit-reproducible run.
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// A .wav file or a spectrogram written by extract-mel.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0, conflicts_with = "argmax")]
    temperature: f64,
    #[arg(long)]
    argmax: bool,
}

#[derive(Args)]
struct PlanArgs {
    /// Utterance count (ids utt_0001...) or a file with one id per line.
    #[arg(long)]
    utts: String,
    /// Comma-separated systems under test.
    #[arg(long, value_delimiter = ',', required = true)]
    systems: Vec<String>,
    #[arg(long, default_value = "nat")]
    natural_id: String,
    #[arg(long)]
    listeners: usize,
    #[arg(long)]
    per_utt: usize,
    #[arg(long)]
    screens: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run_train(a: TrainArgs) -> Result<()> {
    let config: VocoderConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => VocoderConfig::canonical(),
    };
    let defaults = TrainConfig::default();
    let tc = TrainConfig {
        max_steps: a.steps.unwrap_or(defaults.max_steps),
        tbptt_len: a.tbptt.unwrap_or(defaults.tbptt_len),
        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
        learning_rate: a.lr.unwrap_or(defaults.learning_rate),
        seed: a.seed.unwrap_or(defaults.seed),
        checkpoint_every: a.checkpoint_every.unwrap_or(defaults.checkpoint_every),
        per_speaker_cap: a.per_speaker_cap,
        grad_clip: a.grad_clip,
        serial: a.serial,
        ..defaults
    };
    let manifest = load_manifest(&a.manifest, tc.per_speaker_cap)?;
    let s = manifest.summary();
    log::info!("{} utterances, {} speakers, {} languages", s.utterances, s.speakers, s.languages);
    let out = train(&manifest, &config, &tc, &a.out_dir)?;
    println!(
        "trained {} steps; final loss {:.4} nats; {} checkpoints in {}",
        out.losses.len(),
        out.losses.last().copied().unwrap_or(f64::NAN),
        out.checkpoints.len(),
        a.out_dir.display()
    );
    if let Some(nll) = out.heldout_nll {
        println!("held-out NLL {nll:.4} nats over {} utterances", out.heldout.len());
    }
    Ok(())
}

fn is_wav(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

fn run_synthesize(a: SynthArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let mel = if is_wav(&a.input) {
        extract_mel(&read_wav(&a.input)?, &ckpt.config.mel)?
    } else {
        read_features(&a.input)?
    };
    let sampling = if a.argmax { Sampling::Argmax } else { Sampling::Temperature(a.temperature) };
    let audio = generate(&mel, &ckpt.params, &ckpt.config, a.seed, sampling)?;
    write_wav(&a.out, &audio)?;
    println!("wrote {:.2} s to {}", audio.duration_secs(), a.out.display());
    Ok(())
}

fn load_feature_dir(dir: &Path) -> Result<Vec<MelSpectrogram>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| is_wav(p) || p.extension().is_some_and(|e| e == "mel"));
    paths.sort();
    if paths.is_empty() {
        bail!("no .mel or .wav files in {}", dir.display());
    }
    let canonical = MelConfig::canonical();
    paths
        .iter()
        .map(|p| {
            if is_wav(p) {
                Ok(extract_mel(&read_wav(p)?, &canonical)?)
            } else {
                Ok(read_features(p)?)
            }
        })
        .collect()
}

fn run_plan(a: PlanArgs) -> Result<()> {
    let utterances: Vec<String> = match a.utts.parse::<usize>() {
        Ok(n) => (1..=n).map(|i| format!("utt_{i:04}")).collect(),
        Err(_) => std::fs::read_to_string(&a.utts)
            .with_context(|| format!("reading {}", a.utts))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
    };
    let plan = plan_sessions(&PlanConfig {
        utterances,
        systems: a.systems,
        natural_id: a.natural_id,
        listeners: a.listeners,
        ratings_per_utterance: a.per_utt,
        screens_per_listener: a.screens,
        seed: a.seed,
    })?;
    plan.save(&a.out)?;
    println!("{} listener sessions written to {}", plan.sessions.len(), a.out.display());
    for s in &plan.sessions {
        println!("{}\t{}", s.listener_id, s.token);
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train(a) => run_train(a)?,
        Command::Synthesize(a) => run_synthesize(a)?,
        Command::ExtractMel { input, out, config } => {
            let config: MelConfig = match &config {
                Some(p) => read_json(p)?,
                None => MelConfig::canonical(),
            };
            let mel = extract_mel(&read_wav(&input)?, &config)?;
            write_features(&out, &mel)?;
            println!("{} frames x {} mels", mel.n_frames(), mel.n_mels());
        }
        Command::GmmFit { features_dir, k, seed, max_iters, tol, out } => {
            let mels = load_feature_dir(&features_dir)?;
            let (data, dim) = stack_frames(&mels)?;
            let fit = fit_gmm(&data, dim, k, seed, max_iters, tol)?;
            fit.gmm.save(&out)?;
            println!(
                "K={k} over {} frames: {} iterations, converged {}, per-frame log-likelihood {:.4}",
                data.len() / dim,
                fit.iterations,
                fit.converged,
                fit.log_likelihoods.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Kld { p, q, samples, seed } => {
            let est = gmm_kld(&SpeakerGmm::load(&p)?, &SpeakerGmm::load(&q)?, samples, seed)?;
            println!("{}", serde_json::to_string(&est)?);
        }
        Command::AnchorSelect { target, candidates, samples, seed, out } => {
            let target = SpeakerGmm::load(&target)?;
            let mut named = Vec::new();
            for entry in std::fs::read_dir(&candidates)? {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "json") {
                    let name = path.file_stem().unwrap().to_string_lossy().into_owned();
                    named.push((name, SpeakerGmm::load(&path)?));
                }
            }
            let sel = select_anchor(&target, &named, samples, seed)?;
            std::fs::write(&out, serde_json::to_string_pretty(&sel)?)?;
            println!("selected {}: {}", sel.selected, sel.summary());
        }
        Command::MushraPlan(a) => run_plan(a)?,
        Command::MushraAnalyze { ratings, natural_id, alpha, screen_listeners, out } => {
            let records = read_ratings(&ratings)?;
            let config = AnalysisConfig {
                natural_id,
                alpha,
                screening: screen_listeners.then(ListenerScreening::default),
            };
            let report = analyze(&records, &config)?;
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            print!("{}", report.to_table()?);
        }
        Command::Serve { plan, audio_dir, ratings, addr } => {
            let plan = SessionPlan::load(&plan)?;
            let service = Service::open(ServiceConfig { plan, audio_dir, ratings_path: ratings })?;
            tokio::runtime::Runtime::new()?.block_on(rnnms::evalservice::serve(service, addr))?;
        }
        Command::ExportRatings { store, out } => {
            let exported = export_ratings(&store)?;
            write_ratings(&out, &exported.records)?;
            println!("{} records exported", exported.records.len());
            if !exported.malformed_lines.is_empty() {
                eprintln!("{} malformed lines skipped: {:?}", exported.malformed_lines.len(), exported.malformed_lines);
            }
        }
    }
    Ok(())
}
