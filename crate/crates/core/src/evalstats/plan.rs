use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

pub const PLAN_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanConfig {
    pub utterances: Vec<String>,
    /// Systems under test, excluding the natural recording.
    pub systems: Vec<String>,
    pub natural_id: String,
    pub listeners: usize,
    /// Listeners that rate each utterance.
    pub ratings_per_utterance: usize,
    pub screens_per_listener: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    /// Opaque identifier shown to the client in place of the system name.
    pub handle: String,
    pub system_id: String,
    /// Audio path relative to the stimulus root.
    pub audio_ref: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Screen {
    pub screen_index: usize,
    pub utterance_id: String,
    /// Handle for the labeled natural reference.
    pub reference_handle: String,
    pub reference_audio_ref: String,
    /// Every system plus the hidden natural reference, in presentation order.
    pub stimuli: Vec<Stimulus>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListenerSession {
    pub listener_id: String,
    pub token: String,
    /// Shown to the listener once every screen is submitted.
    pub completion_code: String,
    pub screens: Vec<Screen>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub version: u32,
    pub seed: u64,
    pub natural_id: String,
    pub systems: Vec<String>,
    pub sessions: Vec<ListenerSession>,
}

fn opaque(rng: &mut Rng) -> String {
    format!("{:032x}", rng.random::<u128>())
}

/// `<system_id>/<utterance_id>.wav`
pub fn audio_ref(system_id: &str, utterance_id: &str) -> String {
    format!("{system_id}/{utterance_id}.wav")
}

/// Short code shown on completion, derived from the listener token (FNV-1a).
pub fn completion_code(token: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{:010X}", h >> 24)
}

fn check_unique(what: &str, ids: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if id.is_empty() {
            return Err(Error::Config(format!("empty {what} id")));
        }
        if !seen.insert(id) {
            return Err(Error::Config(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(())
}

/// Builds a balanced plan: every utterance is rated by exactly
/// `ratings_per_utterance` listeners and no listener hears an utterance twice.
///
/// Listener `j` takes `screens_per_listener` consecutive positions (wrapping)
/// of one shuffled utterance order starting at `j * screens_per_listener`, so
/// the listeners tile the order exactly `ratings_per_utterance` times.
pub fn plan_sessions(config: &PlanConfig) -> Result<SessionPlan> {
    let n = config.utterances.len();
    let (l, r, s) = (config.listeners, config.ratings_per_utterance, config.screens_per_listener);
    check_unique("utterance", &config.utterances)?;
    check_unique("system", &config.systems)?;
    if n == 0 || l == 0 || r == 0 || s == 0 {
        return Err(Error::Config("utterances, listeners, ratings and screens must all be positive".into()));
    }
    if config.systems.is_empty() {
        return Err(Error::Config("no systems under test".into()));
    }
    if config.natural_id.is_empty() || config.systems.contains(&config.natural_id) {
        return Err(Error::Config(format!("natural id {:?} must be non-empty and distinct from systems", config.natural_id)));
    }
    if s > n {
        return Err(Error::Config(format!("{s} screens per listener exceeds {n} utterances")));
    }
    if n * r != l * s {
        return Err(Error::Config(format!(
            "unbalanced design: {n} utterances x {r} ratings != {l} listeners x {s} screens"
        )));
    }

    let mut rng = seeded(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut handles = HashSet::new();
    let mut fresh = |rng: &mut Rng| loop {
        let h = opaque(rng);
        if handles.insert(h.clone()) {
            return h;
        }
    };

    let width = l.to_string().len();
    let mut sessions = Vec::with_capacity(l);
    for j in 0..l {
        let mut utts: Vec<usize> = (0..s).map(|i| order[(j * s + i) % n]).collect();
        utts.shuffle(&mut rng);
        let token = fresh(&mut rng);
        let screens = utts
            .into_iter()
            .enumerate()
            .map(|(screen_index, u)| {
                let utt = &config.utterances[u];
                let mut systems: Vec<&String> = config.systems.iter().chain([&config.natural_id]).collect();
                systems.shuffle(&mut rng);
                Screen {
                    screen_index,
                    utterance_id: utt.clone(),
                    reference_handle: fresh(&mut rng),
                    reference_audio_ref: audio_ref(&config.natural_id, utt),
                    stimuli: systems
                        .into_iter()
                        .map(|sys| Stimulus {
                            handle: fresh(&mut rng),
                            system_id: sys.clone(),
                            audio_ref: audio_ref(sys, utt),
                        })
                        .collect(),
                }
            })
            .collect();
        sessions.push(ListenerSession {
            listener_id: format!("listener_{:0width$}", j + 1),
            completion_code: completion_code(&token),
            token,
            screens,
        });
    }
    Ok(SessionPlan {
        version: PLAN_VERSION,
        seed: config.seed,
        natural_id: config.natural_id.clone(),
        systems: config.systems.clone(),
        sessions,
    })
}

impl SessionPlan {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let plan: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if plan.version != PLAN_VERSION {
            return Err(Error::Format(format!("unsupported plan version {}", plan.version)));
        }
        Ok(plan)
    }

    pub fn session_by_token(&self, token: &str) -> Option<&ListenerSession> {
        self.sessions.iter().find(|s| s.token == token)
    }

    /// Number of listeners assigned to each utterance.
    pub fn utterance_counts(&self) -> std::collections::BTreeMap<String, usize> {
        let mut counts = std::collections::BTreeMap::new();
        for s in &self.sessions {
            for sc in &s.screens {
                *counts.entry(sc.utterance_id.clone()).or_insert(0) += 1;
            }
        }
        counts
    }
}
