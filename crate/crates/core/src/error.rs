use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A value outside the domain an operation accepts, e.g. unnormalized audio.
    #[error("input domain error: {0}")]
    InputDomain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation failed: {message}: {}", format_paths(.paths))]
    MissingFiles { message: String, paths: Vec<PathBuf> },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("degenerate test: {0}")]
    Degenerate(String),

    #[error("non-finite loss at step {step} (batch utterances: {utterances:?})")]
    NonFiniteLoss { step: u64, utterances: Vec<String> },

    #[error("non-finite logits at sample {0}")]
    NonFiniteLogits(usize),

    #[error("unsupported format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

fn format_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}
