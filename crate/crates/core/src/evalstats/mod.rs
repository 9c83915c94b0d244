//! Listening-test planning and analysis: balanced MUSHRA sessions, rating
//! records, relative scores and corrected paired comparisons.

mod analysis;
mod plan;
mod records;
mod stats;

pub use analysis::{
    analyze, mean_table, relative_mushra, AnalysisConfig, AnalysisReport, Comparison, ListenerScreening,
    SystemSummary, UtteranceBreakdown, DEFAULT_ALPHA, REPORT_VERSION,
};
pub use plan::{
    audio_ref, completion_code, plan_sessions, ListenerSession, PlanConfig, Screen, SessionPlan, Stimulus,
    PLAN_VERSION,
};
pub use records::{parse_ratings_lenient, read_ratings, write_ratings, LenientRatings, RatingRecord, MAX_SCORE};
pub use stats::{holm_bonferroni, incomplete_beta, ln_gamma, paired_t_test, t_two_sided_p, PairedTTest};
