//! HTTP backend for the listening test.
//!
//! Clients only ever see opaque stimulus handles. Each accepted screen is
//! appended to a JSON-lines log and synced before the response is sent, so
//! a restart resumes every listener at their first unsubmitted screen.
//!
//! | Method | Path | |
//! |---|---|---|
//! | GET | `/api/session/{token}` | next screen, or the completion code |
//! | GET | `/api/audio/{handle}` | WAV bytes |
//! | POST | `/api/ratings` | submit one screen; 409 if already submitted |
//! | GET | `/api/progress` | counts only |

mod server;
mod store;

pub use server::{router, serve, HandleScore, RatingSubmission, Service, ServiceConfig, API_VERSION};
pub use store::{export_ratings, RatingStore, ScreenSubmission, SystemScore};
