//! HTTP back end for subjective rating sessions.
//!
//! A dataset directory holds one folder per run (as written by the experiment
//! runner) and `playlists/s{session}_p{part}.txt` files listing run names in
//! presentation order, two sessions of four parts. Scores go to an
//! append-only JSON-lines journal that is replayed on startup.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/sessions/{s}/parts/{p}/playlist` | ordered items |
//! | GET | `/training/playlist` | training items |
//! | GET | `/media/{run_id}` | received-frame manifest |
//! | POST | `/ratings` | 201, or 404 / 422 / 409 |
//! | GET | `/progress/{rater_id}` | counts per part |
//! | GET | `/ratings/export` | non-training ratings |

mod api;
mod error;
mod journal;
mod playlist;

pub use api::{
    router, serve, AppState, MediaResponse, PartProgress, PlaylistItem, PlaylistResponse, Progress,
    RatingRequest, JOURNAL_FILE, RECEIVED_MANIFEST,
};
pub use error::{RatingError, Result};
pub use journal::{replay, Journal, RatingRecord, RatingTable};
pub use playlist::{parse_playlist, playlist_file_name, Playlists, PARTS, PLAYLIST_DIR, SESSIONS, TRAINING_PLAYLIST};
