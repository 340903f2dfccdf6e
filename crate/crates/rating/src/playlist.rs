use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{RatingError, Result};

pub const SESSIONS: u8 = 2;
pub const PARTS: u8 = 4;
pub const PLAYLIST_DIR: &str = "playlists";
pub const TRAINING_PLAYLIST: &str = "training.txt";

pub fn playlist_file_name(session: u8, part: u8) -> String {
    format!("s{session}_p{part}.txt")
}

/// Run names in presentation order. Blank lines and `#` comments are skipped.
pub fn parse_playlist(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

fn check_name(name: &str, file: &Path) -> Result<()> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if !ok {
        return Err(RatingError::Dataset(format!(
            "{}: `{name}` is not a run name",
            file.display()
        )));
    }
    Ok(())
}

/// Every playlist of a dataset.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Playlists {
    pub parts: BTreeMap<(u8, u8), Vec<String>>,
    pub training: Vec<String>,
}

impl Playlists {
    /// Reads `playlists/s{session}_p{part}.txt` for all sessions and parts,
    /// and `playlists/training.txt` if present.
    pub fn load(dataset: &Path) -> Result<Self> {
        let dir = dataset.join(PLAYLIST_DIR);
        let mut parts = BTreeMap::new();
        for session in 1..=SESSIONS {
            for part in 1..=PARTS {
                let file = dir.join(playlist_file_name(session, part));
                let text = fs::read_to_string(&file).map_err(|e| {
                    RatingError::Dataset(format!("playlist {}: {e}", file.display()))
                })?;
                let names = parse_playlist(&text);
                for n in &names {
                    check_name(n, &file)?;
                }
                parts.insert((session, part), names);
            }
        }
        let file = dir.join(TRAINING_PLAYLIST);
        let training = match fs::read_to_string(&file) {
            Ok(text) => parse_playlist(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        for n in &training {
            check_name(n, &file)?;
        }
        Ok(Playlists { parts, training })
    }

    pub fn part(&self, session: u8, part: u8) -> Option<&[String]> {
        self.parts.get(&(session, part)).map(Vec::as_slice)
    }

    pub fn contains_run(&self, run_id: &str) -> bool {
        self.training.iter().any(|r| r == run_id) || self.parts.values().flatten().any(|r| r == run_id)
    }

    pub fn total(&self) -> usize {
        self.parts.values().map(Vec::len).sum()
    }
}
