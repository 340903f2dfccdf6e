use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{RatingError, Result};

/// One score given by one rater to one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub run_id: String,
    /// `None` for training items.
    pub session: Option<u8>,
    pub part: Option<u8>,
    pub position: usize,
    pub score: u8,
    /// Milliseconds since the Unix epoch.
    pub rated_at: u64,
    pub rater_id: String,
    #[serde(default)]
    pub training: bool,
}

impl RatingRecord {
    fn key(&self) -> (String, String, bool) {
        (self.rater_id.clone(), self.run_id.clone(), self.training)
    }
}

/// In-memory view of the journal.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct RatingTable {
    records: Vec<RatingRecord>,
    keys: HashSet<(String, String, bool)>,
}

impl RatingTable {
    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn contains(&self, rater_id: &str, run_id: &str, training: bool) -> bool {
        self.keys
            .contains(&(rater_id.to_string(), run_id.to_string(), training))
    }

    /// Adds a record unless its (rater, run) pair is already rated.
    pub fn insert(&mut self, record: RatingRecord) -> Result<()> {
        if !self.keys.insert(record.key()) {
            return Err(RatingError::Conflict(format!(
                "{} already rated {}",
                record.rater_id, record.run_id
            )));
        }
        self.records.push(record);
        Ok(())
    }
}

/// Append-only line-delimited journal. Every accepted rating is written and
/// synced before it becomes visible in the table.
#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
    table: RatingTable,
}

impl Journal {
    /// Opens or creates the journal and replays it. A torn final line, left
    /// by a crash during an append, is cut off.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let (table, valid_len) = replay_prefix(&path)?;
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(&path)?;
        if file.metadata()?.len() > valid_len {
            file.set_len(valid_len)?;
            file.seek(SeekFrom::End(0))?;
        }
        Ok(Journal { path, file, table })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn table(&self) -> &RatingTable {
        &self.table
    }

    pub fn append(&mut self, record: RatingRecord) -> Result<()> {
        if self.table.contains(&record.rater_id, &record.run_id, record.training) {
            return Err(RatingError::Conflict(format!(
                "{} already rated {}",
                record.rater_id, record.run_id
            )));
        }
        let mut line = serde_json::to_vec(&record)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.table.insert(record)
    }
}

/// Rebuilds the rating table from a journal file.
pub fn replay(path: &Path) -> Result<RatingTable> {
    Ok(replay_prefix(path)?.0)
}

fn replay_prefix(path: &Path) -> Result<(RatingTable, u64)> {
    let mut table = RatingTable::default();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((table, 0)),
        Err(e) => return Err(e.into()),
    };
    let mut reader = BufReader::new(file);
    let mut valid = 0u64;
    let mut line = Vec::new();
    let mut lineno = 0;
    loop {
        line.clear();
        let n = reader.read_until(b'\n', &mut line)?;
        if n == 0 {
            break;
        }
        lineno += 1;
        if line.last() != Some(&b'\n') {
            // Unterminated tail: an interrupted append.
            break;
        }
        let text = &line[..line.len() - 1];
        if !text.iter().all(u8::is_ascii_whitespace) {
            let record: RatingRecord = serde_json::from_slice(text)
                .map_err(|e| RatingError::Journal(format!("{} line {lineno}: {e}", path.display())))?;
            table
                .insert(record)
                .map_err(|e| RatingError::Journal(format!("{} line {lineno}: {e}", path.display())))?;
        }
        valid += n as u64;
    }
    Ok((table, valid))
}
