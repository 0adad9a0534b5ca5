//! JSON-lines event log and snapshot files.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::canonical;
use crate::error::ErrorCode;

use super::state::{RegistryEvent, RegistryState, Snapshot};

/// Append-only writer. One canonical JSON event per line.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    fsync: bool,
}

impl EventLog {
    pub fn open(path: impl AsRef<Path>, fsync: bool) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(EventLog { path, file, fsync })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &RegistryEvent) -> io::Result<()> {
        let mut line = canonical::canonical_bytes_of(event);
        line.push(b'\n');
        self.file.write_all(&line)?;
        if self.fsync {
            self.file.sync_data()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("event log corrupt at line {line}: {message}")]
pub struct LogCorrupt {
    /// 1-based line number of the first bad line.
    pub line: usize,
    pub message: String,
}

/// Recovery stopped at a bad event. `state` holds everything up to the last
/// good one.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{corrupt}")]
pub struct RecoveryError {
    pub corrupt: LogCorrupt,
    pub state: Box<RegistryState>,
}

impl RecoveryError {
    pub fn code(&self) -> ErrorCode {
        ErrorCode::LogCorrupt
    }
}

/// Replays `log` on top of `snapshot`. Events already covered by the
/// snapshot (`seq <= last_seq`) are skipped.
pub fn recover<R: BufRead>(snapshot: Option<Snapshot>, log: R) -> Result<RegistryState, RecoveryError> {
    let mut state = snapshot.map(RegistryState::from_snapshot).unwrap_or_default();
    for (idx, line) in log.lines().enumerate() {
        let fail = |state: RegistryState, message: String| RecoveryError {
            corrupt: LogCorrupt { line: idx + 1, message },
            state: Box::new(state),
        };
        let line = match line {
            Ok(line) => line,
            Err(e) => return Err(fail(state, e.to_string())),
        };
        if line.trim().is_empty() {
            continue;
        }
        let event: RegistryEvent = match serde_json::from_str(&line) {
            Ok(event) => event,
            Err(e) => return Err(fail(state, format!("unparseable event: {e}"))),
        };
        if event.seq <= state.last_seq() {
            continue;
        }
        if let Err(e) = state.apply(&event) {
            return Err(fail(state, e.to_string()));
        }
    }
    Ok(state)
}

/// Loads the snapshot (if present) and replays the log file (if present).
pub fn recover_from_files(snapshot_path: Option<&Path>, log_path: Option<&Path>) -> Result<RegistryState, RecoveryError> {
    let io_fail = |message: String| RecoveryError {
        corrupt: LogCorrupt { line: 0, message },
        state: Box::default(),
    };
    let snapshot = match snapshot_path {
        Some(path) if path.exists() => {
            let text = fs::read_to_string(path).map_err(|e| io_fail(format!("{}: {e}", path.display())))?;
            Some(serde_json::from_str::<Snapshot>(&text).map_err(|e| io_fail(format!("snapshot {}: {e}", path.display())))?)
        }
        _ => None,
    };
    match log_path {
        Some(path) if path.exists() => {
            let file = File::open(path).map_err(|e| io_fail(format!("{}: {e}", path.display())))?;
            recover(snapshot, BufReader::new(file))
        }
        _ => recover(snapshot, io::empty()),
    }
}

/// Writes a snapshot atomically (temp file, fsync, rename).
pub fn write_snapshot(path: &Path, snapshot: &Snapshot) -> io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut file = File::create(&tmp)?;
        file.write_all(&canonical::canonical_bytes_of(snapshot))?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)
}
