//! Append-only session files and deterministic replay.
//!
//! Layout: one header line starting with `#islands-session ` followed by a
//! JSON object, then one JSON-encoded [`SessionEvent`] per line in seq order.
//! All times are seconds relative to session start.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::LayoutParams;
use crate::model::{FoldError, SceneState, SessionEvent, TransitionMode};

pub const HEADER_PREFIX: &str = "#islands-session ";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("expected seq {expected}, got {found}")]
    SequenceGap { expected: u64, found: u64 },
    #[error("storage failure: {0}")]
    Storage(#[from] io::Error),
    #[error("line {line}: {reason}")]
    CorruptLine { line: usize, reason: String },
    #[error("line {line}: {error}")]
    Fold { line: usize, error: FoldError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub format_version: u32,
    pub topic_config_id: String,
    /// sha-256 of the layout parameters, see [`LayoutParams::fingerprint`].
    pub layout_params_hash: String,
    pub layout: LayoutParams,
    pub transition: TransitionMode,
    pub started_at_unix_ms: u64,
}

impl SessionHeader {
    pub fn new(
        topic_config_id: impl Into<String>,
        layout: LayoutParams,
        transition: TransitionMode,
    ) -> Self {
        let started_at_unix_ms = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Self {
            format_version: FORMAT_VERSION,
            topic_config_id: topic_config_id.into(),
            layout_params_hash: layout.fingerprint(),
            layout,
            transition,
            started_at_unix_ms,
        }
    }

    pub fn initial_state(&self) -> SceneState {
        SceneState::new(self.topic_config_id.clone(), self.layout, self.transition)
    }

    pub fn to_line(&self) -> String {
        format!(
            "{HEADER_PREFIX}{}",
            serde_json::to_string(self).expect("header serializes")
        )
    }

    pub fn parse_line(line: &str) -> Result<Self, LogError> {
        let corrupt = |reason: String| LogError::CorruptLine { line: 1, reason };
        let body = line
            .strip_prefix(HEADER_PREFIX)
            .ok_or_else(|| corrupt("missing session header".into()))?;
        let header: SessionHeader =
            serde_json::from_str(body).map_err(|e| corrupt(e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(corrupt(format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        if header.layout_params_hash != header.layout.fingerprint() {
            return Err(corrupt("layout_params_hash does not match layout".into()));
        }
        Ok(header)
    }
}

/// Whether each append waits for the data to reach the disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Durability {
    #[default]
    Sync,
    Flush,
}

/// Single appender for one session file.
#[derive(Debug)]
pub struct SessionWriter {
    file: File,
    path: PathBuf,
    last_seq: u64,
    durability: Durability,
}

impl SessionWriter {
    /// Creates a new file; refuses to overwrite an existing one.
    pub fn create(
        path: impl AsRef<Path>,
        header: &SessionHeader,
        durability: Durability,
    ) -> Result<Self, LogError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)?;
        writeln!(file, "{}", header.to_line())?;
        let mut writer = Self {
            file,
            path,
            last_seq: 0,
            durability,
        };
        writer.commit()?;
        Ok(writer)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    fn commit(&mut self) -> Result<(), LogError> {
        self.file.flush()?;
        if self.durability == Durability::Sync {
            self.file.sync_data()?;
        }
        Ok(())
    }

    pub fn append(&mut self, event: &SessionEvent) -> Result<(), LogError> {
        self.append_all(std::slice::from_ref(event))
    }

    /// Appends a batch with one sync at the end.
    pub fn append_all(&mut self, events: &[SessionEvent]) -> Result<(), LogError> {
        let mut expected = self.last_seq + 1;
        let mut buf = String::new();
        for event in events {
            if event.seq != expected {
                return Err(LogError::SequenceGap {
                    expected,
                    found: event.seq,
                });
            }
            buf.push_str(&serde_json::to_string(event).expect("event serializes"));
            buf.push('\n');
            expected += 1;
        }
        self.file.write_all(buf.as_bytes())?;
        self.commit()?;
        self.last_seq = expected - 1;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionFile {
    pub header: SessionHeader,
    pub events: Vec<SessionEvent>,
}

impl SessionFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, LogError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses file contents. Stops at the first bad line.
    pub fn parse(text: &str) -> Result<Self, LogError> {
        let mut lines = text.split_inclusive('\n');
        let first = lines.next().ok_or_else(|| LogError::CorruptLine {
            line: 1,
            reason: "empty file".into(),
        })?;
        let header = SessionHeader::parse_line(first.trim_end_matches(['\n', '\r']))?;
        let mut events = Vec::new();
        for (i, raw) in lines.enumerate() {
            let line = i + 2;
            let Some(body) = raw.strip_suffix('\n') else {
                return Err(LogError::CorruptLine {
                    line,
                    reason: "truncated line".into(),
                });
            };
            let body = body.trim_end_matches('\r');
            if body.is_empty() {
                continue;
            }
            let event = serde_json::from_str(body).map_err(|e| LogError::CorruptLine {
                line,
                reason: e.to_string(),
            })?;
            events.push(event);
        }
        Ok(Self { header, events })
    }

    pub fn to_text(&self) -> String {
        let mut out = self.header.to_line();
        out.push('\n');
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    /// Successive states after each event.
    pub fn states(&self) -> Replay<'_> {
        Replay {
            state: self.header.initial_state(),
            events: self.events.iter().enumerate(),
            failed: false,
        }
    }

    /// Folds every event; never calls an inference provider.
    pub fn replay(&self) -> Result<SceneState, LogError> {
        let mut state = self.header.initial_state();
        for (i, event) in self.events.iter().enumerate() {
            state
                .apply(event)
                .map_err(|error| LogError::Fold { line: i + 2, error })?;
        }
        Ok(state)
    }
}

/// Iterator over post-event states; stops after the first error.
pub struct Replay<'a> {
    state: SceneState,
    events: std::iter::Enumerate<std::slice::Iter<'a, SessionEvent>>,
    failed: bool,
}

impl Iterator for Replay<'_> {
    type Item = Result<SceneState, LogError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let (i, event) = self.events.next()?;
        match self.state.apply(event) {
            Ok(()) => Some(Ok(self.state.clone())),
            Err(error) => {
                self.failed = true;
                Some(Err(LogError::Fold { line: i + 2, error }))
            }
        }
    }
}
