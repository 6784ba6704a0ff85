use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::Response;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("subject {subject} already answered trial {trial}")]
    Duplicate { subject: String, trial: String },
    #[error("{path} line {line}: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parses a log. A final line without its newline is an interrupted write
/// and is ignored; any other unparsable line is an error.
fn parse(path: &Path, text: &str) -> Result<(Vec<Response>, usize), StoreError> {
    let mut responses = Vec::new();
    let mut good_len = 0;
    for (i, chunk) in text.split_inclusive('\n').enumerate() {
        let complete = chunk.ends_with('\n');
        let line = chunk.trim_end_matches('\n');
        if line.trim().is_empty() {
            if complete {
                good_len += chunk.len();
            }
            continue;
        }
        if !complete {
            break;
        }
        let r = serde_json::from_str::<Response>(line).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        responses.push(r);
        good_len += chunk.len();
    }
    Ok((responses, good_len))
}

/// Reads every complete record of a response log.
pub fn read_log(path: &Path) -> Result<Vec<Response>, StoreError> {
    let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse(path, &text)?.0)
}

/// Append-only response store. Each record is flushed to disk before
/// `append` returns.
#[derive(Debug)]
pub struct ResponseLog {
    path: PathBuf,
    file: File,
    responses: Vec<Response>,
    answered: HashSet<(String, String)>,
}

impl ResponseLog {
    /// Opens or creates the log, replaying existing records. A torn final
    /// record is cut off.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let io = |source| StoreError::Io {
            path: path.display().to_string(),
            source,
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io(e)),
        };
        let (responses, good_len) = parse(path, &text)?;
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        if good_len < text.len() {
            file.set_len(good_len as u64).map_err(io)?;
        }
        let mut answered = HashSet::new();
        for r in &responses {
            if !answered.insert((r.subject_id.clone(), r.trial_id.clone())) {
                return Err(StoreError::Corrupt {
                    path: path.display().to_string(),
                    line: 0,
                    message: format!("duplicate record for {} / {}", r.subject_id, r.trial_id),
                });
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            file,
            responses,
            answered,
        })
    }

    pub fn responses(&self) -> &[Response] {
        &self.responses
    }

    pub fn is_answered(&self, subject: &str, trial: &str) -> bool {
        self.answered.contains(&(subject.to_string(), trial.to_string()))
    }

    pub fn answered_by(&self, subject: &str) -> usize {
        self.responses.iter().filter(|r| r.subject_id == subject).count()
    }

    pub fn append(&mut self, r: Response) -> Result<(), StoreError> {
        let key = (r.subject_id.clone(), r.trial_id.clone());
        if self.answered.contains(&key) {
            return Err(StoreError::Duplicate {
                subject: key.0,
                trial: key.1,
            });
        }
        let mut line = serde_json::to_string(&r).expect("serialisable");
        line.push('\n');
        let io = |source| StoreError::Io {
            path: self.path.display().to_string(),
            source,
        };
        self.file.write_all(line.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)?;
        self.answered.insert(key);
        self.responses.push(r);
        Ok(())
    }
}
