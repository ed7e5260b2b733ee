//! Line-delimited JSON episode logs: one header record per episode followed
//! by one record per meta-step.

use crate::diagnosis::{Outcome, Trajectory};
use crate::env::{Event, ACTION_DIM};
use crate::world::{Difficulty, Pose};
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeHeader {
    pub map_seed: u64,
    pub difficulty: Difficulty,
    pub init_pose: Pose,
    pub goal: (f64, f64),
    #[serde(rename = "OT")]
    pub ot: f64,
    pub episode: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    /// Meta-step index, starting at 1.
    pub t: usize,
    pub pose: Pose,
    pub action: [f64; ACTION_DIM],
    pub reward: f64,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum LogRecord {
    Header(EpisodeHeader),
    Step(StepRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl EpisodeLog {
    pub fn outcome(&self) -> Option<Outcome> {
        self.steps.last().and_then(|s| s.event.outcome())
    }

    pub fn undiscounted_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Initial pose followed by one pose per meta-step.
    pub fn poses(&self) -> Vec<Pose> {
        std::iter::once(self.header.init_pose).chain(self.steps.iter().map(|s| s.pose)).collect()
    }

    /// Trajectory for diagnosis; episodes without a terminal event count as
    /// timeouts.
    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            poses: self.poses(),
            outcome: self.outcome().unwrap_or(Outcome::Timeout),
        }
    }

    pub fn write<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let header = LogRecord::Header(self.header.clone());
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n")?;
        for s in &self.steps {
            serde_json::to_writer(&mut *out, &LogRecord::Step(s.clone()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Parses a log stream. Step records must follow a header, and `t` must
/// count up from 1 within each episode. Blank lines are ignored.
pub fn read_episode_logs<R: BufRead>(input: R) -> Result<Vec<EpisodeLog>, LogError> {
    let mut logs: Vec<EpisodeLog> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LogRecord = serde_json::from_str(&line).map_err(|e| LogError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        match record {
            LogRecord::Header(header) => logs.push(EpisodeLog { header, steps: Vec::new() }),
            LogRecord::Step(step) => {
                let Some(log) = logs.last_mut() else {
                    return Err(LogError::Parse {
                        line: line_no,
                        msg: "step record before any header".into(),
                    });
                };
                if step.t != log.steps.len() + 1 {
                    return Err(LogError::Parse {
                        line: line_no,
                        msg: format!("expected t = {}, found {}", log.steps.len() + 1, step.t),
                    });
                }
                if log.steps.last().is_some_and(|s| s.event != Event::None) {
                    return Err(LogError::Parse {
                        line: line_no,
                        msg: "step after a terminal event".into(),
                    });
                }
                log.steps.push(step);
            }
        }
    }
    Ok(logs)
}
