//! Note events, harmonic slices and the full expansion that links them.
//!
//! Scores enter the pipeline either as `**kern` documents (see [`kern`]) or as
//! plain `onset,duration,pitch,voice` records (see [`events`]). Both produce
//! [`NoteEvent`]s; [`full_expansion`] then turns a piece's events into one
//! [`Slice`] per distinct onset, listing every note sounding at that instant.

pub mod events;
pub mod kern;

use std::collections::BTreeSet;
use std::fmt;

use num_rational::Ratio;
use num_traits::Signed;
use thiserror::Error;

pub use events::{parse_events, write_events};
pub use kern::{parse_kern, parse_kern_document, KernDocument, Tandem};

/// Exact score time, measured in whole notes.
pub type Time = Ratio<i64>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoreError {
    #[error("line {line}: unsupported token `{token}` ({reason})")]
    UnsupportedToken {
        line: usize,
        token: String,
        reason: &'static str,
    },
    #[error("line {line}: malformed duration in `{token}`")]
    MalformedDuration { line: usize, token: String },
    #[error("line {line}: malformed pitch in `{token}`")]
    MalformedPitch { line: usize, token: String },
    #[error("line {line}: tie in `{token}` does not continue a sounding note")]
    UnmatchedTie { line: usize, token: String },
    #[error("line {line}: expected {expected} spine fields, found {found}")]
    SpineCountMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("document has no **kern spine")]
    NoKernSpine,
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: duration must be positive")]
    NegativeDuration { line: usize },
    #[error("invalid note event: {0}")]
    InvalidEvent(String),
    #[error("cannot expand an empty event list")]
    EmptyInput,
}

/// A pitched note with exact onset and duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoteEvent {
    pub onset: Time,
    pub duration: Time,
    /// MIDI note number.
    pub pitch: u8,
    /// Spine or part index.
    pub voice: u16,
}

impl NoteEvent {
    pub fn new(onset: Time, duration: Time, pitch: u8, voice: u16) -> Result<Self, ScoreError> {
        if !duration.is_positive() {
            return Err(ScoreError::InvalidEvent(format!(
                "duration {duration} is not positive"
            )));
        }
        if onset.is_negative() {
            return Err(ScoreError::InvalidEvent(format!("onset {onset} is negative")));
        }
        if pitch > 127 {
            return Err(ScoreError::InvalidEvent(format!("pitch {pitch} exceeds 127")));
        }
        Ok(Self {
            onset,
            duration,
            pitch,
            voice,
        })
    }

    pub fn end(&self) -> Time {
        self.onset + self.duration
    }

    /// Half-open membership: a note ending exactly at `t` is not sounding at `t`.
    pub fn sounds_at(&self, t: Time) -> bool {
        self.onset <= t && t < self.end()
    }

    pub(crate) fn sort_key(&self) -> (Time, u16, u8, Time) {
        (self.onset, self.voice, self.pitch, self.duration)
    }
}

/// Every pitch sounding at one onset. Pitches are kept sorted ascending, so
/// the bass is the first entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Slice {
    pub onset: Time,
    pitches: Vec<u8>,
}

impl Slice {
    pub fn new(onset: Time, mut pitches: Vec<u8>) -> Option<Self> {
        if pitches.is_empty() {
            return None;
        }
        pitches.sort_unstable();
        Some(Self { onset, pitches })
    }

    pub fn pitches(&self) -> &[u8] {
        &self.pitches
    }

    pub fn bass(&self) -> u8 {
        self.pitches[0]
    }
}

impl fmt::Display for Slice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.onset)?;
        for (i, p) in self.pitches.iter().enumerate() {
            let sep = if i == 0 { "" } else { " " };
            write!(f, "{sep}{p}")?;
        }
        Ok(())
    }
}

/// Duplicates held notes at every distinct onset so that each slice lists all
/// sounding pitches.
pub fn full_expansion(events: &[NoteEvent]) -> Result<Vec<Slice>, ScoreError> {
    if events.is_empty() {
        return Err(ScoreError::EmptyInput);
    }
    let mut order: Vec<&NoteEvent> = events.iter().collect();
    order.sort_by_key(|e| e.sort_key());
    let onsets: BTreeSet<Time> = order.iter().map(|e| e.onset).collect();

    let mut slices = Vec::with_capacity(onsets.len());
    let mut active: Vec<&NoteEvent> = Vec::new();
    let mut next = 0;
    for t in onsets {
        while next < order.len() && order[next].onset == t {
            active.push(order[next]);
            next += 1;
        }
        active.retain(|e| e.end() > t);
        let pitches = active.iter().map(|e| e.pitch).collect();
        // Every onset has at least the events starting there.
        slices.push(Slice::new(t, pitches).expect("onset without sounding events"));
    }
    Ok(slices)
}
