//! Plain note-event interchange format.
//!
//! One record per line: `onset,duration,pitch,voice`, with times written as
//! integers or `p/q` rationals in whole-note units. Lines starting with `#`
//! and blank lines are skipped.

use std::fmt::Write as _;

use num_traits::Signed;

use super::{NoteEvent, ScoreError, Time};

/// Parses an interchange document. Records may appear in any order; the
/// result is sorted by onset, then voice, then pitch.
pub fn parse_events(text: &str) -> Result<Vec<NoteEvent>, ScoreError> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let record = raw.trim();
        if record.is_empty() || record.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = record.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(malformed(
                line,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let onset = parse_time(fields[0]).ok_or_else(|| malformed(line, "bad onset"))?;
        let duration = parse_time(fields[1]).ok_or_else(|| malformed(line, "bad duration"))?;
        let pitch: u8 = fields[2]
            .parse()
            .ok()
            .filter(|p| *p <= 127)
            .ok_or_else(|| malformed(line, "pitch must be an integer in 0..=127"))?;
        let voice: u16 = fields[3]
            .parse()
            .map_err(|_| malformed(line, "voice must be a small non-negative integer"))?;
        if !duration.is_positive() {
            return Err(ScoreError::NegativeDuration { line });
        }
        if onset.is_negative() {
            return Err(malformed(line, "onset is negative"));
        }
        events.push(NoteEvent {
            onset,
            duration,
            pitch,
            voice,
        });
    }
    events.sort_by_key(|e| e.sort_key());
    Ok(events)
}

pub fn write_events(events: &[NoteEvent]) -> String {
    let mut out = String::from("# onset,duration,pitch,voice\n");
    for e in events {
        let _ = writeln!(out, "{},{},{},{}", e.onset, e.duration, e.pitch, e.voice);
    }
    out
}

fn parse_time(field: &str) -> Option<Time> {
    let t: Time = field.parse().ok()?;
    Some(t)
}

fn malformed(line: usize, reason: impl Into<String>) -> ScoreError {
    ScoreError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}
