//! A strict subset of the Humdrum `**kern` representation.
//!
//! Supported:
//!
//! * spines of type `**kern`; other spine types are carried along and ignored
//! * note, rest and chord tokens (`4c`, `8r`, `4C 4E 4G`)
//! * recip durations with dots (`4`, `8.`, `2..`, `0` breve, `00` longa)
//! * pitch letters in Humdrum octave convention: `c` = C4 = 60, `cc` = C5,
//!   `C` = C3, `CC` = C2; accidentals `#`, `-`, `n`
//! * ties `[`, `_`, `]`, merged into one sounding event
//! * barlines (ignored for timing), comments, null tokens and tandem
//!   interpretations such as keys and meters (recorded, not interpreted)
//! * notation-only signifiers that change neither pitch nor timing: beams,
//!   stems, slurs, phrases, articulations, bowings, ornaments and fermatas
//!
//! Spine splits and merges, grace notes, appoggiaturas and editorial marks are
//! hard errors so that nothing is silently dropped from a piece.

use std::collections::HashMap;

use super::{NoteEvent, ScoreError, Time};

/// A tandem interpretation seen in a kern spine (`*k[f#]`, `*M3/4`, ...).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tandem {
    pub line: usize,
    pub voice: u16,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KernDocument {
    pub events: Vec<NoteEvent>,
    pub tandems: Vec<Tandem>,
}

/// Parses a kern document into note events sorted by onset, voice and pitch.
pub fn parse_kern(text: &str) -> Result<Vec<NoteEvent>, ScoreError> {
    parse_kern_document(text).map(|doc| doc.events)
}

pub fn parse_kern_document(text: &str) -> Result<KernDocument, ScoreError> {
    let mut spines: Option<Vec<Option<SpineState>>> = None;
    let mut doc = KernDocument::default();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() || raw.starts_with('!') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();

        let Some(states) = spines.as_mut() else {
            if !fields.iter().all(|f| f.starts_with("**")) {
                return Err(ScoreError::UnsupportedToken {
                    line,
                    token: raw.to_string(),
                    reason: "content before the exclusive interpretation line",
                });
            }
            let mut voice = 0u16;
            let states = fields
                .iter()
                .map(|f| {
                    (*f == "**kern").then(|| {
                        voice += 1;
                        SpineState::new(voice - 1)
                    })
                })
                .collect::<Vec<_>>();
            if voice == 0 {
                return Err(ScoreError::NoKernSpine);
            }
            spines = Some(states);
            continue;
        };

        if fields.len() != states.len() {
            return Err(ScoreError::SpineCountMismatch {
                line,
                expected: states.len(),
                found: fields.len(),
            });
        }

        if raw.starts_with('*') {
            let terminators = fields.iter().filter(|f| **f == "*-").count();
            if terminators == fields.len() {
                break;
            }
            if terminators > 0 {
                return Err(unsupported(line, raw, "partial spine termination"));
            }
            for (field, state) in fields.iter().zip(states.iter()) {
                match *field {
                    "*" => {}
                    "*^" | "*v" | "*+" | "*x" => {
                        return Err(unsupported(line, field, "spine split/merge/exchange"))
                    }
                    f if f.starts_with("**") => {
                        return Err(unsupported(line, f, "exclusive interpretation change"))
                    }
                    f if f.starts_with('*') => {
                        if let Some(state) = state {
                            doc.tandems.push(Tandem {
                                line,
                                voice: state.voice,
                                value: f[1..].to_string(),
                            });
                        }
                    }
                    f => return Err(unsupported(line, f, "data token on an interpretation line")),
                }
            }
            continue;
        }

        if raw.starts_with('=') {
            continue;
        }

        for (field, state) in fields.iter().zip(states.iter_mut()) {
            if let Some(state) = state {
                state.read_field(line, field, &mut doc.events)?;
            }
        }
    }

    if spines.is_none() {
        return Err(ScoreError::NoKernSpine);
    }
    doc.events.sort_by_key(|e| e.sort_key());
    Ok(doc)
}

fn unsupported(line: usize, token: &str, reason: &'static str) -> ScoreError {
    ScoreError::UnsupportedToken {
        line,
        token: token.to_string(),
        reason,
    }
}

struct SpineState {
    voice: u16,
    cursor: Time,
    /// Open ties by pitch: index of the event being extended.
    open_ties: HashMap<u8, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tie {
    None,
    Open,
    Continue,
    Close,
}

#[derive(Debug)]
struct Note {
    duration: Time,
    /// `None` for rests.
    pitch: Option<u8>,
    tie: Tie,
}

impl SpineState {
    fn new(voice: u16) -> Self {
        Self {
            voice,
            cursor: Time::from_integer(0),
            open_ties: HashMap::new(),
        }
    }

    fn read_field(
        &mut self,
        line: usize,
        field: &str,
        events: &mut Vec<NoteEvent>,
    ) -> Result<(), ScoreError> {
        if field == "." {
            return Ok(());
        }
        let notes = field
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(|t| parse_note(line, t))
            .collect::<Result<Vec<_>, _>>()?;
        let Some(advance) = notes.iter().map(|n| n.duration).min() else {
            return Err(unsupported(line, field, "empty data token"));
        };
        let onset = self.cursor;
        for (note, token) in notes.iter().zip(field.split(' ').filter(|t| !t.is_empty())) {
            let Some(pitch) = note.pitch else { continue };
            match note.tie {
                Tie::None | Tie::Open => {
                    events.push(NoteEvent {
                        onset,
                        duration: note.duration,
                        pitch,
                        voice: self.voice,
                    });
                    if note.tie == Tie::Open {
                        self.open_ties.insert(pitch, events.len() - 1);
                    }
                }
                Tie::Continue | Tie::Close => {
                    let held = self
                        .open_ties
                        .get(&pitch)
                        .copied()
                        .filter(|&i| events[i].end() == onset)
                        .ok_or_else(|| ScoreError::UnmatchedTie {
                            line,
                            token: token.to_string(),
                        })?;
                    events[held].duration += note.duration;
                    if note.tie == Tie::Close {
                        self.open_ties.remove(&pitch);
                    }
                }
            }
        }
        self.cursor += advance;
        Ok(())
    }
}

/// Signifiers that affect neither pitch nor timing.
const NOTATION_ONLY: &[char] = &[
    'L', 'J', 'K', 'k', '/', '\\', '(', ')', '{', '}', '&', '\'', '"', '`', '~', '^', ';', ':',
    ',', '|', '<', '>', 't', 'T', 'm', 'M', 'w', 'W', 'S', '$', 'R', 'O', 'o', 'u', 'v', 'z',
];

fn parse_note(line: usize, token: &str) -> Result<Note, ScoreError> {
    let malformed_duration = || ScoreError::MalformedDuration {
        line,
        token: token.to_string(),
    };
    let malformed_pitch = || ScoreError::MalformedPitch {
        line,
        token: token.to_string(),
    };

    let mut digits = String::new();
    let mut digits_done = false;
    let mut dots = 0u32;
    let mut letter: Option<char> = None;
    let mut letter_count = 0i32;
    let mut alter = 0i32;
    let mut rest = false;
    let mut tie = Tie::None;

    for ch in token.chars() {
        match ch {
            '0'..='9' => {
                if digits_done {
                    return Err(malformed_duration());
                }
                digits.push(ch);
            }
            '.' => {
                if digits.is_empty() {
                    return Err(malformed_duration());
                }
                digits_done = true;
                dots += 1;
            }
            'a'..='g' | 'A'..='G' => {
                if !digits.is_empty() {
                    digits_done = true;
                }
                match letter {
                    None => letter = Some(ch),
                    Some(prev) if prev == ch && alter == 0 => {}
                    Some(_) => return Err(malformed_pitch()),
                }
                letter_count += 1;
            }
            'r' => {
                digits_done = !digits.is_empty();
                rest = true;
            }
            '#' | '-' | 'n' => {
                if letter.is_none() {
                    return Err(malformed_pitch());
                }
                alter += match ch {
                    '#' => 1,
                    '-' => -1,
                    _ => 0,
                };
            }
            '[' | '_' | ']' => {
                let next = match ch {
                    '[' => Tie::Open,
                    '_' => Tie::Continue,
                    _ => Tie::Close,
                };
                if tie != Tie::None {
                    return Err(ScoreError::UnmatchedTie {
                        line,
                        token: token.to_string(),
                    });
                }
                tie = next;
            }
            'q' | 'Q' => return Err(unsupported(line, token, "grace note")),
            'p' | 'P' => return Err(unsupported(line, token, "appoggiatura")),
            'x' | 'X' | 'y' | 'Y' => return Err(unsupported(line, token, "editorial mark")),
            c if NOTATION_ONLY.contains(&c) => {
                if !digits.is_empty() {
                    digits_done = true;
                }
            }
            _ => return Err(unsupported(line, token, "unknown signifier")),
        }
    }

    let duration = recip_duration(&digits, dots).ok_or_else(malformed_duration)?;
    let pitch = match (rest, letter) {
        (true, None) => None,
        (false, Some(l)) => Some(midi_pitch(l, letter_count, alter).ok_or_else(malformed_pitch)?),
        _ => return Err(malformed_pitch()),
    };
    if pitch.is_none() && tie != Tie::None {
        return Err(ScoreError::UnmatchedTie {
            line,
            token: token.to_string(),
        });
    }
    Ok(Note {
        duration,
        pitch,
        tie,
    })
}

fn recip_duration(digits: &str, dots: u32) -> Option<Time> {
    if digits.is_empty() {
        return None;
    }
    let base = if digits.bytes().all(|b| b == b'0') {
        // 0 = breve, 00 = longa, 000 = maxima
        Time::from_integer(1i64.checked_shl(digits.len() as u32)?)
    } else if digits.starts_with('0') {
        return None;
    } else {
        let n: i64 = digits.parse().ok()?;
        Time::new(1, n)
    };
    // Each dot adds half of the previous addition.
    let mut total = base;
    let mut add = base;
    for _ in 0..dots {
        add /= 2;
        total += add;
    }
    Some(total)
}

fn midi_pitch(letter: char, count: i32, alter: i32) -> Option<u8> {
    let pc = match letter.to_ascii_lowercase() {
        'c' => 0,
        'd' => 2,
        'e' => 4,
        'f' => 5,
        'g' => 7,
        'a' => 9,
        'b' => 11,
        _ => return None,
    };
    let octave = if letter.is_ascii_lowercase() {
        4 + (count - 1)
    } else {
        3 - (count - 1)
    };
    let midi = 12 * (octave + 1) + pc + alter;
    u8::try_from(midi).ok().filter(|m| *m <= 127)
}
