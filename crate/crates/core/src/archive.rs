//! Corpus archives: a directory holding the slice table, vocabulary,
//! sequences and a manifest of SHA-256 checksums.
//!
//! `slices.txt` is the source of truth. Loading verifies every checksum,
//! rebuilds the corpus from the slices and checks it against the stored
//! vocabulary and sequence files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::score::{Slice, Time};
use crate::vocab::{build_corpus, Corpus, UnitMode, VocabError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SLICES_FILE: &str = "slices.txt";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const SEQUENCES_FILE: &str = "sequences.txt";

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("checksum mismatch for {0}")]
    Checksum(String),
    #[error("manifest does not list {0}")]
    Unlisted(String),
    #[error("{file} line {line}: {reason}")]
    Parse {
        file: &'static str,
        line: usize,
        reason: String,
    },
    #[error("{0} does not match the slice table")]
    Inconsistent(&'static str),
    #[error(transparent)]
    Vocab(#[from] VocabError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub mode: UnitMode,
    pub pieces: usize,
    pub sequences: usize,
    pub vocab_size: usize,
    /// File name to hex SHA-256.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub manifest: Manifest,
    pub pieces: Vec<(String, Vec<Slice>)>,
    pub corpus: Corpus,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io {
        path: path.to_owned(),
        source,
    }
}

/// `piece_id<TAB>onset<TAB>pitch pitch ...` per slice, onsets as `p/q`.
pub fn slices_to_text(pieces: &[(String, Vec<Slice>)]) -> String {
    let mut out = String::new();
    for (id, slices) in pieces {
        for s in slices {
            let pitches: Vec<String> = s.pitches().iter().map(u8::to_string).collect();
            let _ = writeln!(out, "{id}\t{}\t{}", s.onset, pitches.join(" "));
        }
    }
    out
}

pub fn parse_slices(text: &str) -> Result<Vec<(String, Vec<Slice>)>, ArchiveError> {
    let mut pieces: Vec<(String, Vec<Slice>)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let err = |reason: &str| ArchiveError::Parse {
            file: SLICES_FILE,
            line: idx + 1,
            reason: reason.to_owned(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, onset, pitches] = fields[..] else {
            return Err(err("expected 3 tab-separated fields"));
        };
        let onset: Time = onset.parse().map_err(|_| err("bad onset"))?;
        let pitches = pitches
            .split(' ')
            .map(|p| p.parse::<u8>().ok().filter(|p| *p < 128))
            .collect::<Option<Vec<u8>>>()
            .ok_or_else(|| err("bad pitch"))?;
        let slice = Slice::new(onset, pitches).ok_or_else(|| err("empty slice"))?;
        match pieces.last_mut() {
            Some((last, slices)) if last == id => {
                if slices.last().is_some_and(|p| p.onset >= slice.onset) {
                    return Err(err("onsets must increase within a piece"));
                }
                slices.push(slice);
            }
            _ => {
                if pieces.iter().any(|(p, _)| p == id) {
                    return Err(err("piece rows must be contiguous"));
                }
                pieces.push((id.to_owned(), vec![slice]));
            }
        }
    }
    Ok(pieces)
}

/// Builds the corpus and writes the archive into `dir`, creating it if
/// needed.
pub fn write_archive(
    dir: &Path,
    pieces: Vec<(String, Vec<Slice>)>,
    mode: UnitMode,
) -> Result<Archive, ArchiveError> {
    let corpus = build_corpus(&pieces, mode)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let contents = [
        (SLICES_FILE, slices_to_text(&pieces)),
        (VOCAB_FILE, corpus.vocab.to_tsv()),
        (SEQUENCES_FILE, corpus.sequences_to_text()),
    ];
    let mut files = BTreeMap::new();
    for (name, text) in &contents {
        let path = dir.join(name);
        fs::write(&path, text).map_err(io_err(&path))?;
        files.insert((*name).to_owned(), sha256_hex(text.as_bytes()));
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        mode,
        pieces: pieces.len(),
        sequences: corpus.sequences.len(),
        vocab_size: corpus.vocab.len(),
        files,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(&path, json).map_err(io_err(&path))?;
    Ok(Archive {
        manifest,
        pieces,
        corpus,
    })
}

pub fn read_archive(dir: &Path) -> Result<Archive, ArchiveError> {
    let path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&path).map_err(io_err(&path))?)?;
    let read = |name: &'static str| -> Result<String, ArchiveError> {
        let expected = manifest
            .files
            .get(name)
            .ok_or_else(|| ArchiveError::Unlisted(name.to_owned()))?;
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        if sha256_hex(&bytes) != *expected {
            return Err(ArchiveError::Checksum(name.to_owned()));
        }
        String::from_utf8(bytes).map_err(|_| ArchiveError::Checksum(name.to_owned()))
    };
    let slices = read(SLICES_FILE)?;
    let vocab = read(VOCAB_FILE)?;
    let sequences = read(SEQUENCES_FILE)?;

    let pieces = parse_slices(&slices)?;
    let corpus = build_corpus(&pieces, manifest.mode)?;
    if corpus.vocab.to_tsv() != vocab {
        return Err(ArchiveError::Inconsistent(VOCAB_FILE));
    }
    if corpus.sequences_to_text() != sequences {
        return Err(ArchiveError::Inconsistent(SEQUENCES_FILE));
    }
    if (manifest.pieces, manifest.sequences, manifest.vocab_size)
        != (pieces.len(), corpus.sequences.len(), corpus.vocab.len())
    {
        return Err(ArchiveError::Inconsistent(MANIFEST_FILE));
    }
    Ok(Archive {
        manifest,
        pieces,
        corpus,
    })
}
