pub mod score;
pub mod vocab;
pub mod embedding;
pub mod tension;
pub mod stats;
pub mod chords;
pub mod experiments;
pub mod synth;
pub mod archive;
