use serde::{Deserialize, Serialize};

use crate::code_index::{file_representation, SourceFileRecord};
use crate::text::token_spans;

/// Default token budget per chunk.
pub const DEFAULT_CHUNK_LIMIT: usize = 300;

/// A slice of some text holding at most `chunk_limit` tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextChunk {
    /// Source text from the first token's start to the last token's end.
    pub text: String,
    pub token_count: usize,
}

/// A chunk of a file representation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub fq_path: String,
    pub seq: u32,
    pub text: String,
    pub token_count: usize,
}

/// Greedy left-to-right packing of tokens into chunks of at most
/// `chunk_limit` tokens. Text without tokens yields no chunks.
///
/// Each chunk is cut at token boundaries, so re-tokenizing the chunks in
/// order reproduces the token stream of `text`.
///
/// # Panics
///
/// If `chunk_limit` is zero.
pub fn chunk_text(text: &str, chunk_limit: usize) -> Vec<TextChunk> {
    assert!(chunk_limit >= 1, "chunk_limit must be at least 1");
    let spans = token_spans(text);
    spans
        .chunks(chunk_limit)
        .map(|group| {
            let start = group[0].start;
            let end = group[group.len() - 1].end;
            TextChunk { text: text[start..end].to_string(), token_count: group.len() }
        })
        .collect()
}

/// Chunks of a file's representation. The path header counts towards the
/// first chunk's budget, and a file without methods is one chunk holding
/// only its path.
pub fn chunk_file(file: &SourceFileRecord, chunk_limit: usize) -> Vec<Chunk> {
    let representation = file_representation(file);
    let mut chunks: Vec<Chunk> = chunk_text(&representation, chunk_limit)
        .into_iter()
        .enumerate()
        .map(|(seq, c)| Chunk {
            fq_path: file.fq_path.clone(),
            seq: seq as u32,
            text: c.text,
            token_count: c.token_count,
        })
        .collect();
    if chunks.is_empty() {
        // a path made only of whitespace; keep the file addressable
        chunks.push(Chunk { fq_path: file.fq_path.clone(), seq: 0, text: representation, token_count: 0 });
    }
    chunks
}
