//! JSON bodies exchanged between islands and the pool server.
//!
//! ```text
//! GET /random  -> 200 {"chromosome":"0101..."} | 204
//! PUT /one     <- {"chromosome":"0101..."}  -> 200 {"size":N} | 400
//! GET /log     -> 200 [{"t":ms,"ip":"10.A.B.C","op":"PUT"|"GET","fitness":x|null}, ...]
//! ```

use serde::{Deserialize, Serialize};

use crate::chromosome::Chromosome;
use crate::error::{Error, Result};
use crate::pool::LogEvent;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChromosomeBody {
    pub chromosome: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeBody {
    pub size: usize,
}

pub fn encode_chromosome_body(c: &Chromosome) -> String {
    serde_json::to_string(&ChromosomeBody {
        chromosome: c.to_string(),
    })
    .expect("plain struct serialises")
}

/// Decodes `{"chromosome": "..."}` and checks length and alphabet.
pub fn decode_chromosome_body(body: &[u8], expected_len: usize) -> Result<Chromosome> {
    let parsed: ChromosomeBody =
        serde_json::from_slice(body).map_err(|e| Error::MalformedBody(e.to_string()))?;
    Chromosome::parse_with_len(&parsed.chromosome, expected_len)
}

/// Decodes `{"chromosome": "..."}` checking only the alphabet; for clients,
/// which judge the length themselves.
pub fn decode_chromosome(body: &[u8]) -> Result<Chromosome> {
    let parsed: ChromosomeBody =
        serde_json::from_slice(body).map_err(|e| Error::MalformedBody(e.to_string()))?;
    Chromosome::parse(&parsed.chromosome)
}

pub fn encode_size_body(size: usize) -> String {
    serde_json::to_string(&SizeBody { size }).expect("plain struct serialises")
}

pub fn decode_size_body(body: &[u8]) -> Result<usize> {
    serde_json::from_slice::<SizeBody>(body)
        .map(|b| b.size)
        .map_err(|e| Error::MalformedBody(e.to_string()))
}

pub fn encode_log(events: &[LogEvent]) -> String {
    serde_json::to_string(events).expect("log events serialise")
}

pub fn encode_log_line(event: &LogEvent) -> String {
    serde_json::to_string(event).expect("log events serialise")
}
