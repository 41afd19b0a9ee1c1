use std::io::Write;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::FormatError;

const PREAMBLE: usize = 8 + 4 + 8;

pub(crate) fn encode<H: Serialize>(magic: &[u8; 8], version: u32, header: &H, payload: &[u8]) -> Vec<u8> {
    let header = serde_json::to_vec(header).expect("headers are plain data");
    let mut out = Vec::with_capacity(PREAMBLE + header.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.write_all(&header).unwrap();
    out.extend_from_slice(payload);
    out
}

/// Splits a framed file into its parsed header and raw payload.
pub(crate) fn decode<'a, H: DeserializeOwned>(
    bytes: &'a [u8],
    magic: &[u8; 8],
    version: u32,
) -> Result<(H, &'a [u8]), FormatError> {
    if bytes.len() < 8 || &bytes[..8] != magic {
        let found = &bytes[..bytes.len().min(8)];
        return Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(magic).trim_end_matches('\0').to_string(),
            found: String::from_utf8_lossy(found).trim_end_matches('\0').to_string(),
        });
    }
    if bytes.len() < PREAMBLE {
        return Err(FormatError::Truncated { needed: PREAMBLE, found: bytes.len() });
    }
    let found_version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if found_version != version {
        return Err(FormatError::VersionMismatch { expected: version, found: found_version });
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let header_end = (PREAMBLE as u64)
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len() as u64)
        .ok_or(FormatError::Truncated {
            needed: PREAMBLE.saturating_add(header_len as usize),
            found: bytes.len(),
        })? as usize;
    let header = serde_json::from_slice(&bytes[PREAMBLE..header_end])
        .map_err(|e| FormatError::MalformedHeader(e.to_string()))?;
    Ok((header, &bytes[header_end..]))
}
