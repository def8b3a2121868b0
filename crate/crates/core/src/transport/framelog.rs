//! Frame logs: an optional `# ...` comment line followed by raw frames,
//! concatenated exactly as they crossed the wire.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::transport::wire::Frame;

pub fn encode_log(header: Option<&str>, frames: &[Frame]) -> Vec<u8> {
    let mut out = Vec::new();
    if let Some(h) = header {
        out.extend_from_slice(b"# ");
        out.extend_from_slice(h.replace('\n', " ").as_bytes());
        out.push(b'\n');
    }
    for f in frames {
        out.extend_from_slice(&f.encode());
    }
    out
}

/// Splits off the comment line, if any, and decodes the frames.
pub fn decode_log(bytes: &[u8]) -> Result<(Option<String>, Vec<Frame>)> {
    let (header, body) = match bytes.first() {
        Some(b'#') => {
            let nl = bytes
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::Wire("unterminated log header".into()))?;
            let text = String::from_utf8_lossy(&bytes[1..nl]).trim().to_string();
            (Some(text), &bytes[nl + 1..])
        }
        _ => (None, bytes),
    };
    Ok((header, Frame::decode_all(body)?))
}

pub fn write_log(path: &Path, header: Option<&str>, frames: &[Frame]) -> Result<()> {
    fs::write(path, encode_log(header, frames))?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<(Option<String>, Vec<Frame>)> {
    decode_log(&fs::read(path)?)
}
