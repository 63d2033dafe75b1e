//! MSB-first hex encoding of bit strings.

use crate::error::{Error, Result};

/// Encodes bits four per hex digit, MSB first; the last digit is zero-padded.
pub fn to_hex(bits: &[bool]) -> String {
    bits.chunks(4)
        .map(|nib| {
            let v = nib
                .iter()
                .enumerate()
                .fold(0u32, |acc, (i, &b)| acc | ((b as u32) << (3 - i)));
            char::from_digit(v, 16).expect("nibble < 16")
        })
        .collect()
}

/// Decodes exactly `length` bits; padding bits must be zero.
pub fn from_hex(hex: &str, length: usize) -> Result<Vec<bool>> {
    let hex = hex.trim();
    let hex = hex.strip_prefix("0x").unwrap_or(hex);
    if hex.len() != length.div_ceil(4) {
        return Err(Error::InvalidArgument(format!(
            "{} hex digits cannot hold exactly {length} bits",
            hex.len()
        )));
    }
    let mut bits = Vec::with_capacity(hex.len() * 4);
    for ch in hex.chars() {
        let v = ch
            .to_digit(16)
            .ok_or_else(|| Error::InvalidArgument(format!("invalid hex digit '{ch}'")))?;
        bits.extend((0..4).map(|i| (v >> (3 - i)) & 1 == 1));
    }
    if bits[length..].iter().any(|&b| b) {
        return Err(Error::InvalidArgument("non-zero padding bits in hex string".into()));
    }
    bits.truncate(length);
    Ok(bits)
}
