//! Byte capacities with binary suffixes (`KB`, `MB`, `GB` are powers of two).

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

pub fn parse_capacity(text: &str) -> Result<u64, String> {
    let t = text.trim();
    let upper = t.to_ascii_uppercase();
    let (digits, shift) = [
        ("KB", 10),
        ("MB", 20),
        ("GB", 30),
        ("K", 10),
        ("M", 20),
        ("G", 30),
        ("B", 0),
    ]
    .iter()
    .find_map(|(suffix, shift)| upper.strip_suffix(suffix).map(|d| (d.trim(), *shift)))
    .unwrap_or((upper.as_str(), 0));
    let n: u64 = digits
        .parse()
        .map_err(|_| format!("invalid capacity `{t}` (expected e.g. 32KB, 16MB, 4096)"))?;
    if n == 0 {
        return Err(format!("capacity `{t}` must be positive"));
    }
    n.checked_mul(1u64 << shift)
        .ok_or_else(|| format!("capacity `{t}` overflows"))
}

/// Shortest exact rendering: `32KB`, `16MB`, `1000B`.
pub fn format_capacity(bytes: u64) -> String {
    for (suffix, shift) in [("GB", 30), ("MB", 20), ("KB", 10)] {
        if bytes >= 1 << shift && bytes.is_multiple_of(1 << shift) {
            return format!("{}{suffix}", bytes >> shift);
        }
    }
    format!("{bytes}B")
}

/// A capacity read from config as either an integer byte count or a suffixed string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Capacity(pub u64);

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_capacity(self.0))
    }
}

impl<'de> Deserialize<'de> for Capacity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Bytes(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Bytes(0) => Err(serde::de::Error::custom("capacity must be positive")),
            Raw::Bytes(b) => Ok(Capacity(b)),
            Raw::Text(s) => parse_capacity(&s)
                .map(Capacity)
                .map_err(serde::de::Error::custom),
        }
    }
}
