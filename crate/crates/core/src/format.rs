//! Shared framing for the on-disk artifacts.
//!
//! Every binary artifact starts with a magic line (`CHARTJEPA-DS v1`, ...), a
//! block of `key = value` text lines and a `---` terminator line. Binary
//! payloads that follow are little-endian.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};

pub const HEADER_END: &str = "---";

/// Ordered `key = value` metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Header {
    pub entries: Vec<(String, String)>,
}

impl Header {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, what: &'static str, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::format(what, format!("missing header key '{key}'")))
    }

    pub fn parse<T: std::str::FromStr>(&self, what: &'static str, key: &str) -> Result<T> {
        let raw = self.require(what, key)?;
        raw.parse()
            .map_err(|_| Error::format(what, format!("bad value '{raw}' for '{key}'")))
    }

    pub fn write(&self, magic: &str, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{magic}")?;
        for (k, v) in &self.entries {
            if k.contains('\n') || v.contains('\n') || k.contains('=') {
                return Err(Error::format("header", format!("unencodable entry '{k}'")));
            }
            writeln!(w, "{k} = {v}")?;
        }
        writeln!(w, "{HEADER_END}")?;
        Ok(())
    }

    pub fn read(magic: &str, what: &'static str, r: &mut impl BufRead) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != magic {
            return Err(Error::format(
                what,
                format!("expected '{magic}', found '{}'", line.trim_end()),
            ));
        }
        let mut header = Header::new();
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::format(what, "unterminated header"));
            }
            let l = line.trim_end_matches(['\n', '\r']);
            if l == HEADER_END {
                return Ok(header);
            }
            let (k, v) = l
                .split_once(" = ")
                .ok_or_else(|| Error::format(what, format!("bad header line '{l}'")))?;
            header.push(k, v);
        }
    }
}

pub fn write_f32s(w: &mut impl Write, xs: impl IntoIterator<Item = f32>) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Comma-separated list of displayable items.
pub fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

pub fn split_list<T: std::str::FromStr>(what: &'static str, s: &str) -> Result<Vec<T>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::format(what, format!("bad list item '{x}'")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn header_round_trip_and_payload_follows() {
        let mut h = Header::new();
        h.push("n", 3).push("kind", "adp");
        let mut buf = Vec::new();
        h.write("MAGIC v1", &mut buf).unwrap();
        write_f32s(&mut buf, [1.5f32, -2.0]).unwrap();

        let mut r = Cursor::new(buf);
        let back = Header::read("MAGIC v1", "test", &mut r).unwrap();
        assert_eq!(back, h);
        assert_eq!(back.parse::<usize>("test", "n").unwrap(), 3);
        assert_eq!(read_f32s(&mut r, 2).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn wrong_magic_rejected() {
        let mut r = Cursor::new(b"OTHER v1\n---\n".to_vec());
        assert!(Header::read("MAGIC v1", "test", &mut r).is_err());
        let mut r = Cursor::new(b"MAGIC v1\nk = v\n".to_vec());
        assert!(Header::read("MAGIC v1", "test", &mut r).is_err());
    }
}
