//! Orbit and atom cache file format.
//!
//! One versioned, append-only, tab-delimited text file per (group,
//! depth): a header carrying the schema version, the group-spec digest
//! and the depth, followed by one record per reduced word with its
//! letters, matrix, orbit distance and boundary projection. A cache is
//! reused only when the digest and depth match.

use crate::group::{FuchsianGroup, GroupError};
use crate::hyperbolic::{boundary_projection, Mobius};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

/// Schema version of the cache format.
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad cache header: {0}")]
    BadHeader(String),
    #[error("cache digest mismatch: file has {found}, group has {want}")]
    DigestMismatch { found: String, want: String },
    #[error("cache depth mismatch: file has {found}, requested {want}")]
    DepthMismatch { found: usize, want: usize },
    #[error("malformed record at line {line}: {why}")]
    BadRecord { line: usize, why: String },
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// One cached orbit record.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitRecord {
    /// Letters as slot indices.
    pub word: Vec<u8>,
    pub matrix: Mobius,
    pub dist: f64,
    /// Boundary projection of the orbit point; NaN when the projection
    /// ray ends at infinity.
    pub projection: f64,
}

/// Writes the full orbit cache for the group at the given depth.
pub fn write_orbit_cache(
    path: &Path,
    group: &FuchsianGroup,
    max_len: usize,
    budget: u64,
) -> Result<usize, CacheError> {
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(
        out,
        "# cuspwind-orbit-cache v{CACHE_VERSION} digest={} depth={max_len}",
        group.digest()
    )?;
    writeln!(out, "# word\ta\tb\tc\td\tdist\tprojection")?;
    let mut count = 0usize;
    let mut io_err: Option<std::io::Error> = None;
    group.for_each_word(max_len, budget, |letters, m, dist| {
        if io_err.is_some() {
            return;
        }
        let word: String = letters.iter().map(|&s| slot_char(s)).collect();
        let proj = boundary_projection(m.orbit_point()).unwrap_or(f64::NAN);
        if let Err(e) = writeln!(
            out,
            "{word}\t{:.17e}\t{:.17e}\t{:.17e}\t{:.17e}\t{:.17e}\t{:.17e}",
            m.a, m.b, m.c, m.d, dist, proj
        ) {
            io_err = Some(e);
        }
        count += 1;
    })?;
    if let Some(e) = io_err {
        return Err(CacheError::Io(e));
    }
    out.flush()?;
    Ok(count)
}

/// Reads an orbit cache back, verifying version, digest and depth.
pub fn read_orbit_cache(
    path: &Path,
    group: &FuchsianGroup,
    max_len: usize,
) -> Result<Vec<OrbitRecord>, CacheError> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| CacheError::BadHeader("empty file".into()))??;
    let (version, digest, depth) = parse_header(&header)?;
    if version != CACHE_VERSION {
        return Err(CacheError::BadHeader(format!(
            "unsupported version {version}"
        )));
    }
    if digest != group.digest() {
        return Err(CacheError::DigestMismatch {
            found: digest,
            want: group.digest().to_string(),
        });
    }
    if depth != max_len {
        return Err(CacheError::DepthMismatch {
            found: depth,
            want: max_len,
        });
    }
    let mut records = Vec::new();
    for (no, line) in lines.enumerate() {
        let line = line?;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(CacheError::BadRecord {
                line: no + 2,
                why: format!("expected 7 fields, got {}", fields.len()),
            });
        }
        let word = fields[0]
            .chars()
            .map(char_slot)
            .collect::<Option<Vec<u8>>>()
            .ok_or_else(|| CacheError::BadRecord {
                line: no + 2,
                why: "bad word letter".into(),
            })?;
        let num = |i: usize| -> Result<f64, CacheError> {
            fields[i].parse::<f64>().map_err(|e| CacheError::BadRecord {
                line: no + 2,
                why: format!("field {i}: {e}"),
            })
        };
        records.push(OrbitRecord {
            word,
            matrix: Mobius {
                a: num(1)?,
                b: num(2)?,
                c: num(3)?,
                d: num(4)?,
            },
            dist: num(5)?,
            projection: num(6)?,
        });
    }
    Ok(records)
}

fn parse_header(header: &str) -> Result<(u32, String, usize), CacheError> {
    let bad = |why: &str| CacheError::BadHeader(why.to_string());
    let rest = header
        .strip_prefix("# cuspwind-orbit-cache v")
        .ok_or_else(|| bad("missing magic"))?;
    let mut parts = rest.split_whitespace();
    let version: u32 = parts
        .next()
        .ok_or_else(|| bad("missing version"))?
        .parse()
        .map_err(|_| bad("bad version"))?;
    let digest = parts
        .next()
        .and_then(|p| p.strip_prefix("digest="))
        .ok_or_else(|| bad("missing digest"))?
        .to_string();
    let depth: usize = parts
        .next()
        .and_then(|p| p.strip_prefix("depth="))
        .ok_or_else(|| bad("missing depth"))?
        .parse()
        .map_err(|_| bad("bad depth"))?;
    Ok((version, digest, depth))
}

/// Compact letter encoding for cached words: a-z for slots 0-25.
fn slot_char(slot: u8) -> char {
    (b'a' + slot) as char
}

fn char_slot(c: char) -> Option<u8> {
    if c.is_ascii_lowercase() {
        Some(c as u8 - b'a')
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{build_group, CuspSpec, GroupSpec};

    fn group() -> FuchsianGroup {
        build_group(&GroupSpec {
            hyperbolic: vec![],
            parabolic: vec![CuspSpec { p: -2.5, w: 1.0 }, CuspSpec { p: 2.5, w: 1.0 }],
        })
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let g = group();
        let dir = std::env::temp_dir().join("cuspwind-cache-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("orbit.tsv");
        let n = write_orbit_cache(&path, &g, 4, 1 << 20).unwrap();
        let records = read_orbit_cache(&path, &g, 4).unwrap();
        assert_eq!(records.len(), n);
        assert_eq!(records.len() + 1, g.word_count(4) as usize);
        // spot check against a fresh enumeration
        let words = g.enumerate_words(4, 1 << 20).unwrap();
        let rec = &records[0];
        let word = words.iter().find(|w| w.letters == rec.word).unwrap();
        assert!((word.dist - rec.dist).abs() < 1e-12);
    }

    #[test]
    fn digest_and_depth_guards() {
        let g = group();
        let dir = std::env::temp_dir().join("cuspwind-cache-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("orbit2.tsv");
        write_orbit_cache(&path, &g, 3, 1 << 20).unwrap();
        assert!(matches!(
            read_orbit_cache(&path, &g, 4),
            Err(CacheError::DepthMismatch { .. })
        ));
        let other = build_group(&GroupSpec {
            hyperbolic: vec![],
            parabolic: vec![CuspSpec { p: -2.5, w: 1.0 }, CuspSpec { p: 2.5, w: 1.1 }],
        })
        .unwrap();
        assert!(matches!(
            read_orbit_cache(&path, &other, 3),
            Err(CacheError::DigestMismatch { .. })
        ));
    }
}
