//! Text stream files: a `# n=<int> kind=<str> M=<int>` header followed by
//! one `<index>\t<delta>` line per update.

use std::io::{BufRead, Write};

use super::{total_mass, StreamConfig, StreamKind, Update};
use crate::error::{Result, SketchError};

/// Contents of a stream file. `config.m_max` is set to the file's total mass.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamFile {
    pub config: StreamConfig,
    pub updates: Vec<Update>,
}

pub fn write_stream<W: Write>(mut w: W, config: &StreamConfig, updates: &[Update]) -> Result<()> {
    writeln!(
        w,
        "# n={} kind={} M={}",
        config.n, config.kind, config.max_delta
    )?;
    for u in updates {
        writeln!(w, "{}\t{}", u.index, u.delta)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_header(line: &str) -> Result<(u64, StreamKind, u64)> {
    let bad = |reason: String| SketchError::Parse { line: 1, reason };
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| bad("header must start with `#`".into()))?;
    let (mut n, mut kind, mut m) = (None, None, None);
    for field in body.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed header field `{field}`")))?;
        match key {
            "n" => n = Some(value.parse::<u64>().map_err(|e| bad(e.to_string()))?),
            "kind" => {
                kind = Some(
                    value
                        .parse::<StreamKind>()
                        .map_err(|e| bad(e.to_string()))?,
                )
            }
            "M" => m = Some(value.parse::<u64>().map_err(|e| bad(e.to_string()))?),
            _ => return Err(bad(format!("unknown header key `{key}`"))),
        }
    }
    match (n, kind, m) {
        (Some(n), Some(kind), Some(m)) => Ok((n, kind, m)),
        _ => Err(bad("header needs n, kind and M".into())),
    }
}

/// Parses a stream file, validating every update against the header.
pub fn read_stream<R: BufRead>(r: R) -> Result<StreamFile> {
    let mut lines = r.lines();
    let header = lines.next().ok_or(SketchError::Parse {
        line: 1,
        reason: "empty file".into(),
    })??;
    let (n, kind, max_delta) = parse_header(header.trim())?;
    let mut config = StreamConfig::new(n, 1, max_delta, kind).map_err(|e| SketchError::Parse {
        line: 1,
        reason: e.to_string(),
    })?;
    let mut updates = Vec::new();
    for (no, line) in lines.enumerate() {
        let line_no = no + 2;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| SketchError::Parse {
            line: line_no,
            reason,
        };
        let (i, d) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected `<index>\\t<delta>`".into()))?;
        let u = Update::new(
            i.trim()
                .parse()
                .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            d.trim()
                .parse()
                .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
        );
        config.check(&u).map_err(|e| bad(e.to_string()))?;
        updates.push(u);
    }
    config.m_max = total_mass(&updates).max(1);
    Ok(StreamFile { config, updates })
}
