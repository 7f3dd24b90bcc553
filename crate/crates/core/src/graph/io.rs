use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::CsrGraph;
use crate::error::{Error, Result};

/// Parses a whitespace-separated `src dst` edge list. Lines starting with `#` or
/// `%` are comments; tokens after the second are ignored.
pub fn load_edge_list<R: BufRead>(reader: R) -> Result<CsrGraph> {
    let mut edges = Vec::new();
    let mut max_id = None::<usize>;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let mut next_id = |what: &str| -> Result<usize> {
            let tok = tokens.next().ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("missing {what} node id"),
            })?;
            tok.parse::<usize>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("{what} token {tok:?} is not a non-negative integer"),
            })
        };
        let src = next_id("source")?;
        let dst = next_id("destination")?;
        max_id = Some(max_id.map_or(src.max(dst), |m| m.max(src).max(dst)));
        edges.push((src, dst));
    }
    let Some(max_id) = max_id else {
        return Err(Error::Input("edge list contains no edges; node count is unknown".into()));
    };
    CsrGraph::from_edges(max_id + 1, &edges)
}

pub fn read_edge_list_file(path: impl AsRef<Path>) -> Result<CsrGraph> {
    load_edge_list(BufReader::new(File::open(path)?))
}

/// Little-endian dump: `numNodes`, `numEdges`, then `rowPtr` and `colIdx`, all u64.
pub fn write_binary<W: Write>(g: &CsrGraph, mut w: W) -> Result<()> {
    w.write_all(&(g.num_nodes() as u64).to_le_bytes())?;
    w.write_all(&(g.num_edges() as u64).to_le_bytes())?;
    for &x in g.row_ptr().iter().chain(g.col_idx()) {
        w.write_all(&(x as u64).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<CsrGraph> {
    let mut read_u64 = || -> Result<usize> {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        usize::try_from(u64::from_le_bytes(buf))
            .map_err(|_| Error::Input("value does not fit in usize".into()))
    };
    let n = read_u64()?;
    let m = read_u64()?;
    let row_ptr = (0..=n).map(|_| read_u64()).collect::<Result<Vec<_>>>()?;
    let col_idx = (0..m).map(|_| read_u64()).collect::<Result<Vec<_>>>()?;
    CsrGraph::from_parts(row_ptr, col_idx)
}
