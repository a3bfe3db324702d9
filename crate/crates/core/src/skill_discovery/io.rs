//! Library files: a `gsl-skills v1` header, one JSON meta line, then one JSON
//! object per canonical skill (`label`, `cloud_c`, optional `channel`,
//! `traj_c`, `anchor`, `source`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{CanonicalSkill, DiscoveryError, LibraryMeta, SkillLibrary};

pub const LIBRARY_HEADER: &str = "gsl-skills v1";

pub fn write_library<W: Write>(mut w: W, lib: &SkillLibrary) -> std::io::Result<()> {
    writeln!(w, "{LIBRARY_HEADER}")?;
    serde_json::to_writer(&mut w, &lib.meta)?;
    writeln!(w)?;
    for e in lib.entries() {
        serde_json::to_writer(&mut w, e)?;
        writeln!(w)?;
    }
    w.flush()
}

pub fn read_library<R: Read>(r: R) -> Result<SkillLibrary, DiscoveryError> {
    let perr = |line: usize, message: String| DiscoveryError::Parse { line, message };
    let mut lines = BufReader::new(r).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == LIBRARY_HEADER => {}
        Some(Ok(h)) => {
            return Err(perr(
                1,
                format!("expected header `{LIBRARY_HEADER}`, found `{h}`"),
            ))
        }
        Some(Err(e)) => return Err(perr(1, e.to_string())),
        None => return Err(perr(1, "missing header".into())),
    }
    let meta: LibraryMeta = match lines.next() {
        Some(Ok(l)) => serde_json::from_str(&l).map_err(|e| perr(2, e.to_string()))?,
        Some(Err(e)) => return Err(perr(2, e.to_string())),
        None => return Err(perr(2, "missing meta line".into())),
    };
    let mut entries = vec![];
    for (k, line) in lines.enumerate() {
        let n = k + 3;
        let line = line.map_err(|e| perr(n, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: CanonicalSkill = serde_json::from_str(&line).map_err(|e| perr(n, e.to_string()))?;
        if let Some(ch) = &e.channel {
            if ch.len() != e.cloud_c.len() {
                return Err(perr(n, "channel length differs from the cloud".into()));
            }
        }
        entries.push(e);
    }
    Ok(SkillLibrary::new(meta, entries))
}

pub fn save_library(path: &Path, lib: &SkillLibrary) -> Result<(), DiscoveryError> {
    let io = |e: std::io::Error| DiscoveryError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let f = File::create(path).map_err(io)?;
    write_library(BufWriter::new(f), lib).map_err(io)
}

pub fn load_library(path: &Path) -> Result<SkillLibrary, DiscoveryError> {
    let f = File::open(path).map_err(|e| DiscoveryError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_library(f)
}
