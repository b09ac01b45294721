//! JSON-Lines dataset files, one episode per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::sim::EpisodeRecord;
use crate::{EnvError, Result};

pub fn write_jsonl<W: Write>(mut w: W, episodes: &[EpisodeRecord]) -> Result<()> {
    for e in episodes {
        serde_json::to_writer(&mut w, e).map_err(|source| EnvError::Json { line: 0, source })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl_file(path: &Path, episodes: &[EpisodeRecord]) -> Result<()> {
    write_jsonl(BufWriter::new(File::create(path)?), episodes)
}

/// Parses every non-blank line and checks per-episode shape consistency.
pub fn read_jsonl<R: Read>(r: R) -> Result<Vec<EpisodeRecord>> {
    let mut out = Vec::new();
    for (k, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ep: EpisodeRecord = serde_json::from_str(&line).map_err(|source| EnvError::Json { line: k + 1, source })?;
        check_episode(&ep).map_err(|m| EnvError::Data(format!("line {}: {m}", k + 1)))?;
        out.push(ep);
    }
    Ok(out)
}

pub fn read_jsonl_file(path: &Path) -> Result<Vec<EpisodeRecord>> {
    read_jsonl(File::open(path)?)
}

fn check_episode(ep: &EpisodeRecord) -> std::result::Result<(), String> {
    let n = ep.config.n_objects;
    let dim = ep.config.obs_dim();
    if ep.steps.is_empty() {
        return Err("episode has no steps".into());
    }
    for (t, s) in ep.steps.iter().enumerate() {
        if s.gt_state.len() != n || s.obs.len() != n || s.graph.n() != n {
            return Err(format!("step {t}: expected {n} objects"));
        }
        if s.obs.iter().any(|o| o.len() != dim) {
            return Err(format!("step {t}: observation length differs from {dim}"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContactSummary {
    pub episodes: usize,
    pub transitions: usize,
    /// Steps whose graph has at least one edge.
    pub contact_steps: usize,
    pub contact_rate: f64,
}

pub fn contact_summary(episodes: &[EpisodeRecord]) -> ContactSummary {
    let transitions: usize = episodes.iter().map(EpisodeRecord::len).sum();
    let contact_steps = episodes
        .iter()
        .flat_map(|e| &e.steps)
        .filter(|s| !s.graph.is_empty())
        .count();
    ContactSummary {
        episodes: episodes.len(),
        transitions,
        contact_steps,
        contact_rate: if transitions == 0 {
            0.0
        } else {
            contact_steps as f64 / transitions as f64
        },
    }
}
