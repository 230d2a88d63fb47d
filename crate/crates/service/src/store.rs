//! On-disk persistence: one append-only JSON-lines log per session and one
//! JSON file per uploaded graph.
//!
//! ```text
//! <data_dir>/sessions/<id>.jsonl
//! <data_dir>/graphs/<id>.json
//! ```

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use edgequery::ExchangeGraph;

use crate::error::{ApiError, ApiResult};
use crate::session::{Event, Session};

#[derive(Debug, Clone)]
pub struct Store {
    dir: Option<PathBuf>,
}

impl Store {
    /// Keeps nothing on disk; sessions die with the process.
    pub fn memory() -> Self {
        Store { dir: None }
    }

    pub fn open(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("sessions"))?;
        fs::create_dir_all(dir.join("graphs"))?;
        Ok(Store { dir: Some(dir) })
    }

    fn session_log(dir: &Path, id: &str) -> PathBuf {
        dir.join("sessions").join(format!("{id}.jsonl"))
    }

    /// Appends one event and syncs it before returning.
    pub fn append(&self, id: &str, event: &Event) -> ApiResult<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut line = serde_json::to_string(event).map_err(|e| ApiError::internal(e.to_string()))?;
        line.push('\n');
        let mut file = OpenOptions::new().create(true).append(true).open(Self::session_log(dir, id))?;
        file.write_all(line.as_bytes())?;
        file.sync_data()?;
        Ok(())
    }

    pub fn read_log(&self, id: &str) -> ApiResult<Vec<Event>> {
        let Some(dir) = &self.dir else { return Ok(Vec::new()) };
        parse_log(&fs::read_to_string(Self::session_log(dir, id))?)
    }

    /// Replays every stored session log.
    pub fn load_sessions(&self) -> ApiResult<Vec<Session>> {
        let Some(dir) = &self.dir else { return Ok(Vec::new()) };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir.join("sessions"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        paths
            .iter()
            .map(|p| {
                let events = parse_log(&fs::read_to_string(p)?)?;
                Session::replay(events).map_err(|e| ApiError::internal(format!("replaying {}: {e}", p.display())))
            })
            .collect()
    }

    pub fn save_graph(&self, id: &str, graph: &ExchangeGraph) -> ApiResult<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        graph.save(dir.join("graphs").join(format!("{id}.json")))?;
        Ok(())
    }

    pub fn load_graphs(&self) -> ApiResult<BTreeMap<String, ExchangeGraph>> {
        let Some(dir) = &self.dir else { return Ok(BTreeMap::new()) };
        let mut graphs = BTreeMap::new();
        for entry in fs::read_dir(dir.join("graphs"))? {
            let path = entry?.path();
            if path.extension().is_some_and(|x| x == "json") {
                let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                graphs.insert(id, ExchangeGraph::load(&path)?);
            }
        }
        Ok(graphs)
    }
}

/// A torn final line (crash mid-append) is dropped; anything else that
/// does not parse is an error.
fn parse_log(text: &str) -> ApiResult<Vec<Event>> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut events = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(event) => events.push(event),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => break,
            Err(e) => return Err(ApiError::internal(format!("corrupt session log at line {}: {e}", i + 1))),
        }
    }
    Ok(events)
}
