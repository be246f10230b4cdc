//! Run manifests: every effective parameter of a run, enough to replay it.
//!
//! Schema (TOML):
//! - `tool`, `version`: producer
//! - `command`: subcommand name
//! - `seed`: master seed (0 for commands without randomness)
//! - `converged`: whether every solve reached its stopping rule
//! - `[args]`: the subcommand's arguments with defaults filled in
//! - `[effective]`: values resolved at run time (bandwidth, solver, sizes)

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

pub const FILE_NAME: &str = "manifest.toml";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest<A> {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub converged: bool,
    pub args: A,
    pub effective: toml::Table,
}

impl<A: Serialize> Manifest<A> {
    pub fn new(command: &str, seed: u64, converged: bool, args: A, effective: toml::Table) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            converged,
            args,
            effective,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), Failure> {
        let text = toml::to_string_pretty(self).map_err(|e| Failure::Data(format!("cannot encode manifest: {e}")))?;
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(FILE_NAME), text)?;
        Ok(())
    }
}

/// Command name and raw table of a manifest file.
pub fn read_raw(path: &Path) -> Result<(String, toml::Table), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Data(format!("cannot read manifest {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Failure::Data(format!("malformed manifest {}: {e}", path.display())))?;
    let command = table
        .get("command")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Failure::Data(format!("manifest {} has no command", path.display())))?
        .to_string();
    Ok((command, table))
}

pub fn args_from<A: DeserializeOwned>(table: &toml::Table) -> Result<A, Failure> {
    table
        .get("args")
        .cloned()
        .ok_or_else(|| Failure::Data("manifest has no [args] table".into()))?
        .try_into()
        .map_err(|e| Failure::Data(format!("manifest arguments do not match the command: {e}")))
}

/// Converts a serializable value into a TOML table entry set.
pub fn table<T: Serialize>(value: &T) -> toml::Table {
    toml::Table::try_from(value).expect("effective parameters serialize to a table")
}
