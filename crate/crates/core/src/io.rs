//! Function files: `{"schema", "r", "N", "components": [{"values", "slopes"}]}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fnspace::{Grid, GridFn1, GridFnN};

pub const FUNCTION_SCHEMA: &str = "almostgraph-function/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentData {
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    pub r: f64,
    #[serde(rename = "N")]
    pub intervals: usize,
    pub components: Vec<ComponentData>,
}

impl FunctionFile {
    pub fn from_function(phi: &GridFnN) -> Self {
        let grid = phi.grid();
        FunctionFile {
            schema: Some(FUNCTION_SCHEMA.into()),
            r: grid.r(),
            intervals: grid.intervals(),
            components: phi
                .components()
                .iter()
                .map(|c| ComponentData {
                    values: c.values().to_vec(),
                    slopes: c.slopes().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_function(&self) -> Result<GridFnN> {
        if let Some(schema) = &self.schema {
            if schema != FUNCTION_SCHEMA {
                return Err(Error::Config(format!("unsupported function schema `{schema}`")));
            }
        }
        let grid = Grid::new(self.r, self.intervals)?;
        let components = self
            .components
            .iter()
            .map(|c| GridFn1::new(grid, c.values.clone(), c.slopes.clone()))
            .collect::<Result<_>>()?;
        GridFnN::new(components)
    }
}

pub fn function_to_json(phi: &GridFnN) -> String {
    serde_json::to_string_pretty(&FunctionFile::from_function(phi)).expect("plain data serializes")
}

pub fn function_from_json(text: &str) -> Result<GridFnN> {
    serde_json::from_str::<FunctionFile>(text)?.to_function()
}

pub fn read_function(path: &Path) -> Result<GridFnN> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    function_from_json(&text)
}

pub fn write_function(path: &Path, phi: &GridFnN) -> Result<()> {
    fs::write(path, function_to_json(phi) + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
