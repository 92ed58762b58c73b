//! Reading and writing the JSON file formats.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use netlearn::harness::instance::{InstanceFile, INSTANCE_FORMAT};
use netlearn::harness::{InstanceDescriptor, ParamOverrides};
use netlearn::network::{AbsNetwork, Dataset, NetworkFile, SamplesFile, NETWORK_FORMAT, SAMPLES_FORMAT};
use serde::{Deserialize, Serialize};

/// A parsed input file.
pub enum Input {
    Network { net: AbsNetwork, descriptor: Option<InstanceDescriptor> },
    Samples { train: Dataset, holdout: Dataset },
}

pub fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Dispatches on the `format` field.
pub fn read_input(path: &Path) -> Result<Input> {
    let value = read_json(path)?;
    let format = value.get("format").and_then(|f| f.as_str()).unwrap_or_default().to_string();
    let ctx = || format!("decoding {}", path.display());
    match format.as_str() {
        INSTANCE_FORMAT => {
            let file: InstanceFile = serde_json::from_value(value).with_context(ctx)?;
            let descriptor = file.descriptor.clone();
            Ok(Input::Network { net: file.into_network()?, descriptor: Some(descriptor) })
        }
        NETWORK_FORMAT => {
            let file: NetworkFile = serde_json::from_value(value).with_context(ctx)?;
            Ok(Input::Network { net: file.into_network()?, descriptor: None })
        }
        SAMPLES_FORMAT => {
            let file: SamplesFile = serde_json::from_value(value).with_context(ctx)?;
            let (train, holdout) = file.into_datasets()?;
            Ok(Input::Samples { train, holdout })
        }
        other => bail!("{}: unrecognized format {other:?}", path.display()),
    }
}

pub fn read_network(path: &Path) -> Result<AbsNetwork> {
    match read_input(path)? {
        Input::Network { net, .. } => Ok(net),
        Input::Samples { .. } => bail!("{}: expected a network or instance file", path.display()),
    }
}

pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => print_stdout(&text),
    }
}

/// Prints a line; a closed pipe (e.g. `| head`) is not an error.
pub fn print_stdout(text: &str) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

/// Contents of a `--params` file. Every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub epsilon: Option<f64>,
    pub k: Option<usize>,
    #[serde(rename = "R")]
    pub norm_bound: Option<f64>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    #[serde(default)]
    pub overrides: ParamOverrides,
}

pub fn read_params(path: Option<&Path>) -> Result<ParamsFile> {
    match path {
        None => Ok(ParamsFile::default()),
        Some(p) => serde_json::from_value(read_json(p)?).with_context(|| format!("decoding {}", p.display())),
    }
}
