//! CSV and text artifacts: `#` provenance lines, a header row, LF endings,
//! numbers with 12 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::CliError;

/// Format like C's `%.12g`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        return format!("{}e{}", trim_zeros(mantissa), exp);
    }
    let decimals = (11 - exp) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub struct Artifact {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Artifact {
    /// Create `dir/name` and write the provenance block.
    pub fn create(
        dir: &Path,
        name: &str,
        command: &str,
        config: &RunConfig,
    ) -> Result<Self, CliError> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        let mut artifact = Self {
            path,
            out: BufWriter::new(file),
        };
        artifact.comment(&format!(
            "aoi-pricing {} {command}",
            env!("CARGO_PKG_VERSION")
        ))?;
        for (key, value) in config.entries() {
            artifact.comment(&format!("{key} = {value}"))?;
        }
        Ok(artifact)
    }

    pub fn comment(&mut self, text: &str) -> Result<(), CliError> {
        self.line(&format!("# {text}"))
    }

    pub fn line(&mut self, text: &str) -> Result<(), CliError> {
        let path = &self.path;
        self.out
            .write_all(text.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) -> Result<(), CliError> {
        let joined = cells
            .iter()
            .map(|c| c.as_ref())
            .collect::<Vec<_>>()
            .join(",");
        self.line(&joined)
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.out.flush().map_err(|source| CliError::Io {
            path: self.path.clone(),
            source,
        })?;
        Ok(self.path)
    }
}
