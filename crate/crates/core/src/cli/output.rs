use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, SCHEMA_VERSION};

/// A file to be written into the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// Shortest round-trip form; scientific notation outside `[1e-4, 1e15)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn header(config: &ExperimentConfig) -> String {
    format!(
        "# qpwalk schema_version={} config_sha256={} seed={} config={}",
        SCHEMA_VERSION,
        config.hash(),
        config.seed,
        config.to_json()
    )
}

pub fn csv(
    config: &ExperimentConfig,
    name: &str,
    columns: &[&str],
    rows: Vec<Vec<String>>,
) -> Artifact {
    let mut out = header(config);
    out.push('\n');
    out.push_str(&columns.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Artifact {
        name: name.to_string(),
        contents: out,
    }
}

pub fn json(config: &ExperimentConfig, name: &str, result: serde_json::Value) -> Artifact {
    let doc = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "config_sha256": config.hash(),
        "seed": config.seed,
        "config": config,
        "result": result,
    });
    let mut contents = serde_json::to_string_pretty(&doc).expect("json serializes");
    contents.push('\n');
    Artifact {
        name: name.to_string(),
        contents,
    }
}

/// Writes every artifact to a temporary file first and renames only once
/// all of them are on disk.
pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut staged = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let tmp = dir.join(format!(".{}.{}.tmp", a.name, std::process::id()));
        let result = fs::File::create(&tmp).and_then(|mut f| {
            f.write_all(a.contents.as_bytes())?;
            f.sync_all()
        });
        if let Err(e) = result {
            let _ = fs::remove_file(&tmp);
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(e);
        }
        staged.push((tmp, dir.join(&a.name)));
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, dest) in staged {
        fs::rename(&tmp, &dest)?;
        written.push(dest);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for v in [0.0, 1.0, -0.5, 1e-20, 123456.789, 6.02e23, 5e-324] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(0.25), "0.25");
        assert_eq!(num(1e-20), "1e-20");
    }
}
