//! Output-path guards, checksum sidecars and `--verify`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const CHECKSUMS: &str = "checksums.json";

/// Refuses to touch an existing output unless `force`; with `force` an
/// existing directory is cleared so stale files cannot survive a rerun.
pub fn prepare_output(path: &Path, force: bool, dir: bool) -> Result<(), CliError> {
    if path.exists() {
        if !force {
            return Err(CliError::Usage(format!(
                "{} already exists; pass --force to overwrite",
                path.display()
            )));
        }
        if path.is_dir() {
            fs::remove_dir_all(path).map_err(|e| CliError::io(path, e))?;
        }
    }
    let parent = if dir { Some(path) } else { path.parent() };
    if let Some(p) = parent.filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).map_err(|e| CliError::io(p, e))?;
    }
    Ok(())
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).map_err(|e| CliError::io(p, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checksums {
    pub config_hash: String,
    /// Paths relative to the sidecar's directory.
    pub files: BTreeMap<String, String>,
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::io(dir, e))?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn rel(base: &Path, p: &Path) -> String {
    p.strip_prefix(base)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Writes `dir/checksums.json` covering every other file under `dir`.
pub fn write_dir_checksums(dir: &Path, config_hash: &str) -> Result<(), CliError> {
    let mut files = Vec::new();
    walk(dir, &mut files)?;
    let sidecar = dir.join(CHECKSUMS);
    let listed = files.iter().filter(|p| **p != sidecar).map(|p| p.as_path()).collect::<Vec<_>>();
    write_checksums(&sidecar, dir, &listed, config_hash)
}

pub fn write_checksums(sidecar: &Path, base: &Path, files: &[&Path], config_hash: &str) -> Result<(), CliError> {
    let mut map = BTreeMap::new();
    for f in files {
        map.insert(rel(base, f), sha256_file(f)?);
    }
    let doc = Checksums {
        config_hash: config_hash.into(),
        files: map,
    };
    let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
    write_file(sidecar, text)
}

fn json_hash(v: &serde_json::Value) -> Option<String> {
    v.get("config_hash")
        .or_else(|| v.get("metadata").and_then(|m| m.get("config_hash")))
        .and_then(|h| h.as_str())
        .map(str::to_owned)
}

/// Checks every artifact under `path` against `config_hash` and returns the
/// number of files checked.
///
/// JSON documents, dataset headers and SVG descriptions must carry the hash;
/// CSV files must be covered by a checksum sidecar whose digests still match.
pub fn verify(path: &Path, config_hash: &str) -> Result<usize, CliError> {
    if !path.exists() {
        return Err(CliError::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "nothing to verify")));
    }
    let mut files = Vec::new();
    if path.is_dir() {
        walk(path, &mut files)?;
    } else {
        files.push(path.to_path_buf());
        let sidecar = sidecar_for(path);
        if sidecar.exists() {
            files.push(sidecar);
        }
    }
    let fail = |p: &Path, why: String| CliError::Runtime(format!("verify {}: {why}", p.display()));
    let mut covered: BTreeMap<PathBuf, ()> = BTreeMap::new();
    for f in &files {
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if name == CHECKSUMS || name.ends_with(&format!(".{CHECKSUMS}")) {
            let text = fs::read_to_string(f).map_err(|e| CliError::io(f, e))?;
            let doc: Checksums = serde_json::from_str(&text).map_err(|e| fail(f, e.to_string()))?;
            if doc.config_hash != config_hash {
                return Err(fail(f, format!("config hash {} differs from {config_hash}", doc.config_hash)));
            }
            let base = f.parent().unwrap_or(Path::new("."));
            for (r, digest) in &doc.files {
                let p = base.join(r);
                if sha256_file(&p)? != *digest {
                    return Err(fail(&p, "contents changed since they were written".into()));
                }
                covered.insert(p, ());
            }
        }
    }
    for f in &files {
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let ext = f.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_default();
        let found = match ext.as_str() {
            "json" if !name.ends_with(CHECKSUMS) => {
                let text = fs::read_to_string(f).map_err(|e| CliError::io(f, e))?;
                let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| fail(f, e.to_string()))?;
                Some(json_hash(&v))
            }
            "jsonl" => {
                let mut first = String::new();
                BufReader::new(fs::File::open(f).map_err(|e| CliError::io(f, e))?)
                    .read_line(&mut first)
                    .map_err(|e| CliError::io(f, e))?;
                let v: serde_json::Value = serde_json::from_str(&first).map_err(|e| fail(f, e.to_string()))?;
                Some(json_hash(&v))
            }
            "svg" => {
                let text = fs::read_to_string(f).map_err(|e| CliError::io(f, e))?;
                Some(
                    text.split("<desc>config-hash ")
                        .nth(1)
                        .and_then(|s| s.split("</desc>").next())
                        .map(str::to_owned),
                )
            }
            _ => None,
        };
        match found {
            Some(Some(h)) if h == config_hash => {}
            Some(Some(h)) => return Err(fail(f, format!("config hash {h} differs from {config_hash}"))),
            Some(None) => return Err(fail(f, "no config hash recorded".into())),
            None if name.ends_with(CHECKSUMS) => {}
            None if !covered.contains_key(f) => return Err(fail(f, "not covered by a checksum sidecar".into())),
            None => {}
        }
    }
    Ok(files.len())
}

/// `model.json` -> `model.checksums.json`.
pub fn sidecar_for(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{CHECKSUMS}"))
}
