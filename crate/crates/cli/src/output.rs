//! Input loading, atomic output writes and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Component, Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliResult, Failure, Kind};

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::bad_args(format!("cannot read {}: {e}", path.display())))
}

/// One JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Failure::parse(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("record serializes");
        out.push(b'\n');
    }
    out
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("value serializes");
    out.push(b'\n');
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write through a temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// `path` relative to `base`; both must exist.
fn relative_to(path: &Path, base: &Path) -> std::io::Result<PathBuf> {
    let path = fs::canonicalize(path)?;
    let base = fs::canonicalize(base)?;
    let p: Vec<Component> = path.components().collect();
    let b: Vec<Component> = base.components().collect();
    let common = p.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let mut rel = PathBuf::new();
    for _ in common..b.len() {
        rel.push("..");
    }
    for c in &p[common..] {
        rel.push(c.as_os_str());
    }
    Ok(rel)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub params: Map<String, Value>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

/// Everything a command produced, held in memory until it succeeded.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub params: Map<String, Value>,
    pub inputs: Vec<PathBuf>,
    pub files: Vec<(String, Vec<u8>)>,
    pub stdout: String,
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(Kind::Io, "IoError", anyhow::anyhow!("{}: {e}", path.display()))
}

/// Write all output files, then the manifest describing them.
pub fn write_run(out_dir: &Path, command: &str, seed: u64, run: &RunOutput) -> CliResult<Manifest> {
    fs::create_dir_all(out_dir).map_err(|e| io_failure(out_dir, e))?;
    let mut outputs = Vec::new();
    for (name, bytes) in &run.files {
        let path = out_dir.join(name);
        atomic_write(&path, bytes).map_err(|e| io_failure(&path, e))?;
        outputs.push(FileHash {
            path: name.clone(),
            sha256: sha256_hex(bytes),
        });
    }
    let mut inputs = Vec::new();
    for input in &run.inputs {
        let bytes = fs::read(input).map_err(|e| io_failure(input, e))?;
        let rel = relative_to(input, out_dir).map_err(|e| io_failure(input, e))?;
        inputs.push(FileHash {
            path: rel.to_string_lossy().into_owned(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        params: run.params.clone(),
        inputs,
        outputs,
    };
    let path = out_dir.join(MANIFEST_NAME);
    atomic_write(&path, &to_pretty_json(&manifest)).map_err(|e| io_failure(&path, e))?;
    Ok(manifest)
}

/// Re-hash every file a manifest names. Returns the number checked.
pub fn verify_manifest(manifest_path: &Path) -> CliResult<usize> {
    let text = read_text(manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Failure::parse(format!("{}: {e}", manifest_path.display())))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut problems = Vec::new();
    let entries = manifest.inputs.iter().chain(&manifest.outputs);
    let mut checked = 0;
    for entry in entries {
        checked += 1;
        match fs::read(dir.join(&entry.path)) {
            Ok(bytes) if sha256_hex(&bytes) == entry.sha256 => {}
            Ok(_) => problems.push(format!("{}: hash mismatch", entry.path)),
            Err(e) => problems.push(format!("{}: missing ({e})", entry.path)),
        }
    }
    if problems.is_empty() {
        Ok(checked)
    } else {
        Err(Failure::new(Kind::Verify, "VerifyMismatch", anyhow::anyhow!("{}", problems.join("; "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_reference() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn relative_paths() {
        let root = tempfile::tempdir().unwrap();
        let a = root.path().join("in");
        let b = root.path().join("out/run");
        fs::create_dir_all(&a).unwrap();
        fs::create_dir_all(&b).unwrap();
        fs::write(a.join("x.jsonl"), "").unwrap();
        assert_eq!(relative_to(&a.join("x.jsonl"), &b).unwrap(), PathBuf::from("../../in/x.jsonl"));
    }

    #[test]
    fn write_then_verify() {
        let root = tempfile::tempdir().unwrap();
        let input = root.path().join("input.txt");
        fs::write(&input, "data").unwrap();
        let out = root.path().join("out");
        let run = RunOutput {
            inputs: vec![input.clone()],
            files: vec![("a.txt".into(), b"hello".to_vec())],
            ..Default::default()
        };
        let m = write_run(&out, "demo", 3, &run).unwrap();
        assert_eq!(m.inputs[0].path, "../input.txt");
        assert_eq!(verify_manifest(&out.join(MANIFEST_NAME)).unwrap(), 2);

        fs::write(out.join("a.txt"), "tampered").unwrap();
        let err = verify_manifest(&out.join(MANIFEST_NAME)).unwrap_err();
        assert_eq!(err.kind, Kind::Verify);
        assert!(format!("{}", err.error).contains("a.txt"));

        fs::remove_file(&input).unwrap();
        let err = verify_manifest(&out.join(MANIFEST_NAME)).unwrap_err();
        assert!(format!("{}", err.error).contains("input.txt: missing"));
    }

    #[test]
    fn read_jsonl_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        fs::write(&p, "{\"a\":1}\n\nnot json\n").unwrap();
        let err = read_jsonl::<Value>(&p).unwrap_err();
        assert_eq!(err.kind, Kind::Parse);
        assert!(format!("{}", err.error).contains(":3:"));
        assert_eq!(read_jsonl::<Value>(&dir.path().join("nope")).unwrap_err().kind, Kind::BadArgs);
    }
}
