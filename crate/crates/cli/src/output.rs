//! Artifact placement and atomic writes.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::commands::{Artifact, CliError};

/// Default output directory when `--out` is absent.
pub const OUT_DIR_ENV: &str = "HOPF_OUT_DIR";

/// Writes `bytes` to a temporary file beside `path`, then renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(tmp.path(), e))?;
    // temp files are created owner-only; artifacts are ordinary files
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let perms = std::fs::Permissions::from_mode(0o644);
        std::fs::set_permissions(tmp.path(), perms).map_err(|e| CliError::io(tmp.path(), e))?;
    }
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Where the artifacts go.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Destination {
    Stdout,
    File(PathBuf),
    Dir(PathBuf),
}

/// A single artifact goes to `--out`, else into `$HOPF_OUT_DIR`, else to
/// standard output. Several artifacts go into the directory `--out`, else
/// `$HOPF_OUT_DIR`, else the working directory.
pub fn destination(out: Option<&Path>, env_dir: Option<PathBuf>, count: usize) -> Destination {
    match (out, count) {
        (Some(p), 1) => Destination::File(p.to_path_buf()),
        (Some(p), _) => Destination::Dir(p.to_path_buf()),
        (None, 1) => env_dir.map_or(Destination::Stdout, Destination::Dir),
        (None, _) => Destination::Dir(env_dir.unwrap_or_else(|| PathBuf::from("."))),
    }
}

pub fn env_out_dir() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Writes every artifact and returns the paths written.
pub fn emit(artifacts: &[Artifact], dest: &Destination) -> Result<Vec<PathBuf>, CliError> {
    match dest {
        Destination::Stdout => {
            let mut out = std::io::stdout().lock();
            for a in artifacts {
                out.write_all(&a.bytes).map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
            }
            out.flush().map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
            Ok(Vec::new())
        }
        Destination::File(path) => {
            for a in artifacts {
                write_atomic(path, &a.bytes)?;
            }
            Ok(vec![path.clone()])
        }
        Destination::Dir(dir) => artifacts
            .iter()
            .map(|a| {
                let path = dir.join(&a.name);
                write_atomic(&path, &a.bytes).map(|_| path)
            })
            .collect(),
    }
}
