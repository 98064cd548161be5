//! One run per workspace, enforced with a lock file.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

use crate::PipelineError;

/// Locks older than this are considered abandoned even if the pid is alive
/// (it may have been reused).
pub const STALE_AFTER: Duration = Duration::from_secs(6 * 3600);

#[derive(Debug)]
pub struct WorkspaceLock {
    path: PathBuf,
}

fn holder_alive(pid: u32) -> bool {
    let proc_root = Path::new("/proc");
    if !proc_root.is_dir() {
        // no way to tell; assume alive and rely on the age limit
        return true;
    }
    proc_root.join(pid.to_string()).exists()
}

fn is_stale(path: &Path) -> bool {
    let Ok(text) = fs::read_to_string(path) else {
        return false;
    };
    let pid = text.lines().next().and_then(|l| l.trim().parse::<u32>().ok());
    let age = fs::metadata(path)
        .and_then(|m| m.modified())
        .ok()
        .and_then(|t| SystemTime::now().duration_since(t).ok())
        .unwrap_or_default();
    match pid {
        Some(pid) => !holder_alive(pid) || age > STALE_AFTER,
        None => age > STALE_AFTER,
    }
}

impl WorkspaceLock {
    pub fn acquire(path: &Path) -> Result<Self, PipelineError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(path) {
                Ok(mut f) => {
                    writeln!(f, "{}", std::process::id())?;
                    return Ok(Self { path: path.to_path_buf() });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    if is_stale(path) {
                        fs::remove_file(path)?;
                        continue;
                    }
                    let holder = fs::read_to_string(path).unwrap_or_default().trim().to_string();
                    return Err(PipelineError::WorkspaceLocked { path: path.to_path_buf(), holder });
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(PipelineError::WorkspaceLocked { path: path.to_path_buf(), holder: String::new() })
    }
}

impl Drop for WorkspaceLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_acquire_fails_until_released() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.lock");
        let lock = WorkspaceLock::acquire(&path).unwrap();
        assert!(matches!(WorkspaceLock::acquire(&path), Err(PipelineError::WorkspaceLocked { .. })));
        drop(lock);
        assert!(WorkspaceLock::acquire(&path).is_ok());
    }

    #[test]
    fn dead_holder_is_stale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.lock");
        // pid far above any default pid_max
        fs::write(&path, "4999999\n").unwrap();
        let _lock = WorkspaceLock::acquire(&path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().trim(), std::process::id().to_string());
    }
}
