use std::fs::{File, OpenOptions};
use std::path::Path;

use crate::error::{Error, Result};

/// Advisory exclusive lock on a directory, held through a lock file. The
/// lock is released when the guard is dropped or the process exits.
pub(crate) struct DirLock {
    _file: File,
}

impl DirLock {
    pub(crate) fn acquire(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(path)?;
        #[cfg(unix)]
        {
            use std::os::unix::io::AsRawFd;
            let rc = unsafe { libc::flock(file.as_raw_fd(), libc::LOCK_EX | libc::LOCK_NB) };
            if rc != 0 {
                return Err(Error::RegistryLocked);
            }
        }
        Ok(DirLock { _file: file })
    }
}
