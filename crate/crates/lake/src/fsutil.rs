//! Small durable-write helpers.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to a sibling temp file, syncs it, then renames it over
/// `path`. Readers see either the old file or the complete new one.
pub fn write_atomic(path: &Path, bytes: &[u8], sync: bool) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(
        ".{name}.{}.{}.tmp",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        if sync {
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        if sync {
            sync_dir(dir)?;
        }
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

#[cfg(unix)]
pub fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}

#[cfg(not(unix))]
pub fn sync_dir(_dir: &Path) -> io::Result<()> {
    Ok(())
}

/// Opens an append-only line log, dropping a torn final line left by a
/// crash mid-append. Returns the file and its complete lines.
pub fn open_log(path: &Path) -> io::Result<(File, Vec<String>)> {
    let content = match fs::read(path) {
        Ok(c) => c,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e),
    };
    let good_len = content.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let file = OpenOptions::new().create(true).read(true).append(true).open(path)?;
    if good_len != content.len() {
        file.set_len(good_len as u64)?;
        file.sync_all()?;
    }
    let text = String::from_utf8_lossy(&content[..good_len]);
    Ok((file, text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect()))
}

/// Appends one line; on failure the file is cut back to `prev_len` so no
/// partial row survives.
pub fn append_line(file: &mut File, prev_len: u64, line: &str, sync: bool) -> io::Result<u64> {
    let mut buf = Vec::with_capacity(line.len() + 1);
    buf.extend_from_slice(line.as_bytes());
    buf.push(b'\n');
    let result = file.write_all(&buf).and_then(|_| if sync { file.sync_data() } else { Ok(()) });
    match result {
        Ok(()) => Ok(prev_len + buf.len() as u64),
        Err(e) => {
            let _ = file.set_len(prev_len);
            Err(e)
        }
    }
}
