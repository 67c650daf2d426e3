//! Corpus downloads with SHA-256 sidecars.
//!
//! A downloaded file `F` gets a sidecar `F.sha256` holding its hex digest.
//! A later fetch skips the download when the file still matches its
//! sidecar. An expected digest, when given, must match the download.

use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{self, Error, Result};

pub const BABI_URL: &str = "http://www.thespermwhale.com/jaseweston/babi/tasks_1-20_v1-2.tar.gz";
/// The directory inside the bAbI archive with the 9,000/1,000 split.
pub const BABI_SPLIT_DIR: &str = "tasks_1-20_v1-2/en-valid-10k";
pub const SUDOKU17_URL: &str = "http://staffhome.ecm.uwa.edu.au/~00013890/sudoku17";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".sha256");
    PathBuf::from(name)
}

/// Whether `path` exists and matches its sidecar digest.
pub fn verify(path: &Path) -> Result<bool> {
    let (Ok(bytes), Ok(expected)) = (std::fs::read(path), std::fs::read_to_string(sidecar(path))) else {
        return Ok(false);
    };
    Ok(sha256_hex(&bytes) == expected.trim())
}

/// Downloads `url` to `dest` unless a verified copy is already there.
pub fn fetch(url: &str, dest: &Path, expected_sha256: Option<&str>) -> Result<PathBuf> {
    if verify(dest)? {
        let have = error::read_to_string(sidecar(dest))?;
        if expected_sha256.is_none_or(|e| e.eq_ignore_ascii_case(have.trim())) {
            return Ok(dest.to_path_buf());
        }
    }
    let response = ureq::get(url)
        .call()
        .map_err(|e| Error::runtime(format!("download {url}: {e}")))?;
    let mut bytes = Vec::new();
    response
        .into_reader()
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(dest, e))?;
    let digest = sha256_hex(&bytes);
    if let Some(e) = expected_sha256 {
        if !e.eq_ignore_ascii_case(&digest) {
            return Err(Error::runtime(format!("checksum mismatch for {url}: expected {e}, got {digest}")));
        }
    }
    if let Some(parent) = dest.parent() {
        error::create_dir_all(parent)?;
    }
    error::write(dest, &bytes)?;
    error::write(sidecar(dest), format!("{digest}\n"))?;
    Ok(dest.to_path_buf())
}

/// Extracts the files under `prefix` of a `.tar.gz` archive into `out`,
/// flattening the prefix away. Returns the extracted paths.
pub fn extract_tar_gz(archive: &Path, prefix: &str, out: &Path) -> Result<Vec<PathBuf>> {
    let file = std::fs::File::open(archive).map_err(|e| Error::io(archive, e))?;
    let mut tar = tar::Archive::new(flate2::read::GzDecoder::new(file));
    error::create_dir_all(out)?;
    let mut written = Vec::new();
    let entries = tar.entries().map_err(|e| Error::io(archive, e))?;
    for entry in entries {
        let mut entry = entry.map_err(|e| Error::io(archive, e))?;
        let path = entry.path().map_err(|e| Error::io(archive, e))?.into_owned();
        let Ok(rest) = path.strip_prefix(prefix) else {
            continue;
        };
        if rest.as_os_str().is_empty() || !entry.header().entry_type().is_file() {
            continue;
        }
        let target = out.join(rest);
        if let Some(parent) = target.parent() {
            error::create_dir_all(parent)?;
        }
        entry.unpack(&target).map_err(|e| Error::io(&target, e))?;
        written.push(target);
    }
    written.sort();
    Ok(written)
}

/// Downloads the bAbI archive into `out` and unpacks the 10k split with
/// validation files next to it.
pub fn fetch_babi(out: &Path, expected_sha256: Option<&str>) -> Result<Vec<PathBuf>> {
    let archive = fetch(BABI_URL, &out.join("tasks_1-20_v1-2.tar.gz"), expected_sha256)?;
    let files = extract_tar_gz(&archive, BABI_SPLIT_DIR, &out.join("en-valid-10k"))?;
    if files.is_empty() {
        return Err(Error::runtime(format!("{} holds no {BABI_SPLIT_DIR} files", archive.display())));
    }
    Ok(files)
}
