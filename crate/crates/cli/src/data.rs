//! `data fetch`, `data inspect` and `partition-report`.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flsim_core::data::idx::{parse_header, IMAGES_MAGIC, LABELS_MAGIC};
use flsim_core::data::mnist::CHECKSUMS;
use flsim_core::Dataset;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Public MNIST mirror serving the gzipped IDX files.
pub const DEFAULT_MIRROR: &str = "https://ossci-datasets.s3.amazonaws.com/mnist";

/// Largest file accepted from the network.
const MAX_DOWNLOAD: u64 = 64 << 20;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Transparently gunzips.
pub fn maybe_gunzip(bytes: Vec<u8>) -> Result<Vec<u8>, CliError> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&bytes[..]).read_to_end(&mut out).map_err(|e| CliError::Data(format!("gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

/// Reads `name` from an http(s) URL, a `file://` URL or a plain directory.
/// `Ok(None)` means the source has no such file.
fn read_source(source: &str, name: &str) -> Result<Option<Vec<u8>>, CliError> {
    if source.starts_with("http://") || source.starts_with("https://") {
        let url = format!("{}/{name}", source.trim_end_matches('/'));
        return match ureq::get(&url).call() {
            Ok(mut resp) => resp
                .body_mut()
                .with_config()
                .limit(MAX_DOWNLOAD)
                .read_to_vec()
                .map(Some)
                .map_err(|e| CliError::Data(format!("{url}: {e}"))),
            Err(ureq::Error::StatusCode(404)) => Ok(None),
            Err(e) => Err(CliError::Data(format!("{url}: {e}"))),
        };
    }
    let dir = PathBuf::from(source.strip_prefix("file://").unwrap_or(source));
    match fs::read(dir.join(name)) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(CliError::Data(format!("{}: {e}", dir.join(name).display()))),
    }
}

/// Downloads (or copies) the four MNIST files into `dest`, decompressing and
/// checking each against its pinned SHA-256. Files already present with the
/// right digest are kept. Returns the paths that were written.
pub fn fetch(source: &str, dest: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dest)?;
    let mut written = Vec::new();
    for (name, digest) in CHECKSUMS {
        let target = dest.join(name);
        if fs::read(&target).map(|b| sha256_hex(&b) == digest).unwrap_or(false) {
            log::info!("{name}: present");
            continue;
        }
        let gz = format!("{name}.gz");
        let raw = match read_source(source, &gz)? {
            Some(b) => b,
            None => read_source(source, name)?.ok_or_else(|| CliError::Data(format!("{source} has no {name}")))?,
        };
        let bytes = maybe_gunzip(raw)?;
        let got = sha256_hex(&bytes);
        if got != digest {
            return Err(CliError::Data(format!("{name}: sha256 {got}, expected {digest}")));
        }
        let tmp = dest.join(format!("{name}.part"));
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, &target)?;
        log::info!("{name}: {} bytes", bytes.len());
        written.push(target);
    }
    Ok(written)
}

/// One-line header summary of an IDX file, e.g.
/// `magic=2051 count=60000 rows=28 cols=28`. The payload length is checked too.
pub fn inspect(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let bytes = maybe_gunzip(bytes)?;
    let header = parse_header(&bytes).map_err(CliError::data)?;
    let body = bytes.len().saturating_sub(header.header_len());
    if body != header.payload_len() {
        return Err(CliError::Data(format!(
            "{}: header declares {} payload bytes, file has {body}",
            path.display(),
            header.payload_len()
        )));
    }
    let d = &header.dims;
    Ok(match header.magic {
        IMAGES_MAGIC => format!("magic={} count={} rows={} cols={}", header.magic, d[0], d[1], d[2]),
        LABELS_MAGIC => format!("magic={} count={}", header.magic, d[0]),
        m => {
            let dims: Vec<String> = d.iter().map(usize::to_string).collect();
            format!("magic={m} dims={}", dims.join("x"))
        }
    })
}

/// `client=<k> size=<n> distinct_labels=<d>` per client.
pub fn partition_report(parts: &[flsim_core::Partition], data: &Dataset) -> Vec<String> {
    parts
        .iter()
        .map(|p| format!("client={} size={} distinct_labels={}", p.client_id, p.len(), p.distinct_labels(data)))
        .collect()
}
