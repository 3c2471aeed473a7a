//! Git-style content hashes (`blob <len>\0<bytes>`) over SHA-256.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(blob_hash(&bytes))
}

/// Manifest with one `<hash>  <name>` line per input and a final line
/// hashing the sorted listing, like a tree object.
pub fn manifest(entries: &[(String, String)]) -> String {
    let mut sorted = entries.to_vec();
    sorted.sort_by(|a, b| a.1.cmp(&b.1));
    let mut body: String = sorted.iter().map(|(h, name)| format!("{h}  {name}\n")).collect();
    let tree = blob_hash(body.as_bytes());
    body.push_str(&format!("{tree}  *\n"));
    body
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_known_sha256() {
        // sha256 of "blob 0\0" and of "blob 5\0hello".
        let expected_empty = {
            let mut h = Sha256::new();
            h.update(b"blob 0\x00");
            hex(&h.finalize())
        };
        assert_eq!(blob_hash(b""), expected_empty);
        assert_eq!(hex(&Sha256::digest(b"abc"))[..16], *"ba7816bf8f01cfea");
        assert_ne!(blob_hash(b"hello"), hex(&Sha256::digest(b"hello")));
    }

    #[test]
    fn manifest_is_order_free() {
        let a = vec![("1".to_owned(), "x".to_owned()), ("2".to_owned(), "y".to_owned())];
        let b = vec![a[1].clone(), a[0].clone()];
        assert_eq!(manifest(&a), manifest(&b));
        assert!(manifest(&a).ends_with("  *\n"));
    }
}
