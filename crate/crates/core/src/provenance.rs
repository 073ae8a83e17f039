use sha2::{Digest, Sha256};

/// Version stamped into every output file.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Lower-case hex SHA-256 of `bytes`.
pub fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
