use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Hex SHA-256 of the canonical (key-sorted, compact) JSON of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let v = serde_json::to_value(config).expect("config serializes to JSON");
    let text = serde_json::to_string(&v).expect("JSON value serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Provenance block attached to every JSON output. Contains no timestamps or
/// host details, so reruns are byte-identical.
pub fn provenance<T: Serialize>(verb: &str, config: &T, seeds: Value) -> Value {
    json!({
        "tool": "voxelenc",
        "version": env!("CARGO_PKG_VERSION"),
        "verb": verb,
        "config_sha256": config_hash(config),
        "seeds": seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"b":1,"a":[1,2]}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"a":[1,2],"b":1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&json!({"a":[2,1],"b":1})));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
