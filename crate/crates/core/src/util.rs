use serde::Serializer;
use sha2::{Digest, Sha256};

/// Formats a float with 17 significant digits, enough to round-trip exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Serializes an `f64` as a JSON number with 17 significant digits.
pub fn serialize_sig17<S: Serializer>(x: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    use serde::ser::Error;
    use serde::Serialize;
    if !x.is_finite() {
        return Err(S::Error::custom("non-finite angle"));
    }
    let raw = serde_json::value::RawValue::from_string(fmt_f64(*x)).map_err(S::Error::custom)?;
    raw.serialize(serializer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [std::f64::consts::PI, 0.1, 1e-300, 12345.678901234567] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(0.25), "2.5000000000000000e-1");
    }
}
