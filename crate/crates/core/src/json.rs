//! JSON output with 17 significant digits for every float.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, Serializer};

/// Writes floats as `d.dddddddddddddddde±x` (17 significant digits).
///
/// Non-finite values become `null`, as with the default formatter.
#[derive(Debug, Default, Clone, Copy)]
pub struct Sci17Formatter;

impl Formatter for Sci17Formatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            CompactFormatter.write_null(writer)
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_writer<W: Write, T: Serialize + ?Sized>(writer: W, value: &T) -> serde_json::Result<()> {
    let mut ser = Serializer::with_formatter(writer, Sci17Formatter);
    value.serialize(&mut ser)
}

pub fn to_vec<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut out = Vec::new();
    to_writer(&mut out, value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn to_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    // The formatter only ever emits ASCII.
    Ok(String::from_utf8(to_vec(value)?).expect("ascii json"))
}

/// Formats a float with 17 significant digits, for CSV and text outputs.
pub fn fmt_f64(value: f64) -> String {
    format!("{value:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_with_17_digits() {
        let values: Vec<f64> = vec![0.1, -2.5e-300, 1.0 / 3.0, 6.02214076e23, 0.0];
        let text = to_string(&values).unwrap();
        assert!(text.contains("1.0000000000000001e-1"));
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        for (a, b) in values.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn integers_stay_integers() {
        let text = to_string(&vec![[0usize, 1, 2]]).unwrap();
        assert_eq!(text.trim(), "[[0,1,2]]");
    }
}
