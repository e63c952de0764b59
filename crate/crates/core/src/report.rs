//! Serialization helpers shared by the library and the CLI: floats are
//! written with 17 significant digits so parsing reproduces them exactly.

use std::io;

use serde::Serialize;

use crate::error::Result;

/// Formats a float with 17 significant digits (round-trip exact).
/// Non-finite values serialize as literal `NaN` / `inf` / `-inf`.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        }
    } else {
        format!("{x:.16e}")
    }
}

struct Fmt17;

impl serde_json::ser::Formatter for Fmt17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.write_f64(writer, f64::from(value))
    }
}

/// Serializes a value to pretty-ish JSON with 17-significant-digit floats.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Fmt17);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits utf-8"))
}

/// Writes a CSV table; every float cell goes through [`format_f64`].
pub fn write_csv_table(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| format_f64(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
