//! CSV output for exponent tables.

use crate::error::Result;
use crate::lyapunov::LEEstimate;
use std::io::Write;

pub const LE_COLUMNS: [&str; 10] = ["E", "t", "lambda", "method", "n", "samples", "value", "stderr", "lower", "upper"];

/// Writes `# key: value` comment lines, then the table.
pub fn write_le_csv<W: Write>(mut out: W, comments: &[(&str, String)], rows: &[LEEstimate]) -> Result<()> {
    for (k, v) in comments {
        writeln!(out, "# {k}: {v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LE_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.params.energy().to_string(),
            r.params.t.to_string(),
            r.params.lambda.to_string(),
            r.method.as_str().to_string(),
            r.n.to_string(),
            r.samples.to_string(),
            r.value.to_string(),
            r.stderr.to_string(),
            r.lower().to_string(),
            r.upper().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Drops `#` comment lines, leaving the part that must be reproducible.
pub fn csv_body(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::CocycleParams;
    use crate::lyapunov::Method;

    #[test]
    fn header_and_row() {
        let row = LEEstimate {
            value: 1.5,
            method: Method::Birkhoff,
            n: 10,
            samples: 4,
            stderr: 0.25,
            params: CocycleParams::new(2.0, 0.5).unwrap(),
            potential: "affine".into(),
            limsup_surrogate: None,
        };
        let mut buf = Vec::new();
        write_le_csv(&mut buf, &[("config_sha256", "abc".into())], &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# config_sha256: abc\nE,t,lambda,method,n,samples,value,stderr,lower,upper\n1,0.5,2,birkhoff,10,4,1.5,0.25,0.75,2.25\n"
        );
        assert_eq!(csv_body(&text).lines().count(), 2);
    }
}
