//! `WCSMAT 1` text matrices.
//!
//! ```text
//! WCSMAT 1 complex 2 3
//! 1.0000000000000000e0+0.0000000000000000e0j ...
//! ...
//! # provenance {"source":"dft-rows",...}
//! ```
//!
//! Entries are written with 17 significant digits, so reading a written file
//! reproduces every entry bit for bit. Vectors are stored as `N × 1` matrices.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use wcs_core::construct::{Provenance, SenseMatrix, Source};
use wcs_core::linalg::{c, is_real};
use wcs_core::{CMatrix, C64};

const MAGIC: &str = "WCSMAT";
const VERSION: &str = "1";
const PROVENANCE_PREFIX: &str = "# provenance ";

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub matrix: CMatrix,
    pub provenance: Option<Provenance>,
    /// Trailer lines other than the provenance record, without the leading `#`.
    pub comments: Vec<String>,
}

impl MatrixFile {
    pub fn into_sense_matrix(self) -> Result<SenseMatrix> {
        let provenance = self.provenance.unwrap_or_else(|| Provenance::new(Source::ExplicitFile));
        Ok(SenseMatrix::new(self.matrix, provenance)?)
    }
}

fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_entry(z: C64, complex: bool) -> String {
    if !complex {
        return format_real(z.re);
    }
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{sign}{}j", format_real(z.re), format_real(z.im.abs()))
}

pub fn render(matrix: &CMatrix, provenance: Option<&Provenance>) -> String {
    let complex = !is_real(matrix);
    let (m, n) = matrix.shape();
    let mut out = String::new();
    let kind = if complex { "complex" } else { "real" };
    writeln!(out, "{MAGIC} {VERSION} {kind} {m} {n}").unwrap();
    for i in 0..m {
        let row: Vec<String> = (0..n).map(|j| format_entry(matrix[(i, j)], complex)).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    if let Some(p) = provenance {
        writeln!(out, "{PROVENANCE_PREFIX}{}", serde_json::to_string(p).expect("provenance serialises")).unwrap();
    }
    out
}

pub fn write(path: &Path, matrix: &CMatrix, provenance: Option<&Provenance>) -> Result<()> {
    fs::write(path, render(matrix, provenance)).with_context(|| format!("writing {}", path.display()))
}

pub fn write_vector(path: &Path, v: &[C64]) -> Result<()> {
    write(path, &CMatrix::from_column_slice(v.len(), 1, v), None)
}

pub fn read(path: &Path) -> Result<MatrixFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_vector(path: &Path) -> Result<Vec<C64>> {
    let f = read(path)?;
    if f.matrix.ncols() != 1 {
        bail!("{} holds a {}×{} matrix, expected a column vector", path.display(), f.matrix.nrows(), f.matrix.ncols());
    }
    Ok(f.matrix.iter().copied().collect())
}

fn parse_real(token: &str) -> Option<f64> {
    let v: f64 = token.parse().ok()?;
    v.is_finite().then_some(v)
}

/// Splits `a+bj` / `a-bj` at the sign that starts the imaginary part.
fn parse_complex(token: &str) -> Option<C64> {
    let body = token.strip_suffix('j')?;
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'))?;
    let re = parse_real(&body[..split])?;
    let im = parse_real(&body[split..])?;
    Some(c(re, im))
}

pub fn parse(text: &str) -> Result<MatrixFile> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| anyhow!("line 1: empty file, expected a WCSMAT header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (complex, m, n) = match fields.as_slice() {
        [MAGIC, VERSION, kind, m, n] => {
            let complex = match *kind {
                "real" => false,
                "complex" => true,
                other => bail!("line 1: unknown entry type {other:?}, expected real or complex"),
            };
            let m: usize = m.parse().map_err(|_| anyhow!("line 1: bad row count {m:?}"))?;
            let n: usize = n.parse().map_err(|_| anyhow!("line 1: bad column count {n:?}"))?;
            (complex, m, n)
        }
        [MAGIC, v, ..] if *v != VERSION => bail!("line 1: unsupported WCSMAT version {v:?}"),
        _ => bail!("line 1: malformed header {header:?}, expected \"WCSMAT 1 <real|complex> <m> <N>\""),
    };
    if m == 0 || n == 0 {
        bail!("line 1: matrix dimensions must be positive, got {m}×{n}");
    }
    let mut matrix = CMatrix::zeros(m, n);
    for i in 0..m {
        let (ln, line) = lines.next().ok_or_else(|| anyhow!("line {}: expected row {} of {m}, found end of file", i + 2, i + 1))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != n {
            bail!("line {}: expected {n} entries, found {}", ln + 1, tokens.len());
        }
        for (j, tok) in tokens.iter().enumerate() {
            let z = if complex { parse_complex(tok) } else { parse_real(tok).map(|v| c(v, 0.0)) };
            matrix[(i, j)] = z.ok_or_else(|| anyhow!("line {}: entry {} ({tok:?}) is not a valid {} number", ln + 1, j + 1, if complex { "complex" } else { "real" }))?;
        }
    }
    let mut provenance = None;
    let mut comments = Vec::new();
    for (ln, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(json) = trimmed.strip_prefix(PROVENANCE_PREFIX) {
            provenance = Some(serde_json::from_str(json).with_context(|| format!("line {}: bad provenance record", ln + 1))?);
        } else if let Some(rest) = trimmed.strip_prefix('#') {
            comments.push(rest.trim().to_string());
        } else {
            bail!("line {}: unexpected content after {m} rows; trailer lines must start with '#'", ln + 1);
        }
    }
    Ok(MatrixFile { matrix, provenance, comments })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_round_trip_is_bit_exact() {
        let vals = [c(0.1, -0.0), c(-1e-300, 2.5e10), c(std::f64::consts::PI, -std::f64::consts::E), c(0.0, 1e-7)];
        let m = CMatrix::from_row_slice(2, 2, &vals);
        let back = parse(&render(&m, None)).unwrap().matrix;
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.abs().to_bits(), b.im.abs().to_bits());
        }
    }

    #[test]
    fn real_files_use_plain_entries() {
        let m = CMatrix::from_row_slice(1, 3, &[c(1.0, 0.0), c(1.0, 0.0), c(-0.5, 0.0)]);
        let text = render(&m, None);
        assert!(text.starts_with("WCSMAT 1 real 1 3\n"));
        assert_eq!(parse(&text).unwrap().matrix, m);
    }

    #[test]
    fn provenance_trailer_survives() {
        let m = CMatrix::identity(2, 2);
        let p = Provenance { seed: Some(7), ..Provenance::new(Source::Identity) };
        let f = parse(&render(&m, Some(&p))).unwrap();
        assert_eq!(f.provenance, Some(p));
    }

    #[test]
    fn errors_name_the_line() {
        let err = parse("WCSMAT 2 real 1 1\n1\n").unwrap_err().to_string();
        assert!(err.starts_with("line 1"), "{err}");
        let err = parse("WCSMAT 1 real 2 2\n1 2\n3\n").unwrap_err().to_string();
        assert!(err.starts_with("line 3"), "{err}");
        let err = parse("WCSMAT 1 complex 1 1\n1+2i\n").unwrap_err().to_string();
        assert!(err.starts_with("line 2"), "{err}");
        let err = parse("WCSMAT 1 real 1 1\n1\nstray\n").unwrap_err().to_string();
        assert!(err.starts_with("line 3"), "{err}");
    }

    #[test]
    fn exponent_signs_are_not_split_points() {
        assert_eq!(parse_complex("1e-3-2E+4j"), Some(c(1e-3, -2e4)));
        assert_eq!(parse_complex("-1.5+0j"), Some(c(-1.5, 0.0)));
        assert_eq!(parse_complex("3"), None);
    }
}
