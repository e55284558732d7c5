//! On-disk forms of a code: the JSON result file and alist export/import.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::code::{CodeDimensions, ParityCheckMatrix};
use crate::error::{Error, Result};
use crate::gf2::BitMatrix;

/// Provenance carried alongside a learned or sampled code.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CodeMetadata {
    pub alpha: Option<f64>,
    pub n_errors: Option<usize>,
    #[serde(rename = "threshold_T")]
    pub threshold_t: Option<u32>,
    pub init_density: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub update_count: Option<u64>,
    pub optimizer: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodeFile {
    n: usize,
    k: usize,
    w: Vec<String>,
    #[serde(default)]
    metadata: CodeMetadata,
}

/// Serializes `h` as a JSON result file. `W` rows are bit strings, row-major.
pub fn to_json(h: &ParityCheckMatrix, metadata: &CodeMetadata) -> String {
    let dims = h.dims();
    let w = (0..dims.checks())
        .map(|r| {
            (0..dims.k)
                .map(|c| if h.w_bit(r, c) { '1' } else { '0' })
                .collect()
        })
        .collect();
    let file = CodeFile {
        n: dims.n,
        k: dims.k,
        w,
        metadata: metadata.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("code file is always serializable");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<(ParityCheckMatrix, CodeMetadata)> {
    if text.trim().is_empty() {
        return Err(Error::parse("line 1", "empty code file"));
    }
    let file: CodeFile = serde_json::from_str(text).map_err(|e| {
        Error::parse(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let dims = CodeDimensions::new(file.n, file.k)
        .map_err(|e| Error::parse("field n/k", e.to_string()))?;
    if file.w.len() != dims.checks() {
        return Err(Error::parse(
            "field w",
            format!("expected {} rows, found {}", dims.checks(), file.w.len()),
        ));
    }
    let mut w = BitMatrix::zeros(dims.checks(), dims.k);
    for (r, row) in file.w.iter().enumerate() {
        if row.len() != dims.k {
            return Err(Error::parse(
                format!("field w[{r}]"),
                format!("expected {} bits, found {}", dims.k, row.len()),
            ));
        }
        for (c, ch) in row.chars().enumerate() {
            match ch {
                '0' => {}
                '1' => w.set(r, c, true),
                other => {
                    return Err(Error::parse(
                        format!("field w[{r}]"),
                        format!("invalid bit character {other:?} at position {c}"),
                    ))
                }
            }
        }
    }
    Ok((ParityCheckMatrix::from_w(dims, w)?, file.metadata))
}

/// Exports the full `H = [W | I]` in alist format.
pub fn to_alist(h: &ParityCheckMatrix) -> String {
    let dims = h.dims();
    let (n, m) = (dims.n, dims.checks());
    let cols: Vec<Vec<usize>> = (0..n)
        .map(|v| (0..m).filter(|&c| h.h(c, v)).collect())
        .collect();
    let rows: Vec<Vec<usize>> = (0..m)
        .map(|c| (0..n).filter(|&v| h.h(c, v)).collect())
        .collect();
    let max_col = cols.iter().map(Vec::len).max().unwrap_or(0);
    let max_row = rows.iter().map(Vec::len).max().unwrap_or(0);

    let mut out = String::new();
    let join = |xs: &mut dyn Iterator<Item = usize>| {
        xs.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
    };
    let _ = writeln!(out, "{n} {m}");
    let _ = writeln!(out, "{max_col} {max_row}");
    let _ = writeln!(out, "{}", join(&mut cols.iter().map(Vec::len)));
    let _ = writeln!(out, "{}", join(&mut rows.iter().map(Vec::len)));
    for list in &cols {
        let padded = list.iter().map(|&c| c + 1).chain(std::iter::repeat(0));
        let _ = writeln!(out, "{}", join(&mut padded.take(max_col)));
    }
    for list in &rows {
        let padded = list.iter().map(|&v| v + 1).chain(std::iter::repeat(0));
        let _ = writeln!(out, "{}", join(&mut padded.take(max_row)));
    }
    out
}

/// Parses an alist file into a dense full `H` (checks x variables).
pub fn parse_alist(text: &str) -> Result<BitMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let mut next_nums = |what: &str| -> Result<(usize, Vec<usize>)> {
        let (no, line) = lines
            .next()
            .ok_or_else(|| Error::parse("end of file", format!("missing {what}")))?;
        let nums = line
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::parse(format!("line {no}"), format!("bad integer {t:?} in {what}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((no, nums))
    };

    let (no, header) = next_nums("header")?;
    let [n, m] = header[..] else {
        return Err(Error::parse(format!("line {no}"), "expected \"n m\""));
    };
    let (no, maxes) = next_nums("max degrees")?;
    let [max_col, max_row] = maxes[..] else {
        return Err(Error::parse(format!("line {no}"), "expected max column/row degree"));
    };
    let (no, col_deg) = next_nums("column degrees")?;
    if col_deg.len() != n {
        return Err(Error::parse(format!("line {no}"), format!("expected {n} column degrees")));
    }
    let (no, row_deg) = next_nums("row degrees")?;
    if row_deg.len() != m {
        return Err(Error::parse(format!("line {no}"), format!("expected {m} row degrees")));
    }

    let mut h = BitMatrix::zeros(m, n);
    for (v, &deg) in col_deg.iter().enumerate() {
        let (no, list) = next_nums("column index list")?;
        if list.len() != max_col || deg > max_col {
            return Err(Error::parse(format!("line {no}"), format!("expected {max_col} entries")));
        }
        for (i, &c) in list.iter().enumerate() {
            let in_range = (1..=m).contains(&c);
            if (i < deg && !in_range) || (i >= deg && c != 0) {
                return Err(Error::parse(format!("line {no}"), format!("bad check index {c}")));
            }
            if i < deg {
                h.set(c - 1, v, true);
            }
        }
    }
    for (c, &deg) in row_deg.iter().enumerate() {
        let (no, list) = next_nums("row index list")?;
        if list.len() != max_row || deg > max_row {
            return Err(Error::parse(format!("line {no}"), format!("expected {max_row} entries")));
        }
        for (i, &v) in list.iter().enumerate() {
            let in_range = (1..=n).contains(&v);
            if (i < deg && !in_range) || (i >= deg && v != 0) {
                return Err(Error::parse(format!("line {no}"), format!("bad variable index {v}")));
            }
            if i < deg && !h.get(c, v - 1) {
                return Err(Error::parse(
                    format!("line {no}"),
                    format!("row list entry ({}, {v}) missing from column lists", c + 1),
                ));
            }
        }
        if h.row_weight(c) != deg {
            return Err(Error::parse(format!("line {no}"), "row degree disagrees with column lists"));
        }
    }
    Ok(h)
}

/// Reads an alist whose `H` is in standard form `[W | I]`.
pub fn from_alist(text: &str) -> Result<ParityCheckMatrix> {
    let h = parse_alist(text)?;
    let (m, n) = (h.rows(), h.cols());
    if m == 0 || m >= n {
        return Err(Error::parse("line 1", format!("n={n}, m={m} is not a valid code shape")));
    }
    let dims = CodeDimensions::new(n, n - m)?;
    let k = dims.k;
    let mut w = BitMatrix::zeros(m, k);
    for c in 0..m {
        for v in 0..n {
            let bit = h.get(c, v);
            if v < k {
                w.set(c, v, bit);
            } else if bit != (v - k == c) {
                return Err(Error::parse(
                    "matrix",
                    "parity-check matrix is not in standard form [W | I]",
                ));
            }
        }
    }
    ParityCheckMatrix::from_w(dims, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::tests::hamming74;
    use crate::code::{sample_w, DensitySpec};

    #[test]
    fn json_round_trip_with_metadata() {
        let h = hamming74();
        let meta = CodeMetadata {
            alpha: Some(2.5),
            n_errors: Some(2),
            threshold_t: Some(30),
            init_density: Some(0.45),
            batch_size: Some(8),
            seed: Some(7),
            update_count: Some(71),
            optimizer: Some("mb_gqla_update_matrix".into()),
        };
        let text = to_json(&h, &meta);
        assert!(text.contains("\"threshold_T\": 30"));
        assert!(text.contains("\"1101\""));
        let (back, meta_back) = from_json(&text).unwrap();
        assert_eq!(back, h);
        assert_eq!(meta_back, meta);
    }

    #[test]
    fn json_round_trip_many_random_codes() {
        for seed in 0..1000u64 {
            let n = 2 + (seed as usize * 7) % 70;
            let k = 1 + (seed as usize * 13) % (n - 1);
            let dims = CodeDimensions::new(n, k).unwrap();
            let p = (seed % 11) as f64 / 10.0;
            let h = sample_w(dims, DensitySpec::new(p).unwrap(), seed);
            let (back, _) = from_json(&to_json(&h, &CodeMetadata::default())).unwrap();
            assert_eq!(back, h, "seed {seed}");
            assert_eq!(from_alist(&to_alist(&h)).unwrap(), h, "seed {seed}");
        }
    }

    #[test]
    fn json_errors_name_location() {
        let err = from_json("").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));

        let err = from_json("{\"n\": 7,\n \"k\": 4,\n \"w\": [\"1101\", \"101\", \"0111\"]}").unwrap_err();
        assert!(err.to_string().contains("w[1]"), "{err}");

        let err = from_json("{\"n\": 7,\n \"k\": 4,\n \"w\": [\"1101\", \"1021\", \"0111\"]}").unwrap_err();
        assert!(err.to_string().contains("w[1]"), "{err}");

        let err = from_json("{\"n\": 7,\n \"k\": \"four\"}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");

        let err = from_json("{\"n\": 4, \"k\": 4, \"w\": []}").unwrap_err();
        assert!(err.to_string().contains("n/k"), "{err}");
    }

    #[test]
    fn hamming_alist_weights() {
        let text = to_alist(&hamming74());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "7 3");
        assert_eq!(lines[1], "3 4");
        assert_eq!(lines[2], "2 2 2 3 1 1 1");
        assert_eq!(lines[3], "4 4 4");
        // column 0 touches checks 1 and 2, padded to the max column degree
        assert_eq!(lines[4], "1 2 0");
        assert_eq!(lines[7], "1 2 3");
        assert_eq!(lines[8], "1 0 0");
        assert_eq!(lines[11], "1 2 4 5");
        assert_eq!(lines.len(), 4 + 7 + 3);
    }

    #[test]
    fn alist_errors() {
        assert!(parse_alist("").is_err());
        let err = parse_alist("7 3\n3 x\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_alist("2 1\n1 2\n1 1\n2\n1\n1\n1 3\n").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
        // valid alist, but not standard form
        let not_std = "3 1\n1 2\n1 1 0\n2\n1\n1\n0\n1 2\n";
        assert!(parse_alist(not_std).is_ok());
        assert!(from_alist(not_std).is_err());
    }
}
