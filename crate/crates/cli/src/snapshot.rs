//! Field snapshots: a text header followed by one hexadecimal float per
//! node, in the grid's lexicographic node order.

use std::fmt::Write as _;

use peaklab::Field64;
use thiserror::Error;

pub const MAGIC: &str = "PEAKLAB-FIELD v1";

#[derive(Debug, Error, PartialEq)]
pub enum SnapshotError {
    #[error("bad snapshot header: {0}")]
    Header(String),
    #[error("line {line}: cannot parse `{text}` as a hexadecimal float")]
    Value { line: usize, text: String },
    #[error("expected {expected} values, found {found}")]
    Count { expected: usize, found: usize },
}

/// `x` as `[-]0x1.hhhhhhhhhhhhhp[+-]e`, with every mantissa digit written.
pub fn format_hex(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    let sign = if x.is_sign_negative() { "-" } else { "" };
    if x.is_infinite() {
        return format!("{sign}inf");
    }
    let bits = x.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let mant = bits & ((1u64 << 52) - 1);
    if exp_bits == 0 && mant == 0 {
        return format!("{sign}0x0.0000000000000p+0");
    }
    let (lead, exp) = if exp_bits == 0 { (0, -1022) } else { (1, exp_bits - 1023) };
    format!("{sign}0x{lead}.{mant:013x}p{exp:+}")
}

/// Inverse of [`format_hex`]; also accepts shortened mantissas.
pub fn parse_hex(s: &str) -> Option<f64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let v = match body {
        "inf" => f64::INFINITY,
        "nan" => return Some(f64::NAN),
        _ => {
            let body = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X"))?;
            let (mantissa, exp) = body.split_once(['p', 'P'])?;
            let exp: i64 = exp.parse().ok()?;
            let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
            if int.is_empty() || int.len() > 1 || frac.len() > 13 {
                return None;
            }
            let lead = u64::from_str_radix(int, 16).ok()?;
            if lead > 1 {
                return None;
            }
            let frac_bits = if frac.is_empty() {
                0
            } else {
                u64::from_str_radix(frac, 16).ok()? << (4 * (13 - frac.len()))
            };
            if lead == 0 {
                if frac_bits == 0 {
                    0.0
                } else if exp == -1022 {
                    f64::from_bits(frac_bits)
                } else {
                    return None;
                }
            } else {
                if !(-1022..=1023).contains(&exp) {
                    return None;
                }
                f64::from_bits((((exp + 1023) as u64) << 52) | frac_bits)
            }
        }
    };
    Some(if neg { -v } else { v })
}

/// Header fields of a snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotHeader {
    pub name: String,
    pub dim: usize,
    pub domain: String,
    pub h: f64,
    pub nodes: usize,
}

pub fn write_snapshot(name: &str, field: &Field64) -> String {
    let grid = field.grid();
    let mut out = String::with_capacity(24 * (field.len() + 8));
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "name {name}");
    let _ = writeln!(out, "N {}", grid.dim());
    let _ = writeln!(out, "domain {}", grid.domain().label());
    let _ = writeln!(out, "h {}", format_hex(grid.h()));
    let _ = writeln!(out, "nodes {}", grid.len());
    let _ = writeln!(out, "order lexicographic");
    let _ = writeln!(out, "data");
    for v in field.values() {
        out.push_str(&format_hex(*v));
        out.push('\n');
    }
    out
}

/// Parses a snapshot into its header and values.
pub fn read_snapshot(text: &str) -> Result<(SnapshotHeader, Vec<f64>), SnapshotError> {
    let mut lines = text.lines().enumerate();
    let mut next = |key: &str| -> Result<String, SnapshotError> {
        let (_, l) = lines
            .next()
            .ok_or_else(|| SnapshotError::Header(format!("missing `{key}`")))?;
        if key == MAGIC || key == "data" {
            return if l == key {
                Ok(String::new())
            } else {
                Err(SnapshotError::Header(format!("expected `{key}`, found `{l}`")))
            };
        }
        l.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| SnapshotError::Header(format!("expected `{key}`, found `{l}`")))
    };
    next(MAGIC)?;
    let name = next("name")?;
    let dim = next("N")?
        .parse()
        .map_err(|_| SnapshotError::Header("N is not an integer".into()))?;
    let domain = next("domain")?;
    let h_text = next("h")?;
    let h = parse_hex(&h_text).ok_or_else(|| SnapshotError::Header(format!("bad h `{h_text}`")))?;
    let nodes: usize = next("nodes")?
        .parse()
        .map_err(|_| SnapshotError::Header("nodes is not an integer".into()))?;
    next("order")?;
    next("data")?;
    let mut values = Vec::with_capacity(nodes);
    for (i, l) in lines {
        let v = parse_hex(l).ok_or_else(|| SnapshotError::Value {
            line: i + 1,
            text: l.to_string(),
        })?;
        values.push(v);
    }
    if values.len() != nodes {
        return Err(SnapshotError::Count {
            expected: nodes,
            found: values.len(),
        });
    }
    Ok((
        SnapshotHeader {
            name,
            dim,
            domain,
            h,
            nodes,
        },
        values,
    ))
}
