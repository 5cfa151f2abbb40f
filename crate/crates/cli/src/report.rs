//! Report values and their fixed-format JSON emission.
//!
//! Reports must be byte-identical for identical inputs and tool version, so
//! objects keep insertion order and every float is printed with exactly 17
//! significant digits.  Complex numbers appear as `[re, im]`, rationals as
//! `"p/q"` strings.

use std::io::Write;
use std::path::Path;

use iml_core::exact::{format_rational, Rational};
use iml_core::matrix::{CMat, C64};

#[derive(Debug, Clone)]
pub enum Val {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Arr(Vec<Val>),
    Obj(Vec<(String, Val)>),
}

impl Val {
    pub fn complex(z: C64) -> Val {
        Val::Arr(vec![Val::Float(z.re), Val::Float(z.im)])
    }

    pub fn rational(r: &Rational) -> Val {
        Val::Str(format_rational(r))
    }

    pub fn matrix(m: &CMat) -> Val {
        Val::Arr(
            (0..m.nrows())
                .map(|i| Val::Arr((0..m.ncols()).map(|j| Val::complex(m[(i, j)])).collect()))
                .collect(),
        )
    }

    pub fn floats(xs: &[f64]) -> Val {
        Val::Arr(xs.iter().map(|x| Val::Float(*x)).collect())
    }

    pub fn get(&self, key: &str) -> Option<&Val> {
        match self {
            Val::Obj(fields) => fields.iter().find(|(k, _)| k == key).map(|(_, v)| v),
            _ => None,
        }
    }
}

/// Build an object literal preserving field order.
#[macro_export]
macro_rules! obj {
    ($($key:expr => $value:expr),* $(,)?) => {
        $crate::report::Val::Obj(vec![$(($key.to_string(), $value)),*])
    };
}

fn escape_into(s: &str, out: &mut String) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn float_repr(x: f64) -> String {
    if x.is_finite() {
        // 17 significant digits: 1 before the point + 16 after
        format!("{x:.16e}")
    } else {
        // JSON has no non-finite numbers; stringify them
        format!("\"{x}\"")
    }
}

fn write_val(v: &Val, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match v {
        Val::Null => out.push_str("null"),
        Val::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Val::Int(k) => out.push_str(&k.to_string()),
        Val::Float(x) => out.push_str(&float_repr(*x)),
        Val::Str(s) => escape_into(s, out),
        Val::Arr(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            // short numeric arrays inline (complex pairs, rows)
            let inline = items.len() <= 4
                && items.iter().all(|i| matches!(i, Val::Float(_) | Val::Int(_)));
            if inline {
                out.push('[');
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    write_val(item, 0, out);
                }
                out.push(']');
            } else {
                out.push_str("[\n");
                for (k, item) in items.iter().enumerate() {
                    out.push_str(&pad);
                    out.push_str("  ");
                    write_val(item, indent + 1, out);
                    if k + 1 < items.len() {
                        out.push(',');
                    }
                    out.push('\n');
                }
                out.push_str(&pad);
                out.push(']');
            }
        }
        Val::Obj(fields) => {
            if fields.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (k, (key, value)) in fields.iter().enumerate() {
                out.push_str(&pad);
                out.push_str("  ");
                escape_into(key, out);
                out.push_str(": ");
                write_val(value, indent + 1, out);
                if k + 1 < fields.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str(&pad);
            out.push('}');
        }
    }
}

pub fn to_string(v: &Val) -> String {
    let mut out = String::new();
    write_val(v, 0, &mut out);
    out.push('\n');
    out
}

/// Atomic write: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
