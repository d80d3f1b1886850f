//! Text model format:
//!
//! ```text
//! spanlab-crf 1
//! template spanlab-feat-v1/fnv1a64/18
//! hash_bits 18
//! constrained true
//! nonzero 3
//! 17 0.25
//! ...
//! ```
//!
//! Only non-zero weights are listed, in ascending index order. Values use
//! the shortest representation that parses back to the same `f64`.

use std::io::{BufRead, Write};

use super::crf::{param_count, CrfModel};
use super::features::{template_version, MAX_HASH_BITS};
use super::TaggerError;

const MAGIC: &str = "spanlab-crf 1";

pub fn write_model<W: Write>(model: &CrfModel, mut w: W) -> std::io::Result<()> {
    let nonzero: Vec<(usize, f64)> = model
        .weights
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, x)| x != 0.0)
        .collect();
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "template {}", model.template)?;
    writeln!(w, "hash_bits {}", model.hash_bits)?;
    writeln!(w, "constrained {}", model.constrained)?;
    writeln!(w, "nonzero {}", nonzero.len())?;
    for (i, x) in nonzero {
        writeln!(w, "{i} {x}")?;
    }
    Ok(())
}

pub fn read_model<R: BufRead>(r: R) -> Result<CrfModel, TaggerError> {
    let mut lines = r.lines();
    let mut next = |what: &str| -> Result<String, TaggerError> {
        match lines.next() {
            Some(line) => Ok(line?),
            None => Err(TaggerError::ModelFormat(format!("missing {what}"))),
        }
    };
    let bad = |msg: String| TaggerError::ModelFormat(msg);

    if next("header")?.trim() != MAGIC {
        return Err(bad("not a spanlab CRF model".into()));
    }
    let field = |line: String, key: &str| -> Result<String, TaggerError> {
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(|v| v.trim().to_owned())
            .ok_or_else(|| bad(format!("expected `{key} ...`, got {line:?}")))
    };
    let template = field(next("template")?, "template")?;
    let hash_bits: u32 = field(next("hash_bits")?, "hash_bits")?
        .parse()
        .map_err(|e| bad(format!("hash_bits: {e}")))?;
    if hash_bits == 0 || hash_bits > MAX_HASH_BITS {
        return Err(bad(format!("hash_bits {hash_bits} out of range")));
    }
    if template != template_version(hash_bits) {
        return Err(TaggerError::TemplateMismatch {
            model: template,
            features: template_version(hash_bits),
        });
    }
    let constrained: bool = field(next("constrained")?, "constrained")?
        .parse()
        .map_err(|e| bad(format!("constrained: {e}")))?;
    let count: usize = field(next("nonzero")?, "nonzero")?
        .parse()
        .map_err(|e| bad(format!("nonzero: {e}")))?;

    let mut weights = vec![0.0; param_count(hash_bits)];
    for _ in 0..count {
        let line = next("weight line")?;
        let (i, x) = line
            .split_once(' ')
            .ok_or_else(|| bad(format!("bad weight line {line:?}")))?;
        let i: usize = i.parse().map_err(|e| bad(format!("weight index: {e}")))?;
        let x: f64 = x.trim().parse().map_err(|e| bad(format!("weight value: {e}")))?;
        if i >= weights.len() || !x.is_finite() {
            return Err(bad(format!("weight line {line:?} out of range")));
        }
        weights[i] = x;
    }
    Ok(CrfModel {
        template,
        hash_bits,
        constrained,
        weights,
    })
}
