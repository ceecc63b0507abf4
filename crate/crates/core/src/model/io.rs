//! Model file ingestion.
//!
//! Format:
//! ```json
//! {
//!   "level_sizes": { "prefix": [1], "tail": 1 },
//!   "blocks": [
//!     {"k": 0, "l_offset": 0, "entries": [[-1.0]]},
//!     {"k": 0, "l_offset": 1, "entries": [[1.0]]},
//!     {"k": "tail", "l_offset": -1, "entries": [[2.0]]},
//!     {"k": "tail", "l_offset": 0, "entries": [[-3.0]]},
//!     {"k": "tail", "l_offset": 1, "entries": [[1.0]]}
//!   ],
//!   "structure_hint": "general"
//! }
//! ```
//!
//! `"k": "tail"` declares blocks repeated for every level at or beyond the tail
//! start, which is `max(prefix length, largest explicit k + 1)`. Offsets are
//! `l - k`. Two definitions for the same (k, l) are rejected. Diagonal blocks
//! are never inferred; files must supply conservative diagonals and
//! `validate` enforces that rather than repairing it.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Deserialize;

use crate::matrix::DenseMatrix;
use crate::model::{Band, BlockGenerator, LevelSizes, ModelError};

#[derive(Debug, Deserialize)]
struct ModelFile {
    level_sizes: LevelSizesFile,
    blocks: Vec<BlockEntry>,
    #[serde(default)]
    structure_hint: Option<String>,
}

#[derive(Debug, Deserialize)]
struct LevelSizesFile {
    #[serde(default)]
    prefix: Vec<usize>,
    tail: usize,
}

#[derive(Debug, Deserialize)]
struct BlockEntry {
    k: LevelKey,
    l_offset: i64,
    entries: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize, PartialEq)]
#[serde(untagged)]
enum LevelKey {
    Index(usize),
    Tail(String),
}

/// A parsed model plus the declared structure hint, if any.
#[derive(Debug, Clone)]
pub struct ParsedModel {
    pub model: BlockGenerator,
    pub structure_hint: Option<String>,
}

/// Parses a model from its JSON representation.
pub fn model_from_json(text: &str) -> Result<ParsedModel, ModelError> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| ModelError::InvalidFile(format!("json: {e}")))?;
    if file.level_sizes.tail == 0 || file.level_sizes.prefix.contains(&0) {
        return Err(ModelError::InvalidFile("level sizes must be positive".into()));
    }
    if let Some(hint) = &file.structure_hint {
        match hint.as_str() {
            "upper" | "lower" | "gim1" | "general" => {}
            other => {
                return Err(ModelError::InvalidFile(format!(
                    "structure_hint must be one of upper|lower|gim1|general, got '{other}'"
                )))
            }
        }
    }

    let mut explicit: HashMap<(usize, i64), DenseMatrix> = HashMap::new();
    let mut tail_blocks: HashMap<i64, DenseMatrix> = HashMap::new();
    let mut max_explicit_k: Option<usize> = None;
    for entry in &file.blocks {
        let matrix = matrix_from_entries(&entry.entries)?;
        match &entry.k {
            LevelKey::Index(k) => {
                if (*k as i64) + entry.l_offset < 0 {
                    return Err(ModelError::InvalidFile(format!(
                        "block at k={k} with offset {} points below level 0",
                        entry.l_offset
                    )));
                }
                if explicit.insert((*k, entry.l_offset), matrix).is_some() {
                    return Err(ModelError::InvalidFile(format!(
                        "overlapping definitions for block (k={k}, offset={})",
                        entry.l_offset
                    )));
                }
                max_explicit_k = Some(max_explicit_k.map_or(*k, |m| m.max(*k)));
            }
            LevelKey::Tail(tag) if tag == "tail" => {
                if tail_blocks.insert(entry.l_offset, matrix).is_some() {
                    return Err(ModelError::InvalidFile(format!(
                        "overlapping tail definitions for offset {}",
                        entry.l_offset
                    )));
                }
            }
            LevelKey::Tail(other) => {
                return Err(ModelError::InvalidFile(format!(
                    "block key must be a level index or \"tail\", got '{other}'"
                )))
            }
        }
    }
    if tail_blocks.is_empty() && explicit.is_empty() {
        return Err(ModelError::InvalidFile("model declares no blocks".into()));
    }

    let tail_start = file
        .level_sizes
        .prefix
        .len()
        .max(max_explicit_k.map_or(0, |k| k + 1));
    let sizes = LevelSizes::new(file.level_sizes.prefix.clone(), file.level_sizes.tail);

    let mut min_off: i64 = 0;
    let mut max_off: i64 = 0;
    for off in explicit.keys().map(|(_, o)| *o).chain(tail_blocks.keys().copied()) {
        min_off = min_off.min(off);
        max_off = max_off.max(off);
    }
    let band_low = Band::Finite((-min_off).max(0) as usize);
    let band_high = Band::Finite(max_off.max(0) as usize);

    let mut tail_offsets: Vec<i64> = tail_blocks.keys().copied().collect();
    tail_offsets.sort_unstable();
    let explicit = Arc::new(explicit);
    let tail_blocks = Arc::new(tail_blocks);
    let explicit_support = {
        let mut by_k: HashMap<usize, Vec<usize>> = HashMap::new();
        for (k, off) in explicit.keys() {
            by_k.entry(*k).or_default().push((*k as i64 + off) as usize);
        }
        for v in by_k.values_mut() {
            v.sort_unstable();
        }
        Arc::new(by_k)
    };

    let block_explicit = Arc::clone(&explicit);
    let block_tail = Arc::clone(&tail_blocks);
    let support_map = Arc::clone(&explicit_support);
    let tail_offsets_support = tail_offsets.clone();

    let model = BlockGenerator::from_fn(
        "file_model",
        sizes,
        band_low,
        band_high,
        move |k, l| {
            let off = l as i64 - k as i64;
            if k >= tail_start {
                block_tail.get(&off).cloned()
            } else {
                block_explicit.get(&(k, off)).cloned()
            }
        },
        move |k| {
            if k >= tail_start {
                tail_offsets_support
                    .iter()
                    .filter_map(|off| {
                        let l = k as i64 + off;
                        (l >= 0).then_some(l as usize)
                    })
                    .collect()
            } else {
                support_map.get(&k).cloned().unwrap_or_default()
            }
        },
    );
    Ok(ParsedModel { model, structure_hint: file.structure_hint })
}

fn matrix_from_entries(entries: &[Vec<f64>]) -> Result<DenseMatrix, ModelError> {
    if entries.is_empty() {
        return Err(ModelError::InvalidFile("block with no rows".into()));
    }
    let cols = entries[0].len();
    if cols == 0 || entries.iter().any(|r| r.len() != cols) {
        return Err(ModelError::InvalidFile("block rows are empty or ragged".into()));
    }
    let mut data = Vec::with_capacity(entries.len() * cols);
    for row in entries {
        data.extend_from_slice(row);
    }
    Ok(DenseMatrix::from_vec(entries.len(), cols, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StructureClass;

    const MM1_JSON: &str = r#"{
        "level_sizes": {"prefix": [1], "tail": 1},
        "blocks": [
            {"k": 0, "l_offset": 0, "entries": [[-1.0]]},
            {"k": 0, "l_offset": 1, "entries": [[1.0]]},
            {"k": "tail", "l_offset": -1, "entries": [[2.0]]},
            {"k": "tail", "l_offset": 0, "entries": [[-3.0]]},
            {"k": "tail", "l_offset": 1, "entries": [[1.0]]}
        ],
        "structure_hint": "general"
    }"#;

    #[test]
    fn parses_mm1_model() {
        let parsed = model_from_json(MM1_JSON).unwrap();
        let m = &parsed.model;
        assert!(m.validate(12).is_valid());
        assert_eq!(m.classify(), StructureClass::Tridiagonal);
        assert_eq!(
            m.nw_corner(1).unwrap(),
            DenseMatrix::from_rows(&[&[-1.0, 1.0], &[2.0, -3.0]])
        );
        assert_eq!(parsed.structure_hint.as_deref(), Some("general"));
    }

    #[test]
    fn rejects_overlapping_blocks() {
        let text = r#"{
            "level_sizes": {"prefix": [], "tail": 1},
            "blocks": [
                {"k": "tail", "l_offset": 0, "entries": [[-1.0]]},
                {"k": "tail", "l_offset": 0, "entries": [[-2.0]]}
            ]
        }"#;
        assert!(matches!(model_from_json(text), Err(ModelError::InvalidFile(msg)) if msg.contains("overlapping")));
    }

    #[test]
    fn rejects_bad_hint_and_bad_key() {
        let bad_hint = r#"{
            "level_sizes": {"tail": 1},
            "blocks": [{"k": "tail", "l_offset": 0, "entries": [[-1.0]]}],
            "structure_hint": "diagonal"
        }"#;
        assert!(model_from_json(bad_hint).is_err());
        let bad_key = r#"{
            "level_sizes": {"tail": 1},
            "blocks": [{"k": "rail", "l_offset": 0, "entries": [[-1.0]]}]
        }"#;
        assert!(model_from_json(bad_key).is_err());
    }

    #[test]
    fn explicit_rows_push_the_tail_start() {
        // explicit boundary rows through k=2, tail beyond
        let text = r#"{
            "level_sizes": {"prefix": [1], "tail": 1},
            "blocks": [
                {"k": 0, "l_offset": 0, "entries": [[-1.0]]},
                {"k": 0, "l_offset": 1, "entries": [[1.0]]},
                {"k": 1, "l_offset": -1, "entries": [[1.0]]},
                {"k": 1, "l_offset": 0, "entries": [[-2.0]]},
                {"k": 1, "l_offset": 1, "entries": [[1.0]]},
                {"k": 2, "l_offset": -1, "entries": [[2.0]]},
                {"k": 2, "l_offset": 0, "entries": [[-3.0]]},
                {"k": 2, "l_offset": 1, "entries": [[1.0]]},
                {"k": "tail", "l_offset": -1, "entries": [[3.0]]},
                {"k": "tail", "l_offset": 0, "entries": [[-4.0]]},
                {"k": "tail", "l_offset": 1, "entries": [[1.0]]}
            ]
        }"#;
        let parsed = model_from_json(text).unwrap();
        assert!(parsed.model.validate(10).is_valid());
        assert_eq!(parsed.model.block(2, 1).unwrap(), DenseMatrix::scalar(2.0));
        assert_eq!(parsed.model.block(3, 2).unwrap(), DenseMatrix::scalar(3.0));
    }
}
