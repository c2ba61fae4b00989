//! Human-readable tree serialization.
//!
//! Nested node lines, two spaces of indent per level, left child first:
//!
//! ```text
//! dacart-tree v1
//! task regression
//! cols 2
//! col x1 continuous
//! col x2 binary
//! params max_depth=30 min_node_weight=10 min_gain=0 prune=true cv_folds=5 seed=42
//! split x1 2.5 gain=3.5
//!   leaf 1.25 weight=10 count=10
//!   split x2 0.5 gain=1.5
//!     leaf 0.5 weight=3 count=3
//!     leaf 2.5 weight=7 count=7
//! ```
//!
//! Numbers use the shortest decimal form that parses back to the same bits,
//! so a dump/load cycle reproduces the tree exactly.

use std::io::{BufRead, Write};

use super::{FitParams, Node, SplitChoice, TaskKind, Tree, TreeError};
use crate::data::{fmt_f64, ColumnKind, ColumnSchema};

pub(crate) struct LineCursor {
    lines: Vec<String>,
    pos: usize,
}

impl LineCursor {
    pub(crate) fn from_reader<R: BufRead>(reader: R) -> Result<Self, TreeError> {
        let lines = reader
            .lines()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| TreeError::Text(format!("read failure: {e}")))?;
        Ok(LineCursor { lines, pos: 0 })
    }

    pub(crate) fn next(&mut self) -> Option<&str> {
        while self.pos < self.lines.len() && self.lines[self.pos].trim().is_empty() {
            self.pos += 1;
        }
        let line = self.lines.get(self.pos)?;
        self.pos += 1;
        Some(line)
    }

    pub(crate) fn peek(&mut self) -> Option<&str> {
        while self.pos < self.lines.len() && self.lines[self.pos].trim().is_empty() {
            self.pos += 1;
        }
        self.lines.get(self.pos).map(|s| s.as_str())
    }

    pub(crate) fn expect(&mut self, what: &str) -> Result<&str, TreeError> {
        // Borrow-checker friendly: advance, then re-borrow.
        if self.peek().is_none() {
            return Err(TreeError::Text(format!("unexpected end of input, expected {what}")));
        }
        Ok(self.next().expect("peeked"))
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64, TreeError> {
    s.parse().map_err(|_| TreeError::Text(format!("invalid {what}: '{s}'")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize, TreeError> {
    s.parse().map_err(|_| TreeError::Text(format!("invalid {what}: '{s}'")))
}

pub(crate) fn write_schema<W: Write>(schema: &[ColumnSchema], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "cols {}", schema.len())?;
    for col in schema {
        writeln!(out, "col {} {}", col.name, col.kind)?;
    }
    Ok(())
}

pub(crate) fn parse_schema(cursor: &mut LineCursor) -> Result<Vec<ColumnSchema>, TreeError> {
    let line = cursor.expect("cols header")?.trim().to_string();
    let count = line
        .strip_prefix("cols ")
        .ok_or_else(|| TreeError::Text(format!("expected 'cols <n>', got '{line}'")))?;
    let count = parse_usize(count, "column count")?;
    let mut schema = Vec::with_capacity(count);
    for _ in 0..count {
        let line = cursor.expect("col line")?.trim().to_string();
        let rest = line
            .strip_prefix("col ")
            .ok_or_else(|| TreeError::Text(format!("expected 'col <name> <kind>', got '{line}'")))?;
        let mut parts = rest.split_whitespace();
        let name = parts
            .next()
            .ok_or_else(|| TreeError::Text("col line missing name".into()))?
            .to_string();
        let kind = match parts.next() {
            Some("continuous") => ColumnKind::Continuous,
            Some("binary") => ColumnKind::Binary,
            other => return Err(TreeError::Text(format!("unknown column kind {other:?}"))),
        };
        schema.push(ColumnSchema::new(name, kind));
    }
    Ok(schema)
}

pub(crate) fn write_params<W: Write>(params: &FitParams, out: &mut W) -> std::io::Result<()> {
    writeln!(
        out,
        "params max_depth={} min_node_weight={} min_gain={} complexity={} prune={} cv_folds={} seed={}",
        params.max_depth,
        fmt_f64(params.min_node_weight),
        fmt_f64(params.min_gain),
        fmt_f64(params.complexity),
        params.prune,
        params.cv_folds,
        params.seed
    )
}

pub(crate) fn parse_params(line: &str) -> Result<FitParams, TreeError> {
    let rest = line
        .trim()
        .strip_prefix("params ")
        .ok_or_else(|| TreeError::Text(format!("expected params line, got '{line}'")))?;
    let mut params = FitParams::default();
    for pair in rest.split_whitespace() {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| TreeError::Text(format!("malformed params entry '{pair}'")))?;
        match key {
            "max_depth" => params.max_depth = parse_usize(value, "max_depth")?,
            "min_node_weight" => params.min_node_weight = parse_f64(value, "min_node_weight")?,
            "min_gain" => params.min_gain = parse_f64(value, "min_gain")?,
            "complexity" => params.complexity = parse_f64(value, "complexity")?,
            "prune" => {
                params.prune = value
                    .parse()
                    .map_err(|_| TreeError::Text(format!("invalid prune flag '{value}'")))?
            }
            "cv_folds" => params.cv_folds = parse_usize(value, "cv_folds")?,
            "seed" => {
                params.seed = value
                    .parse()
                    .map_err(|_| TreeError::Text(format!("invalid seed '{value}'")))?
            }
            other => return Err(TreeError::Text(format!("unknown params key '{other}'"))),
        }
    }
    Ok(params)
}

pub(crate) fn write_node<W: Write>(
    node: &Node,
    schema: &[ColumnSchema],
    indent: usize,
    out: &mut W,
) -> std::io::Result<()> {
    let pad = "  ".repeat(indent);
    match node {
        Node::Leaf { value, weight_mass, count } => {
            writeln!(out, "{pad}leaf {} weight={} count={}", fmt_f64(*value), fmt_f64(*weight_mass), count)
        }
        Node::Internal { split, left, right } => {
            writeln!(
                out,
                "{pad}split {} {} gain={}",
                schema[split.feature].name,
                fmt_f64(split.threshold),
                fmt_f64(split.criterion_gain)
            )?;
            write_node(left, schema, indent + 1, out)?;
            write_node(right, schema, indent + 1, out)
        }
    }
}

pub(crate) fn parse_node(
    cursor: &mut LineCursor,
    depth: usize,
    schema: &[ColumnSchema],
) -> Result<Node, TreeError> {
    let line = cursor.expect("node line")?.to_string();
    let stripped = line.trim_start();
    let indent = line.len() - stripped.len();
    if indent != depth * 2 {
        return Err(TreeError::Text(format!(
            "bad indentation at '{stripped}': expected depth {depth}"
        )));
    }
    let mut parts = stripped.split_whitespace();
    match parts.next() {
        Some("leaf") => {
            let value = parse_f64(parts.next().unwrap_or(""), "leaf value")?;
            let mut weight_mass = None;
            let mut count = None;
            for pair in parts {
                match pair.split_once('=') {
                    Some(("weight", v)) => weight_mass = Some(parse_f64(v, "leaf weight")?),
                    Some(("count", v)) => count = Some(parse_usize(v, "leaf count")?),
                    _ => return Err(TreeError::Text(format!("unknown leaf field '{pair}'"))),
                }
            }
            Ok(Node::Leaf {
                value,
                weight_mass: weight_mass
                    .ok_or_else(|| TreeError::Text("leaf missing weight".into()))?,
                count: count.ok_or_else(|| TreeError::Text("leaf missing count".into()))?,
            })
        }
        Some("split") => {
            let name = parts.next().ok_or_else(|| TreeError::Text("split missing feature".into()))?;
            let feature = schema
                .iter()
                .position(|c| c.name == name)
                .ok_or_else(|| TreeError::Text(format!("split references unknown column '{name}'")))?;
            let threshold = parse_f64(parts.next().unwrap_or(""), "split threshold")?;
            let gain_field = parts.next().unwrap_or("");
            let criterion_gain = match gain_field.split_once('=') {
                Some(("gain", v)) => parse_f64(v, "split gain")?,
                _ => return Err(TreeError::Text(format!("split missing gain field: '{gain_field}'"))),
            };
            let left = parse_node(cursor, depth + 1, schema)?;
            let right = parse_node(cursor, depth + 1, schema)?;
            Ok(Node::Internal {
                split: SplitChoice { feature, threshold, criterion_gain },
                left: Box::new(left),
                right: Box::new(right),
            })
        }
        other => Err(TreeError::Text(format!("expected 'leaf' or 'split', got {other:?}"))),
    }
}

pub(crate) fn parse_task(line: &str) -> Result<TaskKind, TreeError> {
    match line.trim().strip_prefix("task ").map(str::trim) {
        Some("regression") => Ok(TaskKind::Regression),
        Some("classification") => Ok(TaskKind::Classification),
        _ => Err(TreeError::Text(format!("expected task line, got '{line}'"))),
    }
}

/// Serialize one tree as a standalone text document.
pub fn write_tree_document<W: Write>(tree: &Tree, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "dacart-tree v1")?;
    writeln!(out, "task {}", tree.task)?;
    write_schema(&tree.schema, out)?;
    write_params(&tree.params, out)?;
    write_node(&tree.root, &tree.schema, 0, out)
}

/// Load a tree from the document format written by [`write_tree_document`].
pub fn read_tree_document<R: BufRead>(reader: R) -> Result<Tree, TreeError> {
    let mut cursor = LineCursor::from_reader(reader)?;
    let header = cursor.expect("header")?.trim();
    if header != "dacart-tree v1" {
        return Err(TreeError::Text(format!("unknown header '{header}'")));
    }
    let task =
        parse_task(&cursor.expect("task line")?.to_string())?;
    let schema = parse_schema(&mut cursor)?;
    let params = parse_params(&cursor.expect("params line")?.to_string())?;
    let root = parse_node(&mut cursor, 0, &schema)?;
    let candidates = (0..schema.len()).collect();
    Ok(Tree { root, task, schema, params, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::tree::{fit, unit_weights, FitParams};

    #[test]
    fn dump_then_load_reproduces_the_tree() {
        let x1: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin() * 3.0).collect();
        let x2: Vec<f64> = (0..40).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
        let y: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a * 2.0 + b * 5.0 + 0.1 * (a * 9.0).cos()).collect();
        let d = Dataset::from_named_columns(&[("x1", x1), ("x2", x2)], Some(("y", y))).unwrap();
        let params = FitParams { min_node_weight: 3.0, prune: false, seed: 3, ..FitParams::default() };
        let tree = fit(&d, &unit_weights(40), &[0, 1], &params, TaskKind::Regression).unwrap();

        let mut buf = Vec::new();
        write_tree_document(&tree, &mut buf).unwrap();
        let loaded = read_tree_document(buf.as_slice()).unwrap();
        assert_eq!(loaded.root, tree.root);
        assert_eq!(loaded.schema, tree.schema);
        assert_eq!(loaded.params, tree.params);
        assert_eq!(loaded.predict(&d).unwrap(), tree.predict(&d).unwrap());
    }

    #[test]
    fn malformed_document_is_rejected() {
        assert!(read_tree_document("nonsense".as_bytes()).is_err());
        let doc = "dacart-tree v1\ntask regression\ncols 1\ncol x1 continuous\nparams max_depth=5\nsplit x9 1.0 gain=1\n";
        assert!(read_tree_document(doc.as_bytes()).is_err());
    }
}
