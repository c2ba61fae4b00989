//! The serialized model document `fit` writes and `predict` loads.
//!
//! A model file carries the model kind, the estimator tag, the variable
//! selection, and one or more trees in the tree text format, each wrapped in
//! `begin-tree`/`end-tree` markers:
//!
//! ```text
//! dacart-model v1
//! model da-cart
//! estimator ew
//! fallback false
//! selection 2
//! selected x1 0.83
//! selected x2 0.17
//! trees 1
//! begin-tree
//! dacart-tree v1
//! ...
//! end-tree
//! end-model
//! ```

use std::io::{BufRead, Write};

use dacart::data::{fmt_f64, Dataset};
use dacart::tree::{read_tree_document, write_tree_document, Tree};

#[derive(Debug)]
pub struct ModelFile {
    pub kind: String,
    pub estimator: String,
    /// `(feature name, gain share)` pairs, ordered by descending share.
    pub selection: Vec<(String, f64)>,
    pub fallback: bool,
    pub trees: Vec<Tree>,
}

impl ModelFile {
    /// Mean of member-tree predictions (a single tree predicts as itself).
    pub fn predict(&self, rows: &Dataset) -> Result<Vec<f64>, String> {
        let mut acc = vec![0.0; rows.n_rows()];
        for tree in &self.trees {
            let out = tree.predict(rows).map_err(|e| e.to_string())?;
            for (a, o) in acc.iter_mut().zip(out) {
                *a += o;
            }
        }
        let k = self.trees.len() as f64;
        for a in &mut acc {
            *a /= k;
        }
        Ok(acc)
    }

    pub fn write<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "dacart-model v1")?;
        writeln!(out, "model {}", self.kind)?;
        if !self.estimator.is_empty() {
            writeln!(out, "estimator {}", self.estimator)?;
        }
        writeln!(out, "fallback {}", self.fallback)?;
        writeln!(out, "selection {}", self.selection.len())?;
        for (name, share) in &self.selection {
            writeln!(out, "selected {} {}", name, fmt_f64(*share))?;
        }
        writeln!(out, "trees {}", self.trees.len())?;
        for tree in &self.trees {
            writeln!(out, "begin-tree")?;
            write_tree_document(tree, out)?;
            writeln!(out, "end-tree")?;
        }
        writeln!(out, "end-model")
    }

    pub fn read<R: BufRead>(reader: R) -> Result<ModelFile, String> {
        let lines: Vec<String> =
            reader.lines().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        let mut pos = 0usize;
        let mut next = |expect: &str| -> Result<String, String> {
            while pos < lines.len() && lines[pos].trim().is_empty() {
                pos += 1;
            }
            if pos >= lines.len() {
                return Err(format!("unexpected end of model file, expected {expect}"));
            }
            pos += 1;
            Ok(lines[pos - 1].clone())
        };

        if next("header")?.trim() != "dacart-model v1" {
            return Err("not a dacart model file".into());
        }
        let kind = next("model line")?
            .trim()
            .strip_prefix("model ")
            .ok_or("expected 'model <kind>'")?
            .to_string();
        let mut estimator = String::new();
        let mut line = next("fallback line")?;
        if let Some(rest) = line.trim().strip_prefix("estimator ") {
            estimator = rest.to_string();
            line = next("fallback line")?;
        }
        let fallback: bool = line
            .trim()
            .strip_prefix("fallback ")
            .ok_or("expected 'fallback <bool>'")?
            .parse()
            .map_err(|_| "invalid fallback flag".to_string())?;
        let n_selected: usize = next("selection line")?
            .trim()
            .strip_prefix("selection ")
            .ok_or("expected 'selection <n>'")?
            .parse()
            .map_err(|_| "invalid selection count".to_string())?;
        let mut selection = Vec::with_capacity(n_selected);
        for _ in 0..n_selected {
            let line = next("selected line")?;
            let rest = line.trim().strip_prefix("selected ").ok_or("expected 'selected <name> <share>'")?;
            let mut parts = rest.split_whitespace();
            let name = parts.next().ok_or("selected line missing name")?.to_string();
            let share: f64 = parts
                .next()
                .ok_or("selected line missing share")?
                .parse()
                .map_err(|_| "invalid share".to_string())?;
            selection.push((name, share));
        }
        let n_trees: usize = next("trees line")?
            .trim()
            .strip_prefix("trees ")
            .ok_or("expected 'trees <n>'")?
            .parse()
            .map_err(|_| "invalid tree count".to_string())?;
        if n_trees == 0 {
            return Err("model file contains no trees".into());
        }
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            if next("begin-tree")?.trim() != "begin-tree" {
                return Err("expected 'begin-tree'".into());
            }
            let mut chunk = String::new();
            loop {
                let line = next("tree body")?;
                if line.trim() == "end-tree" {
                    break;
                }
                chunk.push_str(&line);
                chunk.push('\n');
            }
            trees.push(read_tree_document(chunk.as_bytes()).map_err(|e| e.to_string())?);
        }
        if next("end-model")?.trim() != "end-model" {
            return Err("expected 'end-model'".into());
        }
        Ok(ModelFile { kind, estimator, selection, fallback, trees })
    }
}
