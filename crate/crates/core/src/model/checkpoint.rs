//! Plain-text parameter checkpoints.
//!
//! ```text
//! fedcog-checkpoint v1
//! role client
//! kind ncd
//! n_students 3
//! n_exercises 4
//! dim 2
//! n_concepts 2
//! block student 3 2
//! 0.01 -0.07
//! ...
//! block exercise 4 2
//! ...
//! end
//! ```
//!
//! Blocks appear in the order student, exercise, diagnostic.w_disc,
//! diagnostic.w_fc1, diagnostic.w_fc2, diagnostic.w_fc3; a block may be
//! absent (soft-DINA has no diagnostic blocks, a server checkpoint in full
//! personalization mode has only `exercise`). One matrix row per line,
//! values space-separated in Rust's shortest round-trip float notation, so a
//! write/read cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use super::{Matrix, ModelKind};
use crate::{Error, Result};

const MAGIC: &str = "fedcog-checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub role: String,
    pub kind: ModelKind,
    pub n_students: usize,
    pub n_exercises: usize,
    pub dim: usize,
    pub n_concepts: usize,
    pub blocks: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn block(&self, name: &str) -> Option<&Matrix> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "role {}", self.role);
        let _ = writeln!(out, "kind {}", self.kind.name());
        let _ = writeln!(out, "n_students {}", self.n_students);
        let _ = writeln!(out, "n_exercises {}", self.n_exercises);
        let _ = writeln!(out, "dim {}", self.dim);
        let _ = writeln!(out, "n_concepts {}", self.n_concepts);
        for (name, m) in &self.blocks {
            let _ = writeln!(out, "block {name} {} {}", m.rows(), m.cols());
            for r in 0..m.rows() {
                let row: Vec<String> = m.row(r).iter().map(|x| format!("{x:?}")).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Checkpoint(format!("line {line}: {msg}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| {
                Error::Checkpoint(format!("unexpected end of file, expected {what}"))
            })
        };

        let (n, magic) = next("header")?;
        if magic != MAGIC {
            return Err(bad(n, "not a checkpoint file"));
        }
        let mut header = |key: &str| -> Result<(usize, String)> {
            let (n, line) = next(key)?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok((n, v.to_string())),
                _ => Err(bad(n, &format!("expected `{key}`"))),
            }
        };
        let role = header("role")?.1;
        let (n, kind) = header("kind")?;
        let kind = ModelKind::parse(&kind).ok_or_else(|| bad(n, "unknown model kind"))?;
        let mut count = |key: &str| -> Result<usize> {
            let (n, v) = header(key)?;
            v.parse()
                .map_err(|_| bad(n, &format!("`{key}` is not a count")))
        };
        let n_students = count("n_students")?;
        let n_exercises = count("n_exercises")?;
        let dim = count("dim")?;
        let n_concepts = count("n_concepts")?;

        let mut blocks = Vec::new();
        loop {
            let (n, line) = next("block or end")?;
            if line == "end" {
                break;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let (name, rows, cols) = match parts.as_slice() {
                ["block", name, r, c] => (
                    name.to_string(),
                    r.parse::<usize>().map_err(|_| bad(n, "bad row count"))?,
                    c.parse::<usize>().map_err(|_| bad(n, "bad column count"))?,
                ),
                _ => return Err(bad(n, "expected `block <name> <rows> <cols>`")),
            };
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (n, line) = next("matrix row")?;
                let before = data.len();
                for tok in line.split_whitespace() {
                    data.push(tok.parse::<f64>().map_err(|_| bad(n, "bad number"))?);
                }
                if data.len() - before != cols {
                    return Err(bad(n, &format!("expected {cols} values")));
                }
            }
            blocks.push((name, Matrix::from_vec(rows, cols, data)));
        }
        Ok(Self {
            role,
            kind,
            n_students,
            n_exercises,
            dim,
            n_concepts,
            blocks,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
