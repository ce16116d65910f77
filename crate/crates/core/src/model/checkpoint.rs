//! Text checkpoints.
//!
//! ```text
//! marginmix-checkpoint v1
//! frame_w <rows> <cols>
//! <row-major values, space separated>
//! ...
//! ```
//!
//! Tensors appear in the order `frame_w`, `frame_b`, `proj_w`, `proj_b`,
//! `centers`; vectors have a single dimension. Values use Rust's shortest
//! round-trip float formatting, so a save/load cycle is bit-exact.

use std::fmt::Write as _;

use ndarray::{Array1, Array2};

use super::network::EmbeddingModel;
use crate::error::{Error, Result};
use crate::loss::ClassCenters;

pub const CHECKPOINT_MAGIC: &str = "marginmix-checkpoint v1";

fn write_tensor(out: &mut String, name: &str, shape: &[usize], values: impl Iterator<Item = f64>) {
    let dims: Vec<String> = shape.iter().map(ToString::to_string).collect();
    let _ = writeln!(out, "{name} {}", dims.join(" "));
    let vals: Vec<String> = values.map(|v| v.to_string()).collect();
    let _ = writeln!(out, "{}", vals.join(" "));
}

pub fn save_checkpoint(model: &EmbeddingModel) -> String {
    let mut out = format!("{CHECKPOINT_MAGIC}\n");
    let (f, h) = model.frame_w.dim();
    write_tensor(&mut out, "frame_w", &[f, h], model.frame_w.iter().copied());
    write_tensor(&mut out, "frame_b", &[h], model.frame_b.iter().copied());
    let (h2, d) = model.proj_w.dim();
    write_tensor(&mut out, "proj_w", &[h2, d], model.proj_w.iter().copied());
    write_tensor(&mut out, "proj_b", &[d], model.proj_b.iter().copied());
    let c = model.centers.matrix();
    write_tensor(&mut out, "centers", &[c.nrows(), c.ncols()], c.iter().copied());
    out
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl Reader<'_> {
    fn next_line(&mut self) -> Result<(usize, &str)> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::parse(0, "unexpected end of checkpoint"))
    }

    fn tensor(&mut self, name: &str, rank: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        let (ln, header) = self.next_line()?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(name) {
            return Err(Error::parse(ln, format!("expected tensor {name:?}, got {header:?}")));
        }
        let shape = parts
            .map(|p| p.parse::<usize>().map_err(|e| Error::parse(ln, format!("bad dimension {p:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if shape.len() != rank {
            return Err(Error::parse(ln, format!("{name} needs {rank} dimensions, got {}", shape.len())));
        }
        let (ln, body) = self.next_line()?;
        let values = body
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|e| Error::parse(ln, format!("bad value {v:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::parse(ln, format!("{name}: {} values for shape {shape:?}", values.len())));
        }
        Ok((shape, values))
    }

    fn matrix(&mut self, name: &str) -> Result<Array2<f64>> {
        let (shape, values) = self.tensor(name, 2)?;
        Array2::from_shape_vec((shape[0], shape[1]), values).map_err(|e| Error::Shape(e.to_string()))
    }

    fn vector(&mut self, name: &str) -> Result<Array1<f64>> {
        Ok(Array1::from(self.tensor(name, 1)?.1))
    }
}

pub fn load_checkpoint(text: &str) -> Result<EmbeddingModel> {
    let mut r = Reader { lines: text.lines().enumerate() };
    let (ln, magic) = r.next_line()?;
    if magic.trim() != CHECKPOINT_MAGIC {
        return Err(Error::parse(ln, format!("not a checkpoint (header {magic:?})")));
    }
    let model = EmbeddingModel {
        frame_w: r.matrix("frame_w")?,
        frame_b: r.vector("frame_b")?,
        proj_w: r.matrix("proj_w")?,
        proj_b: r.vector("proj_b")?,
        centers: ClassCenters::new(r.matrix("centers")?)?,
    };
    model.validate()?;
    Ok(model)
}
