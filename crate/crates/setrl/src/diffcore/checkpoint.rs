//! Plain-text parameter checkpoints.
//!
//! One block per tensor:
//!
//! ```text
//! name trunk.w
//! shape 64 66
//! 1.25e-1 -3e0 ...
//! ```
//!
//! Values use the shortest decimal form that round-trips 64-bit exactly, so
//! save → load is lossless and files stay diffable.

use std::fmt::Write as _;
use std::path::Path;

use super::tensor::Tensor;
use super::DiffError;

const VALUES_PER_LINE: usize = 8;

fn io_err(path: &Path, source: std::io::Error) -> DiffError {
    DiffError::CheckpointIo {
        path: path.display().to_string(),
        source,
    }
}

/// Renders named tensors in the checkpoint format.
pub fn render_checkpoint(params: &[(String, &Tensor)]) -> String {
    let mut out = String::new();
    for (name, t) in params {
        writeln!(out, "name {name}").expect("string write");
        out.push_str("shape");
        for e in t.shape() {
            write!(out, " {e}").expect("string write");
        }
        out.push('\n');
        for chunk in t.values().chunks(VALUES_PER_LINE) {
            let mut first = true;
            for v in chunk {
                if !first {
                    out.push(' ');
                }
                write!(out, "{v:e}").expect("string write");
                first = false;
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Writes named tensors as one checkpoint file.
pub fn save_checkpoint(path: &Path, params: &[(String, &Tensor)]) -> Result<(), DiffError> {
    std::fs::write(path, render_checkpoint(params)).map_err(|e| io_err(path, e))
}

/// Reads every parameter block from a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>, DiffError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_checkpoint(&text, &path.display().to_string())
}

/// [`load_checkpoint`] on in-memory text; `origin` labels errors.
pub fn parse_checkpoint(text: &str, origin: &str) -> Result<Vec<(String, Tensor)>, DiffError> {
    let parse_err = |line: usize, msg: String| DiffError::CheckpointParse {
        path: origin.to_string(),
        line,
        msg,
    };

    let mut blocks = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((ln, line)) = lines.next() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let name = line
            .strip_prefix("name ")
            .ok_or_else(|| parse_err(ln + 1, format!("expected `name <id>`, got `{line}`")))?
            .trim()
            .to_string();
        let (sln, shape_line) = lines
            .next()
            .ok_or_else(|| parse_err(ln + 1, "missing shape line".into()))?;
        let shape_line = shape_line.trim();
        let extents = shape_line
            .strip_prefix("shape")
            .ok_or_else(|| parse_err(sln + 1, format!("expected `shape ...`, got `{shape_line}`")))?;
        let mut shape = Vec::new();
        for tok in extents.split_whitespace() {
            let e: usize = tok
                .parse()
                .map_err(|_| parse_err(sln + 1, format!("bad extent `{tok}`")))?;
            shape.push(e);
        }
        if shape.is_empty() || shape.contains(&0) {
            return Err(parse_err(sln + 1, format!("invalid shape {shape:?}")));
        }
        let want: usize = shape.iter().product();
        let mut values = Vec::with_capacity(want);
        let mut last_ln = sln;
        while values.len() < want {
            let (vln, vline) = lines
                .next()
                .ok_or_else(|| {
                    parse_err(
                        last_ln + 1,
                        format!("block `{name}` ends early: {} of {want} values", values.len()),
                    )
                })?;
            last_ln = vln;
            for tok in vline.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(vln + 1, format!("bad value `{tok}`")))?;
                values.push(v);
            }
            if values.len() > want {
                return Err(parse_err(
                    vln + 1,
                    format!("block `{name}` has more than {want} values"),
                ));
            }
        }
        let tensor = Tensor::from_values(&shape, values)
            .map_err(|e| parse_err(last_ln + 1, e.to_string()))?;
        blocks.push((name, tensor));
    }
    Ok(blocks)
}

/// Loads a checkpoint into existing tensors, matching blocks by name and
/// requiring identical shapes. Every target must be filled and every block
/// consumed, so architecture drift surfaces as a named error.
pub fn load_into(path: &Path, targets: &mut [(String, &mut Tensor)]) -> Result<(), DiffError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    load_into_str(&text, &path.display().to_string(), targets)
}

/// [`load_into`] on in-memory text; `origin` labels errors.
pub fn load_into_str(
    text: &str,
    origin: &str,
    targets: &mut [(String, &mut Tensor)],
) -> Result<(), DiffError> {
    let mut blocks = parse_checkpoint(text, origin)?;
    for (name, target) in targets.iter_mut() {
        let pos = blocks
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| DiffError::CheckpointMissing { name: name.clone() })?;
        let (_, loaded) = blocks.remove(pos);
        if loaded.shape() != target.shape() {
            return Err(DiffError::CheckpointShape {
                name: name.clone(),
                expected: format!("{:?}", target.shape()),
                got: format!("{:?}", loaded.shape()),
            });
        }
        **target = loaded;
    }
    if let Some((name, _)) = blocks.into_iter().next() {
        return Err(DiffError::CheckpointUnused { name });
    }
    Ok(())
}
