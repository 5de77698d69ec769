//! Plain-text checkpoint container.
//!
//! ```text
//! hyperlfh-checkpoint 1
//! meta <key> = <value>
//! matrix <name> <rows> <cols>
//! <one line of space-separated values per row>
//! end
//! ```
//! Values are written in shortest round-trip decimal form, so a 64-bit
//! model reloads bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::{Matrix, ParamStore, Real};

pub const CHECKPOINT_MAGIC: &str = "hyperlfh-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub matrices: Vec<(String, Matrix<f64>)>,
}

impl Checkpoint {
    pub fn from_store<T: Real>(store: &ParamStore<T>, meta: Vec<(String, String)>) -> Self {
        let matrices = store
            .ids()
            .map(|id| (store.name(id).to_string(), store.get(id).cast::<f64>()))
            .collect();
        Self { meta, matrices }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Copies every stored matrix into the parameter of the same name.
    /// Names and shapes must match exactly.
    pub fn restore_into<T: Real>(&self, store: &mut ParamStore<T>) -> Result<()> {
        if self.matrices.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} matrices, model has {} parameters",
                self.matrices.len(),
                store.len()
            )));
        }
        for (name, m) in &self.matrices {
            let id = store
                .find(name)
                .ok_or_else(|| Error::Checkpoint(format!("model has no parameter {name}")))?;
            if store.get(id).shape() != m.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: checkpoint shape {:?}, model shape {:?}",
                    m.shape(),
                    store.get(id).shape()
                )));
            }
            *store.get_mut(id) = m.cast();
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n");
        for (k, v) in &self.meta {
            writeln!(s, "meta {k} = {v}").expect("write to string");
        }
        for (name, m) in &self.matrices {
            writeln!(s, "matrix {name} {} {}", m.rows(), m.cols()).expect("write to string");
            for r in 0..m.rows() {
                let row: Vec<String> = m.row(r).iter().map(|x| x.to_string()).collect();
                s.push_str(&row.join(" "));
                s.push('\n');
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let bad = |line: usize, msg: String| Error::Checkpoint(format!("line {line}: {msg}"));
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
        let version = header
            .strip_prefix(CHECKPOINT_MAGIC)
            .map(str::trim)
            .ok_or_else(|| bad(1, format!("missing {CHECKPOINT_MAGIC} header")))?;
        if version != CHECKPOINT_VERSION.to_string() {
            return Err(bad(1, format!("unsupported format version {version}")));
        }
        let mut meta = Vec::new();
        let mut matrices = Vec::new();
        let mut finished = false;
        while let Some((no, line)) = lines.next() {
            if line == "end" {
                finished = true;
                break;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest
                    .split_once(" = ")
                    .ok_or_else(|| bad(no, "meta line without ' = '".into()))?;
                meta.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("matrix ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let [name, rows, cols] = parts[..] else {
                    return Err(bad(no, "matrix line needs name, rows and cols".into()));
                };
                let rows: usize = rows.parse().map_err(|_| bad(no, format!("bad row count {rows:?}")))?;
                let cols: usize = cols.parse().map_err(|_| bad(no, format!("bad column count {cols:?}")))?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (rno, row) = lines.next().ok_or_else(|| bad(no, format!("truncated matrix {name}")))?;
                    let vals = row
                        .split_whitespace()
                        .map(|t| t.parse::<f64>().map_err(|_| bad(rno, format!("bad number {t:?}"))))
                        .collect::<Result<Vec<_>>>()?;
                    if vals.len() != cols {
                        return Err(bad(rno, format!("expected {cols} values, found {}", vals.len())));
                    }
                    data.extend(vals);
                }
                matrices.push((name.to_string(), Matrix::from_vec(rows, cols, data)?));
            } else {
                return Err(bad(no, format!("unrecognized line {line:?}")));
            }
        }
        if !finished {
            return Err(Error::Checkpoint("missing end marker".into()));
        }
        Ok(Self { meta, matrices })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("a", Matrix::from_rows(&[[0.1, -2.5e-17], [3.0, f64::MIN_POSITIVE]]));
        s.add("b.c", Matrix::scalar(1.0 / 3.0));
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let c = Checkpoint::from_store(&store(), vec![("train.alpha".into(), "0.1".into())]);
        let back = Checkpoint::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.meta("train.alpha"), Some("0.1"));
        let mut target = store();
        *target.get_mut(crate::numcore::ParamId(1)) = Matrix::scalar(0.0);
        back.restore_into(&mut target).unwrap();
        assert_eq!(target.values(), store().values());
    }

    #[test]
    fn rejects_damage() {
        let text = Checkpoint::from_store(&store(), vec![]).to_text();
        assert!(Checkpoint::parse(&text.replace("checkpoint 1", "checkpoint 2")).is_err());
        assert!(Checkpoint::parse(&text.replace("end\n", "")).is_err());
        assert!(Checkpoint::parse(&text.replace("0.1 ", "x ")).is_err());
        let mut other = ParamStore::<f64>::new();
        other.add("a", Matrix::zeros(1, 1));
        other.add("b.c", Matrix::zeros(1, 1));
        let c = Checkpoint::parse(&text).unwrap();
        assert!(matches!(c.restore_into(&mut other), Err(Error::Checkpoint(_))));
    }
}
