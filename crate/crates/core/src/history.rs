//! Per-epoch loss history, written as CSV for plotting.

use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossHistory {
    pub records: Vec<EpochRecord>,
}

impl LossHistory {
    pub fn push(&mut self, epoch: usize, split: Split, loss: f64, accuracy: Option<f64>) {
        self.records.push(EpochRecord {
            epoch,
            split,
            loss,
            accuracy,
        });
    }

    pub fn last(&self, split: Split) -> Option<&EpochRecord> {
        self.records.iter().rev().find(|r| r.split == split)
    }

    /// `epoch,split,loss[,accuracy]`; the accuracy column is written when
    /// `with_accuracy` is set.
    pub fn write_csv<W: Write>(&self, mut w: W, with_accuracy: bool) -> std::io::Result<()> {
        if with_accuracy {
            writeln!(w, "epoch,split,loss,accuracy")?;
        } else {
            writeln!(w, "epoch,split,loss")?;
        }
        for r in &self.records {
            write!(w, "{},{},{:.6}", r.epoch, r.split, r.loss)?;
            if with_accuracy {
                match r.accuracy {
                    Some(a) => write!(w, ",{a:.6}")?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, with_accuracy: bool) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f), with_accuracy)
            .map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layouts() {
        let mut h = LossHistory::default();
        h.push(1, Split::Train, 2.5, Some(0.25));
        h.push(1, Split::Validation, 2.75, None);
        let mut buf = Vec::new();
        h.write_csv(&mut buf, true).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,split,loss,accuracy\n1,train,2.500000,0.250000\n1,validation,2.750000,\n"
        );
        let mut buf = Vec::new();
        h.write_csv(&mut buf, false).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("epoch,split,loss\n1,train,2.500000\n"));
        assert_eq!(h.last(Split::Train).unwrap().loss, 2.5);
    }
}
