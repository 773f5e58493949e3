use std::io::Write;

use nalgebra::DMatrix;

/// Temperatures on a tensor grid; `values[(i, j)]` sits at `(r[i], z[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl Field {
    pub fn max(&self) -> f64 {
        self.values.max()
    }

    pub fn min(&self) -> f64 {
        self.values.min()
    }

    /// Grid location `(r, z)` of the first element equal to `target`.
    fn locate(&self, target: f64) -> (f64, f64) {
        let (idx, _) = self
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| **v == target)
            .expect("extreme value is an element of the field");
        let nr = self.values.nrows();
        (self.r[idx % nr], self.z[idx / nr])
    }

    pub fn argmax(&self) -> (f64, f64) {
        self.locate(self.max())
    }

    pub fn argmin(&self) -> (f64, f64) {
        self.locate(self.min())
    }

    /// CSV dump: header row holds the z coordinates (after an `r\z` corner
    /// cell), each following row starts with its r coordinate.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "r\\z")?;
        for z in &self.z {
            write!(w, ",{z}")?;
        }
        writeln!(w)?;
        for (i, r) in self.r.iter().enumerate() {
            write!(w, "{r}")?;
            for j in 0..self.z.len() {
                write!(w, ",{}", self.values[(i, j)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}
