//! Label constraint matrix and discriminative mask.
//!
//! The constraint matrix stacks one-hot class indicators for the labeled
//! samples over an identity block for the unlabeled ones, so same-label
//! samples share a single coefficient row. The discriminative mask zeroes
//! each labeled class's own latent subspace and penalizes mass everywhere
//! else. With no labels, the constraint degenerates to the identity and the
//! mask to all zeros.

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LabelConstraint {
    n: usize,
    l: usize,
    c: usize,
    m_s: usize,
    /// `row_map[i]` is the coefficient row shared by sample `i`.
    row_map: Vec<usize>,
    /// Binary mask, `rows() x d()`.
    disc_mask: Array2<f64>,
}

impl LabelConstraint {
    /// Builds the constraint for labeled-first `labels` with `c` classes and
    /// per-class subspace width `m_s` (latent dimension `d = c * m_s`).
    pub fn build(labels: &[Option<usize>], c: usize, m_s: usize) -> Result<Self> {
        let n = labels.len();
        let l = labels.iter().take_while(|l| l.is_some()).count();
        if let Some(offset) = labels[l..].iter().position(Option::is_some) {
            return Err(Error::LabeledAfterUnlabeled { sample: l + offset });
        }
        let mut seen = vec![false; c];
        for (sample, &label) in labels.iter().take(l).enumerate() {
            let label = label.unwrap();
            if label >= c {
                return Err(Error::LabelOutOfRange {
                    sample,
                    label,
                    classes: c,
                });
            }
            seen[label] = true;
        }
        if l > 0 {
            if let Some(class) = seen.iter().position(|&s| !s) {
                return Err(Error::EmptyClass { class });
            }
        }

        let rows = if l == 0 { n } else { n - l + c };
        let d = c * m_s;
        let row_map: Vec<usize> = (0..n)
            .map(|i| {
                if l == 0 {
                    i
                } else if i < l {
                    labels[i].unwrap()
                } else {
                    c + (i - l)
                }
            })
            .collect();

        let mut disc_mask = Array2::zeros((rows, d));
        if l > 0 {
            for class in 0..c {
                for h in 0..d {
                    if h / m_s != class {
                        disc_mask[[class, h]] = 1.0;
                    }
                }
            }
        }

        Ok(Self {
            n,
            l,
            c,
            m_s,
            row_map,
            disc_mask,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn labeled_count(&self) -> usize {
        self.l
    }

    pub fn class_count(&self) -> usize {
        self.c
    }

    pub fn subspace_dim(&self) -> usize {
        self.m_s
    }

    /// Number of coefficient rows: `n - l + c`, or `n` when unlabeled.
    pub fn rows(&self) -> usize {
        self.row_map.iter().max().map_or(0, |&r| r + 1)
    }

    /// Latent dimension `d = c * m_s`.
    pub fn latent_dim(&self) -> usize {
        self.c * self.m_s
    }

    /// The discriminative mask (`rows() x d`), zero when no sample is labeled.
    pub fn disc_mask(&self) -> &Array2<f64> {
        &self.disc_mask
    }

    pub fn coefficient_row(&self, sample: usize) -> usize {
        self.row_map[sample]
    }

    /// Computes the per-sample representation `A_lc * Z` by row gathering;
    /// same-label samples get bitwise-identical rows.
    pub fn expand(&self, z: &Array2<f64>) -> Array2<f64> {
        assert_eq!(z.nrows(), self.rows(), "coefficient row count");
        let mut h = Array2::zeros((self.n, z.ncols()));
        for (i, &r) in self.row_map.iter().enumerate() {
            h.row_mut(i).assign(&z.row(r));
        }
        h
    }

    /// Computes `A_lc^T * M` by scatter-adding sample rows onto their
    /// coefficient rows.
    pub fn reduce(&self, m: &Array2<f64>) -> Array2<f64> {
        assert_eq!(m.nrows(), self.n, "sample row count");
        let mut out = Array2::zeros((self.rows(), m.ncols()));
        for (i, &r) in self.row_map.iter().enumerate() {
            let mut row = out.row_mut(r);
            row += &m.row(i);
        }
        out
    }

    /// Dense `n x rows()` form of the constraint matrix.
    pub fn dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.rows()));
        for (i, &r) in self.row_map.iter().enumerate() {
            a[[i, r]] = 1.0;
        }
        a
    }

    /// Dense `l x c` one-hot block of the labeled samples.
    pub fn class_indicator(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.l, self.c));
        for i in 0..self.l {
            m[[i, self.row_map[i]]] = 1.0;
        }
        m
    }
}
