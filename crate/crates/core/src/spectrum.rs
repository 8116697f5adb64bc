//! Spectra and eigenpair containers shared by every solver.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{identity, max_abs_diff, pair, C64};

/// Branch of a two-band spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Single,
    Upper,
    Lower,
}

impl Band {
    pub fn sign(self) -> f64 {
        match self {
            Band::Lower => -1.0,
            _ => 1.0,
        }
    }
}

/// Identifies one eigenvalue of a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateLabel {
    /// Periodic Bloch state with momentum `k_q = 2 pi q / N`, `q = 1..=N`.
    Bloch { q: usize, band: usize },
    /// Open-lattice standing wave labelled by the half momentum `k_q / 2`, `q = 1..N`.
    Standing { q: usize, band: Band },
    /// Zero-energy mode of the broken-cell SSH lattice.
    ZeroMode,
    /// Plain position in a numerically obtained list.
    Index(usize),
}

impl StateLabel {
    pub fn q(&self) -> Option<usize> {
        match *self {
            StateLabel::Bloch { q, .. } | StateLabel::Standing { q, .. } => Some(q),
            _ => None,
        }
    }
}

impl std::fmt::Display for StateLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StateLabel::Bloch { q, band } => write!(f, "bloch:q={q}:band={band}"),
            StateLabel::Standing { q, band } => {
                let b = match band {
                    Band::Single => "",
                    Band::Upper => ":+",
                    Band::Lower => ":-",
                };
                write!(f, "open:q={q}{b}")
            }
            StateLabel::ZeroMode => write!(f, "zero"),
            StateLabel::Index(i) => write!(f, "#{i}"),
        }
    }
}

/// Ordered multiset of complex eigenvalues with one unique label per value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSpectrum {
    eigenvalues: Vec<C64>,
    labels: Vec<StateLabel>,
}

impl ComplexSpectrum {
    pub fn new(eigenvalues: Vec<C64>, labels: Vec<StateLabel>) -> Result<Self> {
        if eigenvalues.len() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} eigenvalues but {} labels",
                eigenvalues.len(),
                labels.len()
            )));
        }
        let mut seen = HashSet::with_capacity(labels.len());
        for l in &labels {
            if !seen.insert(*l) {
                return Err(Error::InvalidParameter(format!("duplicate label {l}")));
            }
        }
        Ok(Self { eigenvalues, labels })
    }

    /// Spectrum labelled by list position.
    pub fn unlabeled(eigenvalues: Vec<C64>) -> Self {
        let labels = (0..eigenvalues.len()).map(StateLabel::Index).collect();
        Self { eigenvalues, labels }
    }

    pub fn eigenvalues(&self) -> &[C64] {
        &self.eigenvalues
    }

    pub fn labels(&self) -> &[StateLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateLabel, &C64)> {
        self.labels.iter().zip(self.eigenvalues.iter())
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn conj(&self) -> Self {
        Self {
            eigenvalues: self.eigenvalues.iter().map(|z| z.conj()).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn into_parts(self) -> (Vec<C64>, Vec<StateLabel>) {
        (self.eigenvalues, self.labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Raw,
    Binormalized,
}

/// Paired right and left eigenstates.
///
/// Column `k` of `right` holds the amplitudes `<n|R_k>`; column `k` of `left`
/// holds the bra components `<L_k|n>`, so `<L_j|R_k> = sum_n left[n, j] right[n, k]`
/// without complex conjugation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenpairSet {
    pub right: Array2<C64>,
    pub left: Array2<C64>,
    pub spectrum: ComplexSpectrum,
    pub normalization: Normalization,
}

impl EigenpairSet {
    pub fn new(
        right: Array2<C64>,
        left: Array2<C64>,
        spectrum: ComplexSpectrum,
        normalization: Normalization,
    ) -> Result<Self> {
        if right.dim() != left.dim() || right.ncols() != spectrum.len() {
            return Err(Error::InvalidParameter(format!(
                "eigenpair shapes disagree: right {:?}, left {:?}, {} eigenvalues",
                right.dim(),
                left.dim(),
                spectrum.len()
            )));
        }
        Ok(Self {
            right,
            left,
            spectrum,
            normalization,
        })
    }

    pub fn len(&self) -> usize {
        self.spectrum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectrum.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.right.nrows()
    }

    pub fn right_state(&self, k: usize) -> ArrayView1<'_, C64> {
        self.right.column(k)
    }

    pub fn left_state(&self, k: usize) -> ArrayView1<'_, C64> {
        self.left.column(k)
    }

    /// `<L_j|R_k>`.
    pub fn pairing(&self, j: usize, k: usize) -> C64 {
        pair(self.left.column(j), self.right.column(k))
    }

    /// `sum_k |R_k><L_k|`.
    pub fn completeness(&self) -> Array2<C64> {
        self.right.dot(&self.left.t())
    }

    /// Max-entry deviation of `sum_k |R_k><L_k|` from the identity.
    pub fn completeness_residual(&self) -> f64 {
        max_abs_diff(&self.completeness(), &identity(self.dimension()))
    }

    /// Max-entry deviation of `<L_j|R_k>` from `delta_jk`.
    pub fn biorthogonality_residual(&self) -> f64 {
        let gram = self.left.t().dot(&self.right);
        max_abs_diff(&gram, &identity(self.len()))
    }

    /// `sum_k lambda_k |R_k><L_k|`.
    pub fn reconstruct(&self) -> Array2<C64> {
        let mut scaled = self.right.clone();
        for (k, lambda) in self.spectrum.eigenvalues().iter().enumerate() {
            scaled.column_mut(k).mapv_inplace(|z| z * lambda);
        }
        scaled.dot(&self.left.t())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_labels_are_rejected() {
        let err = ComplexSpectrum::new(
            vec![C64::new(1.0, 0.0), C64::new(2.0, 0.0)],
            vec![StateLabel::ZeroMode, StateLabel::ZeroMode],
        );
        assert!(err.is_err());
    }

    #[test]
    fn label_display() {
        let l = StateLabel::Standing { q: 3, band: Band::Lower };
        assert_eq!(l.to_string(), "open:q=3:-");
    }
}
