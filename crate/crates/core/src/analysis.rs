//! Binormalization, localization diagnostics, the edge/bulk vicinity measure
//! and tabular datasets for the standard figures.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{ssh_closed_eigenstates, SshState};
use crate::error::{Error, Result};
use crate::linalg::{canonical_gauge, norm2, pair, C64, ZERO};
use crate::model::{build_dense, pbc_full_eigenstates, Boundary, HatanoNelsonParams, ImpuritySet, LatticeModel, SshParams};
use crate::obc::{epsilon_sweep, obc_eigenstates_green_all, obc_spectrum_hn, obc_spectrum_ssh};
use crate::oracle::dense_eig;
use crate::spectrum::{EigenpairSet, Normalization, StateLabel};

/// Normalized biorthogonal overlap below which a pair counts as exceptional.
pub const EP_PROXIMITY: f64 = 1e-10;

/// Rescales every pair so that `<L_k|R_k> = 1`, splitting the factor evenly.
pub fn binormalize(set: &EigenpairSet) -> Result<EigenpairSet> {
    let mut right = set.right.clone();
    let mut left = set.left.clone();
    for k in 0..set.len() {
        let r = set.right.column(k);
        let l = set.left.column(k);
        let p = pair(l, r);
        let scale = norm2(l) * norm2(r);
        let normalized = if scale > 0.0 { p.norm() / scale } else { 0.0 };
        if !(normalized >= EP_PROXIMITY) {
            return Err(Error::ExceptionalPoint { index: k, norm: normalized });
        }
        let s = p.sqrt();
        right.column_mut(k).mapv_inplace(|z| z / s);
        left.column_mut(k).mapv_inplace(|z| z / s);
    }
    EigenpairSet::new(right, left, set.spectrum.clone(), Normalization::Binormalized)
}

#[derive(Debug, Clone, Serialize)]
pub struct StateLocalization {
    /// 1-based site of the largest modulus.
    pub max_site: usize,
    /// First and last sites whose modulus ties the maximum (relative `1e-9`).
    pub max_span: (usize, usize),
    pub ipr: f64,
    /// `exp(slope)` of a log-linear fit through the local maxima of `|psi_n|`.
    pub envelope_ratio: Option<f64>,
    pub peaks: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalizationReport {
    pub n_sites: usize,
    /// Number of sites counted as an edge at either end.
    pub edge_width: usize,
    pub states: Vec<StateLocalization>,
    pub fraction_left: f64,
    pub fraction_right: f64,
}

impl LocalizationReport {
    pub fn fraction_edge(&self) -> f64 {
        self.fraction_left + self.fraction_right
    }
}

pub fn state_localization(psi: ArrayView1<C64>) -> StateLocalization {
    let a: Vec<f64> = psi.iter().map(|z| z.norm()).collect();
    let max_site = a
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map_or(0, |(i, _)| i + 1);
    let top = a.iter().copied().fold(0.0, f64::max);
    let tied: Vec<usize> = (0..a.len()).filter(|&i| a[i] >= top * (1.0 - 1e-9)).map(|i| i + 1).collect();
    let max_span = (*tied.first().unwrap_or(&0), *tied.last().unwrap_or(&0));
    let w2: f64 = a.iter().map(|x| x * x).sum();
    let ipr = if w2 > 0.0 { a.iter().map(|x| x.powi(4)).sum::<f64>() / (w2 * w2) } else { 0.0 };
    let last = a.len().saturating_sub(1);
    let peaks: Vec<usize> = (0..a.len())
        .filter(|&i| a[i] > 0.0)
        .filter(|&i| (i == 0 || a[i] >= a[i - 1]) && (i == last || a[i] >= a[i + 1]))
        .collect();
    let envelope_ratio = (peaks.len() >= 2).then(|| {
        let m = peaks.len() as f64;
        let xs: Vec<f64> = peaks.iter().map(|&i| i as f64).collect();
        let ys: Vec<f64> = peaks.iter().map(|&i| a[i].ln()).collect();
        let mx = xs.iter().sum::<f64>() / m;
        let my = ys.iter().sum::<f64>() / m;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        (sxy / sxx).exp()
    });
    StateLocalization {
        max_site,
        max_span,
        ipr,
        envelope_ratio,
        peaks: peaks.len(),
    }
}

/// Localization diagnostics for states stored as columns.
///
/// A state is edge-localized when every site attaining its largest modulus
/// lies within the outer `ceil(n_sites / 10)` sites at one end.
pub fn localization_report(states: ArrayView2<C64>) -> Result<LocalizationReport> {
    let n_sites = states.nrows();
    if states.ncols() == 0 || n_sites == 0 {
        return Err(Error::InvalidParameter("localization report needs at least one state".into()));
    }
    let edge_width = n_sites.div_ceil(10);
    let per_state: Vec<StateLocalization> = states.columns().into_iter().map(state_localization).collect();
    let count = per_state.len() as f64;
    let left = per_state.iter().filter(|s| s.max_span.1 <= edge_width).count() as f64;
    let right = per_state
        .iter()
        .filter(|s| s.max_span.0 > n_sites - edge_width && s.max_span.1 > edge_width)
        .count() as f64;
    Ok(LocalizationReport {
        n_sites,
        edge_width,
        states: per_state,
        fraction_left: left / count,
        fraction_right: right / count,
    })
}

/// Phase and scale convention applied to each bulk state before summation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gauge {
    /// Unit norm with the largest component real and positive.
    #[default]
    LargestReal,
    /// Unit norm, phase as produced.
    None,
}

/// Where the open-lattice SSH states come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateSource {
    #[default]
    ClosedForm,
    Green,
    Oracle,
}

#[derive(Debug, Clone, Serialize)]
pub struct VicinityResult {
    pub t1: f64,
    pub gamma: f64,
    pub n_cells: usize,
    pub gauge: Gauge,
    pub source: StateSource,
    pub t2_grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl VicinityResult {
    pub fn n_sites(&self) -> usize {
        2 * self.n_cells
    }

    /// First `t2` where the curve reaches 1/2, by linear interpolation.
    pub fn crossover(&self) -> Option<f64> {
        self.t2_grid
            .windows(2)
            .zip(self.values.windows(2))
            .find(|(_, v)| (v[0] - 0.5) * (v[1] - 0.5) <= 0.0 && v[0] != v[1])
            .map(|(t, v)| t[0] + (0.5 - v[0]) * (t[1] - t[0]) / (v[1] - v[0]))
    }
}

fn gauge_fix(v: ArrayView1<C64>, gauge: Gauge) -> Array1<C64> {
    match gauge {
        Gauge::LargestReal => canonical_gauge(v),
        Gauge::None => {
            let n = norm2(v);
            if n > 0.0 {
                v.mapv(|z| z / n)
            } else {
                v.to_owned()
            }
        }
    }
}

/// Right zero mode and bulk right states of the open SSH chain (states as columns).
fn ssh_right_states(p: &SshParams, source: StateSource) -> Result<(Array1<C64>, Array2<C64>)> {
    let scale = p.energy_scale();
    match source {
        StateSource::ClosedForm => {
            let (zero, _) = ssh_closed_eigenstates(p, SshState::Zero)?;
            let spec = obc_spectrum_ssh(p)?;
            let mut bulk = Array2::zeros((2 * p.n - 1, spec.len() - 1));
            let mut col = 0;
            for label in spec.labels() {
                if let StateLabel::Standing { q, band } = *label {
                    let (r, _) = ssh_closed_eigenstates(p, SshState::Band { q, band })?;
                    bulk.column_mut(col).assign(&r);
                    col += 1;
                }
            }
            Ok((zero, bulk))
        }
        StateSource::Green => {
            let model = LatticeModel::ssh(p, Boundary::Periodic)?.opened()?;
            let spec = obc_spectrum_ssh(p)?;
            let states = obc_eigenstates_green_all(&model, &spec)?;
            let mut zero = None;
            let mut bulk = Array2::zeros((model.dimension(), spec.len() - 1));
            let mut col = 0;
            for (st, label) in states.into_iter().zip(spec.labels()) {
                if *label == StateLabel::ZeroMode {
                    zero = Some(st.right);
                } else {
                    bulk.column_mut(col).assign(&st.right);
                    col += 1;
                }
            }
            Ok((zero.ok_or_else(|| Error::Identification("zero mode missing".into()))?, bulk))
        }
        StateSource::Oracle => {
            let model = LatticeModel::ssh(p, Boundary::Periodic)?.opened()?;
            let eig = dense_eig(&build_dense(&model, &ImpuritySet::empty())?)?;
            let k0 = eig.nearest(ZERO);
            if eig.eigenvalues[k0].norm() > 1e-8 * scale {
                return Err(Error::Identification(format!(
                    "no eigenvalue within 1e-8 of zero (closest {})",
                    eig.eigenvalues[k0]
                )));
            }
            let others: Vec<usize> = (0..eig.len()).filter(|&k| k != k0).collect();
            let bulk = eig.right.select(ndarray::Axis(1), &others);
            Ok((eig.right.column(k0).to_owned(), bulk))
        }
    }
}

/// `sum_n |<n|B>| |<n|E0>|` for the unit-normalized zero mode `E0` and the
/// normalized sum `B` of all gauge-fixed bulk right states.
pub fn vicinity(p: &SshParams, gauge: Gauge, source: StateSource) -> Result<f64> {
    let (zero, bulk) = ssh_right_states(p, source)?;
    let mut sum = Array1::<C64>::zeros(zero.len());
    for col in bulk.columns() {
        sum += &gauge_fix(col, gauge);
    }
    let ns = norm2(sum.view());
    let nz = norm2(zero.view());
    if ns == 0.0 || nz == 0.0 {
        return Err(Error::Identification("vanishing bulk sum or zero mode".into()));
    }
    Ok(sum.iter().zip(zero.iter()).map(|(b, e)| b.norm() * e.norm()).sum::<f64>() / (ns * nz))
}

/// Vicinity over a grid of intercell hoppings, in parallel.
pub fn vicinity_scan(
    t1: f64,
    gamma: f64,
    n_cells: usize,
    t2_grid: &[f64],
    gauge: Gauge,
    source: StateSource,
) -> Result<VicinityResult> {
    if n_cells < 4 {
        return Err(Error::InvalidParameter(format!("vicinity scan needs N >= 4 cells, got {n_cells}")));
    }
    if t2_grid.is_empty() || t2_grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidParameter("t2 grid must be nonempty, finite and positive".into()));
    }
    let values = t2_grid
        .par_iter()
        .map(|&t2| vicinity(&SshParams::new(t1, t2, gamma, n_cells)?, gauge, source))
        .collect::<Result<Vec<_>>>()?;
    Ok(VicinityResult {
        t1,
        gamma,
        n_cells,
        gauge,
        source,
        t2_grid: t2_grid.to_vec(),
        values,
    })
}

/// A cell of a [`Table`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v:e}"),
            Value::Text(v) => f.write_str(v),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_owned())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

/// Named columnar dataset.
#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_owned(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig1,
    Fig3,
    Fig4,
}

impl std::str::FromStr for Figure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Figure::Fig1),
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            other => Err(Error::InvalidParameter(format!("unknown figure '{other}'"))),
        }
    }
}

/// Overrides for the figure defaults.
#[derive(Debug, Clone, Default)]
pub struct FigureParams {
    /// Periodic ring size in cells (fig1: 100, fig3: 20).
    pub n_cells: Option<usize>,
    /// Hopping asymmetries (fig1: {0, 1/20}; fig3 uses the first, default 0.3).
    pub deltas: Option<Vec<f64>>,
    pub epsilon_grid: Option<Vec<f64>>,
    /// Open-chain sizes in sites (fig4: {20, 40, 200}).
    pub sizes: Option<Vec<usize>>,
    pub t2_grid: Option<Vec<f64>>,
    pub gauge: Gauge,
}

pub fn log_grid(min: f64, max: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![min];
    }
    let (a, b) = (min.ln(), max.ln());
    (0..steps)
        .map(|i| (a + (b - a) * i as f64 / (steps - 1) as f64).exp())
        .collect()
}

pub fn linear_grid(min: f64, max: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![min];
    }
    (0..steps).map(|i| min + (max - min) * i as f64 / (steps - 1) as f64).collect()
}

pub fn figure_data(fig: Figure, params: &FigureParams) -> Result<Table> {
    match fig {
        Figure::Fig1 => fig1(params),
        Figure::Fig3 => fig3(params),
        Figure::Fig4 => fig4(params),
    }
}

/// Site profiles of the state with the largest real energy, periodic and vacancy-opened.
fn fig1(params: &FigureParams) -> Result<Table> {
    let n = params.n_cells.unwrap_or(100);
    let deltas = params.deltas.clone().unwrap_or_else(|| vec![0.0, 0.05]);
    let mut table = Table::new("fig1", &["panel", "boundary", "delta", "site", "abs_amplitude"]);
    for boundary in ["pbc", "obc"] {
        for &delta in &deltas {
            let p = HatanoNelsonParams::new(1.0, delta, n)?;
            let ring = LatticeModel::hatano_nelson(&p, Boundary::Periodic)?;
            let state = if boundary == "pbc" {
                let set = pbc_full_eigenstates(&ring)?;
                let k = representative(set.spectrum.eigenvalues());
                set.right.column(k).to_owned()
            } else {
                let spec = obc_spectrum_hn(&p)?;
                let k = representative(spec.eigenvalues());
                let sub = crate::spectrum::ComplexSpectrum::unlabeled(vec![spec.eigenvalues()[k]]);
                obc_eigenstates_green_all(&ring.opened()?, &sub)?.remove(0).right
            };
            let nrm = norm2(state.view());
            let panel = format!("{boundary}-delta={delta}");
            for (i, z) in state.iter().enumerate() {
                table.push(vec![
                    panel.as_str().into(),
                    boundary.into(),
                    delta.into(),
                    (i + 1).into(),
                    (z.norm() / nrm).into(),
                ]);
            }
        }
    }
    Ok(table)
}

fn representative(values: &[C64]) -> usize {
    (0..values.len())
        .max_by(|&a, &b| values[a].re.total_cmp(&values[b].re).then(values[b].im.abs().total_cmp(&values[a].im.abs())))
        .unwrap_or(0)
}

/// Tracked impurity eigenvalues along a logarithmic potential grid.
fn fig3(params: &FigureParams) -> Result<Table> {
    let n = params.n_cells.unwrap_or(20);
    let delta = params.deltas.as_ref().and_then(|d| d.first().copied()).unwrap_or(0.3);
    let grid = params.epsilon_grid.clone().unwrap_or_else(|| log_grid(1e-2, 1e6, 200));
    let p = HatanoNelsonParams::new(1.0, delta, n)?;
    let ring = LatticeModel::hatano_nelson(&p, Boundary::Periodic)?;
    let sweep = epsilon_sweep(&ring, ring.last_site(), &grid)?;
    let mut table = Table::new("fig3", &["epsilon", "track", "re_energy", "im_energy", "ep_flags"]);
    for (g, spec) in sweep.spectra.iter().enumerate() {
        let flags = sweep.ep_flags[g].len();
        for (i, z) in spec.eigenvalues().iter().enumerate() {
            table.push(vec![grid[g].into(), i.into(), z.re.into(), z.im.into(), flags.into()]);
        }
    }
    Ok(table)
}

/// Vicinity curves for several chain sizes at `gamma = t1 = 1`.
fn fig4(params: &FigureParams) -> Result<Table> {
    let sizes = params.sizes.clone().unwrap_or_else(|| vec![20, 40, 200]);
    let grid = params.t2_grid.clone().unwrap_or_else(|| linear_grid(0.05, 2.0, 40));
    let mut table = Table::new("fig4", &["n_sites", "t2_over_t1", "vicinity"]);
    for &sites in &sizes {
        if sites % 2 != 0 {
            return Err(Error::InvalidParameter(format!("chain size {sites} must be an even site count")));
        }
        let res = vicinity_scan(1.0, 1.0, sites / 2, &grid, params.gauge, StateSource::ClosedForm)?;
        for (t2, v) in res.t2_grid.iter().zip(&res.values) {
            table.push(vec![sites.into(), (*t2).into(), (*v).into()]);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::oracle::dense_eig;

    fn hn_obc_pairs(delta: f64, n: usize) -> EigenpairSet {
        let p = HatanoNelsonParams::new(1.0, delta, n).unwrap();
        let m = LatticeModel::hatano_nelson(&p, Boundary::Open).unwrap();
        dense_eig(&build_dense(&m, &ImpuritySet::empty()).unwrap()).unwrap().eigenpairs()
    }

    #[test]
    fn binormalized_set_is_complete() {
        let set = binormalize(&hn_obc_pairs(0.3, 20)).unwrap();
        assert!(set.completeness_residual() < 1e-9);
        assert!(set.biorthogonality_residual() < 1e-9);
    }

    #[test]
    fn binormalization_is_idempotent() {
        let once = binormalize(&hn_obc_pairs(0.2, 12)).unwrap();
        let twice = binormalize(&once).unwrap();
        assert!(max_abs_diff(&once.right, &twice.right) < 1e-12);
        assert!(max_abs_diff(&once.left, &twice.left) < 1e-12);
    }

    #[test]
    fn orthogonal_pair_is_exceptional() {
        let right = Array2::from_shape_vec((2, 1), vec![C64::new(1.0, 0.0), ZERO]).unwrap();
        let left = Array2::from_shape_vec((2, 1), vec![ZERO, C64::new(1.0, 0.0)]).unwrap();
        let set = EigenpairSet::new(
            right,
            left,
            crate::spectrum::ComplexSpectrum::unlabeled(vec![ZERO]),
            Normalization::Raw,
        )
        .unwrap();
        assert!(matches!(binormalize(&set), Err(Error::ExceptionalPoint { index: 0, .. })));
    }

    #[test]
    fn plane_waves_are_delocalized() {
        let p = HatanoNelsonParams::new(1.0, 0.4, 16).unwrap();
        let set = pbc_full_eigenstates(&LatticeModel::hatano_nelson(&p, Boundary::Periodic).unwrap()).unwrap();
        let rep = localization_report(set.right.view()).unwrap();
        for s in &rep.states {
            assert!((s.ipr - 1.0 / 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_fit_recovers_geometric_growth() {
        let v: Array1<C64> = (1..40).map(|n| C64::new(1.1f64.powi(n) * (0.9 * n as f64).sin(), 0.0)).collect();
        let s = state_localization(v.view());
        assert!((s.envelope_ratio.unwrap() / 1.1 - 1.0).abs() < 0.01);
        assert!(s.max_site > 30);
    }

    #[test]
    fn vicinity_sources_agree() {
        let p = SshParams::new(1.0, 0.8, 1.0, 10).unwrap();
        let closed = vicinity(&p, Gauge::LargestReal, StateSource::ClosedForm).unwrap();
        let green = vicinity(&p, Gauge::LargestReal, StateSource::Green).unwrap();
        let oracle = vicinity(&p, Gauge::LargestReal, StateSource::Oracle).unwrap();
        assert!((closed - green).abs() < 1e-8);
        assert!((closed - oracle).abs() < 1e-8);
    }

    #[test]
    fn crossover_interpolates() {
        let r = VicinityResult {
            t1: 1.0,
            gamma: 1.0,
            n_cells: 10,
            gauge: Gauge::LargestReal,
            source: StateSource::ClosedForm,
            t2_grid: vec![0.0, 1.0],
            values: vec![0.0, 1.0],
        };
        assert!((r.crossover().unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fig1_has_four_panels() {
        let t = figure_data(Figure::Fig1, &FigureParams { n_cells: Some(10), ..Default::default() }).unwrap();
        assert_eq!(t.rows.len(), 2 * 10 + 2 * 9);
    }
}
