use clap::ValueEnum;
use ndarray::Array2;
use nhskin::analysis::{binormalize, figure_data, localization_report, vicinity_scan, Figure, FigureParams, Gauge, StateSource, Table};
use nhskin::linalg::C64;
use nhskin::model::{pbc_full_eigenstates, pbc_spectrum, Boundary, HatanoNelsonParams, LatticeModel, SshParams};
use nhskin::obc::{
    epsilon_sweep, impurity_eigenstates_green, obc_eigenstates_green_all, obc_spectrum_hn, obc_spectrum_ssh, GreenEigenstate,
    GreenRoute, PoleProblem,
};
use nhskin::spectrum::{ComplexSpectrum, EigenpairSet, Normalization, StateLabel};
use nhskin::validate::{checks_table, validate_hn, validate_ssh, Check};
use serde::Serialize;
use serde_json::json;

use crate::config::{model_name, BoundaryKind, GridSpec, ModelKind, Options};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureId {
    Fig1,
    Fig3,
    Fig4,
}

impl From<FigureId> for Figure {
    fn from(f: FigureId) -> Self {
        match f {
            FigureId::Fig1 => Figure::Fig1,
            FigureId::Fig3 => Figure::Fig3,
            FigureId::Fig4 => Figure::Fig4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Spectrum,
    States,
    SweepEpsilon,
    Vicinity,
    Figure(FigureId),
    Validate,
}

/// A dataset in both serializations.
pub struct Artifact {
    pub table: Table,
    pub json: serde_json::Value,
    /// Human-readable lines for stderr.
    pub notes: Vec<String>,
    /// Set when the run should end with the validation exit code.
    pub failure: Option<String>,
}

impl Artifact {
    fn new(table: Table, json: serde_json::Value) -> Self {
        Self {
            table,
            json,
            notes: Vec::new(),
            failure: None,
        }
    }
}

const DEFAULT_EPSILON_GRID: &str = "1e-2:1e6:200:log";
const DEFAULT_T2_GRID: &str = "0.05:2:40:lin";

enum Params {
    HatanoNelson(HatanoNelsonParams),
    Ssh(SshParams),
}

struct Lattice {
    kind: ModelKind,
    params: Params,
    ring: LatticeModel,
}

impl Lattice {
    fn parameters_json(&self) -> serde_json::Value {
        match &self.params {
            Params::HatanoNelson(p) => json!({ "J": p.j, "delta": p.delta, "N": p.n }),
            Params::Ssh(p) => json!({ "t1": p.t1, "t2": p.t2, "gamma": p.gamma, "N": p.n }),
        }
    }
}

fn lattice(o: &Options, kind: ModelKind, task: Task) -> Result<Lattice, CliError> {
    o.check_keys(kind)?;
    let sweep = task == Task::SweepEpsilon;
    let (params, ring) = match kind {
        ModelKind::HatanoNelson => {
            let n = o.n.unwrap_or(if sweep { 20 } else { 100 });
            let delta = o.delta.unwrap_or(if sweep { 0.3 } else { 0.05 });
            let p = HatanoNelsonParams::new(o.j.unwrap_or(1.0), delta, n)?;
            let ring = LatticeModel::hatano_nelson(&p, Boundary::Periodic)?;
            (Params::HatanoNelson(p), ring)
        }
        ModelKind::Ssh => {
            let p = SshParams::new(
                o.t1.unwrap_or(1.0),
                o.t2.unwrap_or(2.0),
                o.gamma.unwrap_or(1.0),
                o.n.unwrap_or(20),
            )?;
            let ring = LatticeModel::ssh(&p, Boundary::Periodic)?;
            (Params::Ssh(p), ring)
        }
    };
    Ok(Lattice { kind, params, ring })
}

fn boundary(o: &Options) -> Result<BoundaryKind, CliError> {
    match (o.boundary, o.epsilon) {
        (Some(BoundaryKind::Epsilon), None) => Err(CliError::Config("--boundary epsilon needs --epsilon".into())),
        (Some(b), Some(_)) if b != BoundaryKind::Epsilon => {
            Err(CliError::Config("--epsilon only applies to --boundary epsilon".into()))
        }
        (Some(b), _) => Ok(b),
        (None, Some(_)) => Ok(BoundaryKind::Epsilon),
        (None, None) => Ok(BoundaryKind::Obc),
    }
}

fn boundary_name(b: BoundaryKind) -> &'static str {
    match b {
        BoundaryKind::Pbc => "pbc",
        BoundaryKind::Obc => "obc",
        BoundaryKind::Epsilon => "epsilon",
    }
}

fn grid(spec: &Option<GridSpec>, default: &str) -> Vec<f64> {
    match spec {
        Some(g) => g.values(),
        None => default.parse::<GridSpec>().expect("default grid is valid").values(),
    }
}

/// Options that select physics, by their flag names.
fn physics_keys(o: &Options) -> Vec<&'static str> {
    [
        ("model", o.model.is_some()),
        ("N", o.n.is_some()),
        ("J", o.j.is_some()),
        ("delta", o.delta.is_some()),
        ("t1", o.t1.is_some()),
        ("t2", o.t2.is_some()),
        ("gamma", o.gamma.is_some()),
        ("boundary", o.boundary.is_some()),
        ("epsilon", o.epsilon.is_some()),
        ("epsilon-grid", o.epsilon_grid.is_some()),
        ("t2-grid", o.t2_grid.is_some()),
        ("sizes", o.sizes.is_some()),
        ("gauge", o.gauge.is_some()),
        ("source", o.source.is_some()),
    ]
    .into_iter()
    .filter(|(_, set)| *set)
    .map(|(k, _)| k)
    .collect()
}

fn only_keys(o: &Options, task: &str, allowed: &[&str]) -> Result<(), CliError> {
    let bad: Vec<&str> = physics_keys(o).into_iter().filter(|k| !allowed.contains(k)).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{task} does not accept: {}", bad.join(", "))))
    }
}

pub fn run(task: Task, o: &Options) -> Result<Artifact, CliError> {
    match task {
        Task::Spectrum => spectrum(o),
        Task::States => states(o),
        Task::SweepEpsilon => sweep(o),
        Task::Vicinity => vicinity(o),
        Task::Figure(id) => figure(id, o),
        Task::Validate => validate(o),
    }
}

fn sorted_roots(lat: &Lattice, eps: f64) -> Result<ComplexSpectrum, CliError> {
    let mut roots = PoleProblem::new(&lat.ring, lat.ring.last_site())?.solve(eps, None)?.roots;
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let labels = (0..roots.len()).map(StateLabel::Index).collect();
    Ok(ComplexSpectrum::new(roots, labels)?)
}

fn spectrum_of(lat: &Lattice, b: BoundaryKind, eps: Option<f64>) -> Result<ComplexSpectrum, CliError> {
    Ok(match (b, &lat.params) {
        (BoundaryKind::Pbc, _) => pbc_spectrum(&lat.ring)?,
        (BoundaryKind::Obc, Params::HatanoNelson(p)) => obc_spectrum_hn(p)?,
        (BoundaryKind::Obc, Params::Ssh(p)) => obc_spectrum_ssh(p)?,
        (BoundaryKind::Epsilon, _) => sorted_roots(lat, eps.expect("checked by boundary()"))?,
    })
}

fn header(lat: &Lattice, b: BoundaryKind, eps: Option<f64>) -> serde_json::Value {
    json!({
        "model": model_name(lat.kind),
        "boundary": boundary_name(b),
        "epsilon": eps,
        "parameters": lat.parameters_json(),
    })
}

fn spectrum(o: &Options) -> Result<Artifact, CliError> {
    let lat = lattice(o, o.model.unwrap_or(ModelKind::HatanoNelson), Task::Spectrum)?;
    let b = boundary(o)?;
    let spec = spectrum_of(&lat, b, o.epsilon)?;
    let mut table = Table::new("spectrum", &["index", "label", "re_energy", "im_energy"]);
    for (i, (label, z)) in spec.iter().enumerate() {
        table.push(vec![i.into(), label.to_string().into(), z.re.into(), z.im.into()]);
    }
    let mut doc = header(&lat, b, o.epsilon);
    doc["spectrum"] = json!(spec);
    Ok(Artifact::new(table, doc))
}

fn route_name(r: GreenRoute) -> &'static str {
    match r {
        GreenRoute::Direct => "direct",
        GreenRoute::Contour => "contour",
    }
}

fn assemble(states: &[GreenEigenstate], spectrum: ComplexSpectrum) -> Result<EigenpairSet, CliError> {
    let dim = states.first().map_or(0, |s| s.right.len());
    let right = Array2::from_shape_fn((dim, states.len()), |(i, k)| states[k].right[i]);
    let left = Array2::from_shape_fn((dim, states.len()), |(i, k)| states[k].left[i]);
    Ok(binormalize(&EigenpairSet::new(right, left, spectrum, Normalization::Raw)?)?)
}

#[derive(Serialize)]
struct StatesDoc<'a> {
    routes: &'a [&'static str],
    eigenpairs: &'a EigenpairSet,
    localization: &'a nhskin::analysis::LocalizationReport,
}

fn states(o: &Options) -> Result<Artifact, CliError> {
    let lat = lattice(o, o.model.unwrap_or(ModelKind::HatanoNelson), Task::States)?;
    let b = boundary(o)?;
    let spec = spectrum_of(&lat, b, o.epsilon)?;
    let (pairs, routes): (EigenpairSet, Vec<&'static str>) = match b {
        BoundaryKind::Pbc => {
            let set = pbc_full_eigenstates(&lat.ring)?;
            let n = set.len();
            (set, vec!["bloch"; n])
        }
        BoundaryKind::Obc => {
            let st = obc_eigenstates_green_all(&lat.ring.opened()?, &spec)?;
            let routes = st.iter().map(|s| route_name(s.route)).collect();
            (assemble(&st, spec)?, routes)
        }
        BoundaryKind::Epsilon => {
            let eps = o.epsilon.expect("checked by boundary()");
            let st = impurity_eigenstates_green(&lat.ring, lat.ring.last_site(), eps, &spec)?;
            let routes = st.iter().map(|s| route_name(s.route)).collect();
            (assemble(&st, spec)?, routes)
        }
    };
    let report = localization_report(pairs.right.view())?;

    let mut table = Table::new(
        "states",
        &["state", "label", "re_energy", "im_energy", "route", "site", "re_right", "im_right", "re_left", "im_left"],
    );
    for (k, (label, z)) in pairs.spectrum.iter().enumerate() {
        let label = label.to_string();
        for n in 0..pairs.dimension() {
            let (r, l): (C64, C64) = (pairs.right[[n, k]], pairs.left[[n, k]]);
            table.push(vec![
                k.into(),
                label.as_str().into(),
                z.re.into(),
                z.im.into(),
                routes[k].into(),
                (n + 1).into(),
                r.re.into(),
                r.im.into(),
                l.re.into(),
                l.im.into(),
            ]);
        }
    }
    let mut doc = header(&lat, b, o.epsilon);
    doc["states"] = json!(StatesDoc {
        routes: &routes,
        eigenpairs: &pairs,
        localization: &report,
    });
    let mut art = Artifact::new(table, doc);
    art.notes.push(format!(
        "{} states on {} sites; {:.1}% peak within the first {} sites, {:.1}% within the last {}",
        pairs.len(),
        report.n_sites,
        100.0 * report.fraction_left,
        report.edge_width,
        100.0 * report.fraction_right,
        report.edge_width
    ));
    Ok(art)
}

fn sweep(o: &Options) -> Result<Artifact, CliError> {
    if o.boundary.is_some() || o.epsilon.is_some() {
        return Err(CliError::Config("sweep-epsilon takes --epsilon-grid, not --boundary/--epsilon".into()));
    }
    let lat = lattice(o, o.model.unwrap_or(ModelKind::HatanoNelson), Task::SweepEpsilon)?;
    let eps = grid(&o.epsilon_grid, DEFAULT_EPSILON_GRID);
    let res = epsilon_sweep(&lat.ring, lat.ring.last_site(), &eps)?;
    let mut table = Table::new("sweep-epsilon", &["epsilon", "track", "re_energy", "im_energy", "ep_flags"]);
    for (g, spec) in res.spectra.iter().enumerate() {
        let flags = res.ep_flags[g].len();
        for (i, z) in spec.eigenvalues().iter().enumerate() {
            table.push(vec![eps[g].into(), i.into(), z.re.into(), z.im.into(), flags.into()]);
        }
    }
    let mut doc = header(&lat, BoundaryKind::Epsilon, None);
    doc["sweep"] = json!(res);
    let mut art = Artifact::new(table, doc);
    art.notes.push(format!(
        "{} exceptional points confirmed, {} unconfirmed candidates",
        res.ep_count(),
        res.unconfirmed.len()
    ));
    Ok(art)
}

fn vicinity(o: &Options) -> Result<Artifact, CliError> {
    if o.model == Some(ModelKind::HatanoNelson) {
        return Err(CliError::Config("vicinity is defined for the ssh model".into()));
    }
    o.check_keys(ModelKind::Ssh)?;
    if o.t2.is_some() {
        return Err(CliError::Config("vicinity scans t2; use --t2-grid".into()));
    }
    if o.boundary.is_some() || o.epsilon.is_some() {
        return Err(CliError::Config("vicinity always uses the vacancy-opened chain".into()));
    }
    let t1 = o.t1.unwrap_or(1.0);
    let ratios = grid(&o.t2_grid, DEFAULT_T2_GRID);
    let t2: Vec<f64> = ratios.iter().map(|r| r * t1).collect();
    let gauge: Gauge = o.gauge.map(Into::into).unwrap_or_default();
    let source: StateSource = o.source.map(Into::into).unwrap_or_default();
    let res = vicinity_scan(t1, o.gamma.unwrap_or(1.0), o.n.unwrap_or(20), &t2, gauge, source)?;
    let mut table = Table::new("vicinity", &["n_sites", "t2_over_t1", "vicinity"]);
    for (r, v) in ratios.iter().zip(&res.values) {
        table.push(vec![res.n_sites().into(), (*r).into(), (*v).into()]);
    }
    let crossover = res.crossover();
    let mut art = Artifact::new(table, json!({ "model": "ssh", "vicinity": res, "crossover_t2": crossover }));
    if let Some(c) = crossover {
        art.notes.push(format!("vicinity crosses 0.5 at t2/t1 = {:.4}", c / t1));
    }
    Ok(art)
}

fn figure(id: FigureId, o: &Options) -> Result<Artifact, CliError> {
    let allowed: &[&str] = match id {
        FigureId::Fig1 => &["N", "delta"],
        FigureId::Fig3 => &["N", "delta", "epsilon-grid"],
        FigureId::Fig4 => &["sizes", "t2-grid", "gauge"],
    };
    only_keys(o, &format!("figure {}", id.to_possible_value().expect("no skipped variants").get_name()), allowed)?;
    let deltas = o.delta.map(|d| match id {
        FigureId::Fig1 => vec![0.0, d],
        _ => vec![d],
    });
    let params = FigureParams {
        n_cells: o.n,
        deltas,
        epsilon_grid: o.epsilon_grid.as_ref().map(GridSpec::values),
        sizes: o.sizes.clone(),
        t2_grid: o.t2_grid.as_ref().map(GridSpec::values),
        gauge: o.gauge.map(Into::into).unwrap_or_default(),
    };
    let table = figure_data(id.into(), &params)?;
    let json = json!(table);
    Ok(Artifact::new(table, json))
}

fn validate(o: &Options) -> Result<Artifact, CliError> {
    if o.boundary.is_some() {
        return Err(CliError::Config("validate covers every boundary; drop --boundary".into()));
    }
    let lat = lattice(o, o.model.unwrap_or(ModelKind::HatanoNelson), Task::Validate)?;
    let checks: Vec<Check> = match &lat.params {
        Params::HatanoNelson(p) => validate_hn(p, o.epsilon)?,
        Params::Ssh(p) => validate_ssh(p, o.epsilon)?,
    };
    let table = checks_table(&checks);
    let doc = json!({
        "model": model_name(lat.kind),
        "epsilon": o.epsilon,
        "parameters": lat.parameters_json(),
        "checks": checks,
    });
    let mut art = Artifact::new(table, doc);
    for c in &checks {
        art.notes.push(format!(
            "{} {:<24} {:>10.3e} <= {:.1e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        ));
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if !failed.is_empty() {
        art.failure = Some(failed.join(", "));
    }
    Ok(art)
}
