//! Problem-definition files: a small TOML schema mapping onto `ProblemSpec`
//! plus solver and verification settings.

use serde::Deserialize;

use crate::conditions::{ConditionConfig, DomainSpec};
use crate::error::{Error, Result};
use crate::expr::parse_expression;
use crate::geometry::{ChartBox, ChartManifold};
use crate::scalar::ScalarField;
use crate::solver::{GalerkinConfig, ProblemSpec};
use crate::torus::FrequencyVector;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    label: Option<String>,
    dims: Dims,
    omega: Vec<f64>,
    metric: Metric,
    force: Force,
    auxiliary: Auxiliary,
    chart_box: ChartBoxSection,
    #[serde(default)]
    solver: SolverSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Dims {
    k: usize,
    m: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metric {
    /// Row-major m*m entry expressions in x1..xm.
    entries: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Force {
    w: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Auxiliary {
    v: String,
    level: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChartBoxSection {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    trunc: Option<usize>,
    grid: Option<usize>,
    cond_resolution: Option<usize>,
    window: Option<f64>,
    g_tol: Option<f64>,
}

/// A parsed problem together with its run settings.
pub struct LoadedProblem {
    pub spec: ProblemSpec,
    pub galerkin: GalerkinConfig,
    pub conditions: ConditionConfig,
    /// Half-width T of the verification time window.
    pub window: f64,
    /// The raw file contents, hashed into reports.
    pub source: String,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::ProblemFile(msg.into())
}

/// Parse and validate a problem definition document.
pub fn parse_problem(source: &str) -> Result<LoadedProblem> {
    let file: ProblemFile =
        toml::from_str(source).map_err(|e| bad(format!("problem file: {e}")))?;
    let (k, m) = (file.dims.k, file.dims.m);
    if k == 0 || m == 0 {
        return Err(bad("dims.k and dims.m must be positive"));
    }
    if file.omega.len() != k {
        return Err(bad(format!(
            "omega needs {k} entries, got {}",
            file.omega.len()
        )));
    }
    let (omega, warnings) = FrequencyVector::new(file.omega.clone(), 16, 1e-9)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if file.chart_box.lo.len() != m || file.chart_box.hi.len() != m {
        return Err(bad(format!("chart_box.lo and chart_box.hi need {m} entries")));
    }
    for (lo, hi) in file.chart_box.lo.iter().zip(&file.chart_box.hi) {
        if !(lo < hi) {
            return Err(bad("chart_box.lo must be strictly below chart_box.hi"));
        }
    }
    let chart_box = ChartBox {
        lo: file.chart_box.lo.clone(),
        hi: file.chart_box.hi.clone(),
    };
    if file.metric.entries.len() != m * m {
        return Err(bad(format!(
            "metric.entries needs {} row-major entries, got {}",
            m * m,
            file.metric.entries.len()
        )));
    }
    let mut entries = Vec::with_capacity(m * m);
    for text in &file.metric.entries {
        entries.push(ScalarField::spatial(parse_expression(text)?, m)?);
    }
    validate_symmetry(&file.metric.entries, &entries, m, &chart_box)?;
    let manifold = ChartManifold::new(m, entries, chart_box)?;
    let w_field = ScalarField::new(parse_expression(&file.force.w)?, k, m)?;
    let v_field = ScalarField::spatial(parse_expression(&file.auxiliary.v)?, m)?;
    let mut dom = DomainSpec::new(v_field, file.auxiliary.level);
    if let Some(res) = file.solver.cond_resolution {
        if res < 2 {
            return Err(bad("solver.cond_resolution must be at least 2"));
        }
        dom.resolution = res;
    }
    let trunc = file.solver.trunc.unwrap_or(4);
    let grid = file.solver.grid.unwrap_or(2 * trunc + 2);
    let mut galerkin = GalerkinConfig::new(trunc as i32, grid)?;
    if let Some(tol) = file.solver.g_tol {
        if !(tol > 0.0) {
            return Err(bad("solver.g_tol must be positive"));
        }
        galerkin.g_tol = tol;
    }
    let label = file
        .label
        .clone()
        .unwrap_or_else(|| "unnamed".to_string());
    let spec = ProblemSpec {
        k,
        m,
        omega,
        manifold,
        w_field,
        dom,
        label,
    };
    Ok(LoadedProblem {
        spec,
        galerkin,
        conditions: ConditionConfig::default(),
        window: file.solver.window.unwrap_or(100.0),
        source: source.to_string(),
    })
}

/// Load a problem from a file path.
pub fn load_problem(path: &std::path::Path) -> Result<LoadedProblem> {
    let source = std::fs::read_to_string(path)?;
    parse_problem(&source)
}

/// Symmetry of the metric: entries (i, j) and (j, i) must agree either
/// textually or numerically on a sample grid over the chart box.
fn validate_symmetry(
    texts: &[String],
    fields: &[ScalarField],
    m: usize,
    chart_box: &ChartBox,
) -> Result<()> {
    for i in 0..m {
        for j in (i + 1)..m {
            if texts[i * m + j].trim() == texts[j * m + i].trim() {
                continue;
            }
            // numeric fallback on a coarse sample grid
            let samples = 5usize;
            let mut idx = vec![0usize; m];
            loop {
                let x: Vec<f64> = (0..m)
                    .map(|d| {
                        let s = idx[d] as f64 / (samples - 1) as f64;
                        chart_box.lo[d] + s * (chart_box.hi[d] - chart_box.lo[d])
                    })
                    .collect();
                let a = fields[i * m + j].value(&[], &x)?;
                let b = fields[j * m + i].value(&[], &x)?;
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(bad(format!(
                        "metric entries ({},{}) and ({},{}) differ at {:?}: {a} vs {b}",
                        i + 1,
                        j + 1,
                        j + 1,
                        i + 1,
                        x
                    )));
                }
                let mut d = 0;
                while d < m {
                    idx[d] += 1;
                    if idx[d] < samples {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                }
                if d == m {
                    break;
                }
            }
        }
    }
    Ok(())
}
