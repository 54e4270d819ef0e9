//! Conditional expectations by least squares on adaptive local bases.
//!
//! The feature cloud is cut into a tensor grid of equal-count cells (marginal
//! empirical quantiles per feature) and an affine model is fitted inside each
//! cell. The number of cells follows the sample count: `b = floor(c_basis * n)`,
//! capped so that each cell expects at least `min_per_cell` samples.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Local polynomial degree inside each cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Degree {
    /// Cell means only.
    Constant,
    /// Intercept plus one slope per active feature.
    Affine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionConfig {
    /// Cells per sample.
    pub c_basis: f64,
    pub min_per_cell: usize,
    pub degree: Degree,
    /// Relative ridge added to the diagonal of each local normal matrix.
    pub ridge: f64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            c_basis: 1e-4,
            min_per_cell: 100,
            degree: Degree::Affine,
            ridge: 1e-10,
        }
    }
}

pub const MAX_FEATURES: usize = 2;

/// Cell counts per dimension for `n_samples` samples in `dims` dimensions.
pub fn size_basis(n_samples: usize, dims: usize, config: &RegressionConfig) -> Vec<usize> {
    size_basis_scaled(n_samples, n_samples, dims, config)
}

/// Like [`size_basis`] but with the target count `c_basis * n_reference`;
/// the per-cell cap still applies to the `n_samples` actually fitted.
pub fn size_basis_scaled(n_samples: usize, n_reference: usize, dims: usize, config: &RegressionConfig) -> Vec<usize> {
    let wanted = ((config.c_basis * n_reference as f64).floor() as usize).max(1);
    let cap = (n_samples / config.min_per_cell.max(1)).max(1);
    let total = wanted.min(cap);
    match dims {
        0 => Vec::new(),
        1 => vec![total],
        2 => {
            let first = ((total as f64).sqrt().floor() as usize).max(1);
            vec![first, (total / first).max(1)]
        }
        d => {
            let per = ((total as f64).powf(1.0 / d as f64).floor() as usize).max(1);
            vec![per; d]
        }
    }
}

/// Tensor partition of the feature space. Only non-degenerate features
/// (those with spread across the samples) take part.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBasis {
    n_features: usize,
    active: Vec<usize>,
    /// Interior cut points per active feature, strictly increasing.
    boundaries: Vec<Vec<f64>>,
}

fn check_features(features: &[&[f64]]) -> Result<usize> {
    if features.is_empty() || features.len() > MAX_FEATURES {
        return Err(invalid(
            "features",
            format!("expected 1 to {MAX_FEATURES} feature columns, got {}", features.len()),
        ));
    }
    let n = features[0].len();
    if features.iter().any(|c| c.len() != n) {
        return Err(invalid("features", "feature columns differ in length"));
    }
    Ok(n)
}

fn is_degenerate(column: &[f64]) -> bool {
    let (lo, hi) = column
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo <= 1e-12 * lo.abs().max(hi.abs()).max(1.0)
}

fn quantile_cuts(column: &[f64], cells: usize) -> Vec<f64> {
    if cells <= 1 || column.is_empty() {
        return Vec::new();
    }
    let mut sorted = column.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    let mut cuts: Vec<f64> = (1..cells).map(|i| sorted[i * n / cells]).collect();
    cuts.dedup();
    // a cut at the minimum would leave the first cell empty
    cuts.retain(|&c| c > sorted[0]);
    // an atom at the top (e.g. a capped feature) gets a cell of its own
    let top = sorted[n - 1];
    if n >= 2 && sorted[n - 2] == top && top > sorted[0] && cuts.last() != Some(&top) {
        cuts.retain(|&c| c < top);
        cuts.push(top);
    }
    cuts
}

impl LocalBasis {
    /// Partition sized by [`size_basis`].
    pub fn build(features: &[&[f64]], config: &RegressionConfig) -> Result<Self> {
        let n = check_features(features)?;
        Self::build_scaled(features, n, config)
    }

    /// Partition sized by [`size_basis_scaled`].
    pub fn build_scaled(features: &[&[f64]], n_reference: usize, config: &RegressionConfig) -> Result<Self> {
        let n = check_features(features)?;
        let active: Vec<usize> = (0..features.len()).filter(|&k| !is_degenerate(features[k])).collect();
        let cells = size_basis_scaled(n, n_reference, active.len(), config);
        Self::from_active(features, active, &cells)
    }

    /// Partition with explicit cell counts per feature (degenerate features
    /// are still dropped).
    pub fn with_cells(features: &[&[f64]], cells_per_feature: &[usize]) -> Result<Self> {
        check_features(features)?;
        if cells_per_feature.len() != features.len() {
            return Err(invalid("cells_per_feature", "one count per feature is required"));
        }
        let active: Vec<usize> = (0..features.len()).filter(|&k| !is_degenerate(features[k])).collect();
        let cells: Vec<usize> = active.iter().map(|&k| cells_per_feature[k]).collect();
        Self::from_active(features, active, &cells)
    }

    fn from_active(features: &[&[f64]], active: Vec<usize>, cells: &[usize]) -> Result<Self> {
        let mut boundaries: Vec<Vec<f64>> = active
            .iter()
            .zip(cells)
            .map(|(&k, &c)| quantile_cuts(features[k], c))
            .collect();
        // ties can merge quantile cells; hand the unused budget to the first feature
        if boundaries.len() > 1 {
            let budget: usize = cells.iter().product();
            let others: usize = boundaries[1..].iter().map(|b| b.len() + 1).product();
            let first = (budget / others).max(1);
            if first > boundaries[0].len() + 1 {
                boundaries[0] = quantile_cuts(features[active[0]], first);
            }
        }
        Ok(Self {
            n_features: features.len(),
            active,
            boundaries,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Indices of the features the partition and local models use.
    pub fn active_features(&self) -> &[usize] {
        &self.active
    }

    pub fn cells_per_feature(&self) -> Vec<usize> {
        self.boundaries.iter().map(|b| b.len() + 1).collect()
    }

    pub fn n_cells(&self) -> usize {
        self.boundaries.iter().map(|b| b.len() + 1).product()
    }

    /// Cell containing `query`; points outside the sample box map to the
    /// nearest edge cell.
    #[inline]
    pub fn cell_of(&self, query: &[f64]) -> usize {
        let mut index = 0;
        for (&k, cuts) in self.active.iter().zip(&self.boundaries) {
            let i = cuts.partition_point(|&c| c <= query[k]);
            index = index * (cuts.len() + 1) + i;
        }
        index
    }

    fn assign(&self, features: &[&[f64]]) -> Vec<u32> {
        let n = features[0].len();
        let mut query = [0.0; MAX_FEATURES];
        (0..n)
            .map(|i| {
                for (k, col) in features.iter().enumerate() {
                    query[k] = col[i];
                }
                self.cell_of(&query[..features.len()]) as u32
            })
            .collect()
    }
}

/// Affine model of one cell: `mean + slope . (x - center)`, evaluated with
/// `x` clamped to the cell's sample range.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellModel {
    pub count: usize,
    pub mean: f64,
    pub center: [f64; MAX_FEATURES],
    pub slope: [f64; MAX_FEATURES],
    pub lower: [f64; MAX_FEATURES],
    pub upper: [f64; MAX_FEATURES],
}

impl CellModel {
    #[inline]
    fn eval(&self, query: &[f64]) -> f64 {
        let mut y = self.mean;
        for k in 0..query.len() {
            if self.slope[k] != 0.0 {
                let x = query[k].clamp(self.lower[k], self.upper[k]);
                y += self.slope[k] * (x - self.center[k]);
            }
        }
        y
    }
}

/// Fitted local regression.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    basis: LocalBasis,
    cells: Vec<CellModel>,
    global_mean: f64,
    n_samples: usize,
    residual_norm: f64,
}

impl RegressionFit {
    pub fn basis(&self) -> &LocalBasis {
        &self.basis
    }

    pub fn cells(&self) -> &[CellModel] {
        &self.cells
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Euclidean norm of the in-sample residuals.
    pub fn residual_norm(&self) -> f64 {
        self.residual_norm
    }

    #[inline]
    pub fn predict(&self, query: &[f64]) -> f64 {
        self.cells[self.basis.cell_of(query)].eval(query)
    }
}

/// A partition together with the cell of every sample, so that several
/// targets can be regressed on the same features cheaply.
#[derive(Debug, Clone)]
pub struct Design<'a> {
    features: Vec<&'a [f64]>,
    basis: LocalBasis,
    assignment: Vec<u32>,
}

impl<'a> Design<'a> {
    pub fn new(features: &[&'a [f64]], config: &RegressionConfig) -> Result<Self> {
        let basis = LocalBasis::build(features, config)?;
        Ok(Self::with_basis(features, basis))
    }

    /// Design whose cell count is driven by `n_reference` rather than the
    /// number of rows in `features`.
    pub fn scaled(features: &[&'a [f64]], n_reference: usize, config: &RegressionConfig) -> Result<Self> {
        let basis = LocalBasis::build_scaled(features, n_reference, config)?;
        Ok(Self::with_basis(features, basis))
    }

    pub fn with_basis(features: &[&'a [f64]], basis: LocalBasis) -> Self {
        let assignment = basis.assign(features);
        Self {
            features: features.to_vec(),
            basis,
            assignment,
        }
    }

    pub fn basis(&self) -> &LocalBasis {
        &self.basis
    }

    pub fn n_samples(&self) -> usize {
        self.assignment.len()
    }

    /// Least-squares fit of `targets` on the local basis.
    pub fn fit(&self, targets: &[f64], config: &RegressionConfig) -> Result<RegressionFit> {
        let n = self.n_samples();
        if n == 0 {
            return Err(Error::EmptyRegression);
        }
        if targets.len() != n {
            return Err(invalid("targets", format!("expected {n} targets, got {}", targets.len())));
        }
        let d = self.features.len();
        let n_cells = self.basis.n_cells();
        let global_mean = targets.iter().sum::<f64>() / n as f64;

        // first pass: counts, means and ranges
        let mut cells = vec![
            CellModel {
                lower: [f64::INFINITY; MAX_FEATURES],
                upper: [f64::NEG_INFINITY; MAX_FEATURES],
                ..CellModel::default()
            };
            n_cells
        ];
        for (i, &c) in self.assignment.iter().enumerate() {
            let cell = &mut cells[c as usize];
            cell.count += 1;
            cell.mean += targets[i];
            for k in 0..d {
                let x = self.features[k][i];
                cell.center[k] += x;
                cell.lower[k] = cell.lower[k].min(x);
                cell.upper[k] = cell.upper[k].max(x);
            }
        }
        for cell in &mut cells {
            if cell.count == 0 {
                cell.mean = global_mean;
                cell.center = [0.0; MAX_FEATURES];
                cell.lower = [0.0; MAX_FEATURES];
                cell.upper = [0.0; MAX_FEATURES];
            } else {
                let c = cell.count as f64;
                cell.mean /= c;
                for k in 0..d {
                    cell.center[k] /= c;
                }
            }
        }

        let active = self.basis.active_features();
        if config.degree == Degree::Affine && !active.is_empty() {
            self.fit_slopes(targets, &mut cells, config);
        }

        let mut rss = 0.0;
        let mut query = [0.0; MAX_FEATURES];
        for (i, &c) in self.assignment.iter().enumerate() {
            for k in 0..d {
                query[k] = self.features[k][i];
            }
            let r = targets[i] - cells[c as usize].eval(&query[..d]);
            rss += r * r;
        }

        Ok(RegressionFit {
            basis: self.basis.clone(),
            cells,
            global_mean,
            n_samples: n,
            residual_norm: rss.sqrt(),
        })
    }

    fn fit_slopes(&self, targets: &[f64], cells: &mut [CellModel], config: &RegressionConfig) {
        let active = self.basis.active_features();
        let a = active.len();
        let global_var: Vec<f64> = active.iter().map(|&k| variance(self.features[k])).collect();

        // second pass: centered cross products
        let mut sxx = vec![[[0.0; MAX_FEATURES]; MAX_FEATURES]; cells.len()];
        let mut sxy = vec![[0.0; MAX_FEATURES]; cells.len()];
        for (i, &c) in self.assignment.iter().enumerate() {
            let c = c as usize;
            let cell = &cells[c];
            let mut dx = [0.0; MAX_FEATURES];
            for (j, &k) in active.iter().enumerate() {
                dx[j] = self.features[k][i] - cell.center[k];
            }
            let dy = targets[i] - cell.mean;
            for j in 0..a {
                sxy[c][j] += dx[j] * dy;
                for l in 0..=j {
                    sxx[c][j][l] += dx[j] * dx[l];
                }
            }
        }

        for (c, cell) in cells.iter_mut().enumerate() {
            if cell.count < a + 2 {
                continue;
            }
            // drop features with no spread inside this cell
            let mut cols = [0usize; MAX_FEATURES];
            let mut used = 0;
            for j in 0..a {
                if sxx[c][j][j] > 1e-12 * global_var[j] * cell.count as f64 && sxx[c][j][j] > 0.0 {
                    cols[used] = j;
                    used += 1;
                }
            }
            let ridge = 1.0 + config.ridge;
            match used {
                1 => {
                    let j = cols[0];
                    cell.slope[active[j]] = sxy[c][j] / (sxx[c][j][j] * ridge);
                }
                2 => {
                    let (j, l) = (cols[0], cols[1]);
                    let a11 = sxx[c][j][j] * ridge;
                    let a22 = sxx[c][l][l] * ridge;
                    let a12 = sxx[c][l][j];
                    let det = a11 * a22 - a12 * a12;
                    if det > 0.0 {
                        cell.slope[active[j]] = (a22 * sxy[c][j] - a12 * sxy[c][l]) / det;
                        cell.slope[active[l]] = (a11 * sxy[c][l] - a12 * sxy[c][j]) / det;
                    }
                }
                _ => {}
            }
        }
    }

    /// Fitted values at the design points.
    pub fn fitted(&self, fit: &RegressionFit) -> Vec<f64> {
        let d = self.features.len();
        let mut query = [0.0; MAX_FEATURES];
        self.assignment
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                for k in 0..d {
                    query[k] = self.features[k][i];
                }
                fit.cells[c as usize].eval(&query[..d])
            })
            .collect()
    }

    /// Cell index of every design point.
    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }
}

fn variance(column: &[f64]) -> f64 {
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    column.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// One-shot fit of `targets` on `features` (column slices of equal length).
pub fn fit(features: &[&[f64]], targets: &[f64], config: &RegressionConfig) -> Result<RegressionFit> {
    let n = check_features(features)?;
    if n == 0 {
        return Err(Error::EmptyRegression);
    }
    Design::new(features, config)?.fit(targets, config)
}

/// Evaluate a fitted regression at one query point.
pub fn predict(fit: &RegressionFit, query: &[f64]) -> f64 {
    fit.predict(query)
}
