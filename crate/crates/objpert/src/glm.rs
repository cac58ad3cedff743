//! Generalized linear losses, datasets and the objective calculus.
//!
//! Everything downstream (solver, accounting, releases) consumes the
//! regularized objective
//!
//! ```text
//! J(theta; D) = sum_i f(x_i' theta; y_i) + (lambda/2) ||theta||^2
//! ```
//!
//! together with its gradient and Hessian. The per-point Hessian of a
//! generalized linear loss is rank one, `f''(x' theta; y) x x'`, which is what
//! makes the exact per-instance accounting tractable.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// A single record: feature vector and scalar label.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub x: DVector<f64>,
    pub y: f64,
}

impl DataPoint {
    pub fn new(x: DVector<f64>, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// An ordered collection of points sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<DataPoint>,
    d: usize,
}

impl Dataset {
    /// Builds a dataset, checking that every point has dimension `d`.
    pub fn new(d: usize, points: Vec<DataPoint>) -> Result<Self> {
        for p in &points {
            if p.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.dim(),
                });
            }
        }
        Ok(Self { points, d })
    }

    pub fn empty(d: usize) -> Self {
        Self { points: Vec::new(), d }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &DataPoint {
        &self.points[i]
    }

    /// Exact membership test: bitwise equality of features and label.
    pub fn contains(&self, z: &DataPoint) -> bool {
        self.points.iter().any(|p| p == z)
    }

    /// The neighboring dataset `D + z`.
    pub fn with_added(&self, z: &DataPoint) -> Result<Dataset> {
        if z.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: z.dim(),
            });
        }
        let mut points = self.points.clone();
        points.push(z.clone());
        Ok(Dataset { points, d: self.d })
    }

    /// The neighboring dataset `D - z`. Removal matches exactly one point by
    /// exact equality; fuzzy matching is deliberately not supported.
    pub fn with_removed(&self, z: &DataPoint) -> Result<Dataset> {
        let idx = self
            .points
            .iter()
            .position(|p| p == z)
            .ok_or(Error::NotInDataset)?;
        let mut points = self.points.clone();
        points.remove(idx);
        Ok(Dataset { points, d: self.d })
    }

    /// Largest feature norm over the dataset (0 when empty).
    pub fn max_feature_norm(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.x.norm())
            .fold(0.0, f64::max)
    }

    /// True when every point satisfies the unit-ball / unit-label contract.
    pub fn is_normalized(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.x.norm() <= 1.0 + 1e-12 && p.y.abs() <= 1.0 + 1e-12)
    }

    /// Rescales all features by `1 / max_i ||x_i||` when any norm exceeds one
    /// beyond float tolerance, and clips labels into `[-1, 1]`. Returns the
    /// scale factor applied.
    pub fn normalize(&mut self) -> f64 {
        let max_norm = self.max_feature_norm();
        let scale = if max_norm > 1.0 + 1e-12 { 1.0 / max_norm } else { 1.0 };
        for p in &mut self.points {
            if scale != 1.0 {
                p.x *= scale;
            }
            p.y = p.y.clamp(-1.0, 1.0);
        }
        scale
    }

    /// Reads `f0,...,f{d-1},label` rows.
    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.len() < 2 || headers.iter().next_back() != Some("label") {
            return Err(Error::InvalidParameter(format!(
                "csv {} must end with a `label` column",
                path.display()
            )));
        }
        let d = headers.len() - 1;
        let mut points = Vec::new();
        for record in reader.records() {
            let record = record?;
            let mut values = Vec::with_capacity(record.len());
            for field in record.iter() {
                values.push(field.trim().parse::<f64>().map_err(|e| {
                    Error::InvalidParameter(format!("bad csv field `{field}`: {e}"))
                })?);
            }
            if values.len() != d + 1 {
                return Err(Error::DimensionMismatch {
                    expected: d + 1,
                    got: values.len(),
                });
            }
            let y = values.pop().expect("label column");
            points.push(DataPoint::new(DVector::from_vec(values), y));
        }
        Dataset::new(d, points)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.d).map(|j| format!("f{j}")).collect();
        header.push("label".to_string());
        writer.write_record(&header)?;
        for p in &self.points {
            let mut row: Vec<String> = p.x.iter().map(|v| format!("{v}")).collect();
            row.push(format!("{}", p.y));
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// The two built-in scalar losses `f(t; y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlmLoss {
    /// `f(t; y) = log(1 + e^t) - y t` with labels in {0, 1}.
    Logistic,
    /// `f(t; y) = (t - y)^2 / 2`.
    Squared,
}

impl GlmLoss {
    pub fn value(&self, t: f64, y: f64) -> f64 {
        match self {
            GlmLoss::Logistic => softplus(t) - y * t,
            GlmLoss::Squared => 0.5 * (t - y) * (t - y),
        }
    }

    /// First derivative in `t`.
    pub fn d1(&self, t: f64, y: f64) -> f64 {
        match self {
            GlmLoss::Logistic => sigmoid(t) - y,
            GlmLoss::Squared => t - y,
        }
    }

    /// Second derivative in `t`; nonnegative by convexity.
    pub fn d2(&self, t: f64, _y: f64) -> f64 {
        match self {
            GlmLoss::Logistic => {
                let s = sigmoid(t);
                s * (1.0 - s)
            }
            GlmLoss::Squared => 1.0,
        }
    }

    /// Gradient-norm bound `xi` over the unit ball, when one exists.
    pub fn xi(&self) -> Option<f64> {
        match self {
            GlmLoss::Logistic => Some(1.0),
            GlmLoss::Squared => None,
        }
    }

    /// Spectral bound `beta` on the per-point Hessian over the unit ball.
    pub fn beta(&self) -> f64 {
        match self {
            GlmLoss::Logistic => 0.25,
            GlmLoss::Squared => 1.0,
        }
    }
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// A loss together with the ridge coefficient; the extra regularizer r(theta)
/// is fixed to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSpec {
    pub loss: GlmLoss,
    pub lambda: f64,
}

impl ObjectiveSpec {
    pub fn new(loss: GlmLoss, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self { loss, lambda })
    }
}

fn check_dims(spec_d: usize, theta: &DVector<f64>, b: Option<&DVector<f64>>) -> Result<()> {
    if theta.len() != spec_d {
        return Err(Error::DimensionMismatch {
            expected: spec_d,
            got: theta.len(),
        });
    }
    if let Some(b) = b {
        if b.len() != spec_d {
            return Err(Error::DimensionMismatch {
                expected: spec_d,
                got: b.len(),
            });
        }
    }
    Ok(())
}

/// The perturbed objective `J(theta; D) + b' theta`.
pub fn objective_value(
    spec: &ObjectiveSpec,
    data: &Dataset,
    theta: &DVector<f64>,
    b: &DVector<f64>,
) -> Result<f64> {
    check_dims(data.d(), theta, Some(b))?;
    let mut total = 0.5 * spec.lambda * theta.norm_squared() + b.dot(theta);
    for p in data.points() {
        total += spec.loss.value(p.x.dot(theta), p.y);
    }
    Ok(total)
}

/// `grad J(theta; D) + b = sum_i f'(x_i' theta; y_i) x_i + lambda theta + b`.
pub fn objective_grad(
    spec: &ObjectiveSpec,
    data: &Dataset,
    theta: &DVector<f64>,
    b: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dims(data.d(), theta, Some(b))?;
    let mut grad = spec.lambda * theta + b;
    for p in data.points() {
        let g1 = spec.loss.d1(p.x.dot(theta), p.y);
        grad.axpy(g1, &p.x, 1.0);
    }
    Ok(grad)
}

/// Gradient of the unperturbed objective `J` alone.
pub fn data_grad(spec: &ObjectiveSpec, data: &Dataset, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let zero = DVector::zeros(data.d());
    objective_grad(spec, data, theta, &zero)
}

/// `H = sum_i f''(x_i' theta; y_i) x_i x_i' + lambda I`; positive definite.
pub fn objective_hessian(
    spec: &ObjectiveSpec,
    data: &Dataset,
    theta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_dims(data.d(), theta, None)?;
    let d = data.d();
    let mut h = DMatrix::from_diagonal_element(d, d, spec.lambda);
    for p in data.points() {
        let w = spec.loss.d2(p.x.dot(theta), p.y);
        if w != 0.0 {
            h.ger(w, &p.x, &p.x, 1.0);
        }
    }
    Ok(h)
}

/// Per-point loss Hessian `f''(x' theta; y) x x'`.
pub fn point_hessian(spec: &ObjectiveSpec, z: &DataPoint, theta: &DVector<f64>) -> DMatrix<f64> {
    let w = spec.loss.d2(z.x.dot(theta), z.y);
    let d = z.dim();
    let mut h = DMatrix::zeros(d, d);
    h.ger(w, &z.x, &z.x, 1.0);
    h
}

/// Per-point loss gradient `f'(x' theta; y) x`.
pub fn point_grad(spec: &ObjectiveSpec, z: &DataPoint, theta: &DVector<f64>) -> DVector<f64> {
    spec.loss.d1(z.x.dot(theta), z.y) * &z.x
}
