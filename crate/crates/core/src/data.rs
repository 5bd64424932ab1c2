use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default noise variance on derivative observations.
pub const DERIVATIVE_NOISE: f64 = 1e-6;

/// A full gradient observed (or estimated) at `point`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientObs {
    pub point: Vec<f64>,
    pub gradient: Vec<f64>,
    #[serde(default = "default_derivative_noise")]
    pub noise_var: f64,
}

fn default_derivative_noise() -> f64 {
    DERIVATIVE_NOISE
}

/// Observed function values, per-observation noise variances and optional
/// gradient observations. Gradients may sit at observed inputs or anywhere else.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub noise_vars: Vec<f64>,
    #[serde(default)]
    pub gradients: Vec<GradientObs>,
}

impl Dataset {
    /// Homoscedastic dataset.
    pub fn new(inputs: Vec<Vec<f64>>, values: Vec<f64>, noise_var: f64) -> Result<Self> {
        let n = values.len();
        let ds = Self {
            inputs,
            values,
            noise_vars: vec![noise_var; n],
            gradients: Vec::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_noise(inputs: Vec<Vec<f64>>, values: Vec<f64>, noise_vars: Vec<f64>) -> Result<Self> {
        let ds = Self {
            inputs,
            values,
            noise_vars,
            gradients: Vec::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs
            .first()
            .or_else(|| self.gradients.first().map(|g| &g.point))
            .map_or(0, |p| p.len())
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64, noise_var: f64) {
        self.inputs.push(x);
        self.values.push(y);
        self.noise_vars.push(noise_var);
    }

    /// Attaches a gradient observation at the input of observation `index`.
    pub fn set_gradient(&mut self, index: usize, gradient: Vec<f64>) -> Result<()> {
        let point = self
            .inputs
            .get(index)
            .ok_or_else(|| Error::InvalidArgument(format!("no observation {index}")))?
            .clone();
        if gradient.len() != point.len() {
            return Err(Error::DimensionMismatch { expected: point.len(), got: gradient.len() });
        }
        self.gradients.push(GradientObs {
            point,
            gradient,
            noise_var: DERIVATIVE_NOISE,
        });
        Ok(())
    }

    pub fn push_gradient(&mut self, point: Vec<f64>, gradient: Vec<f64>) -> Result<()> {
        if gradient.len() != point.len() {
            return Err(Error::DimensionMismatch { expected: point.len(), got: gradient.len() });
        }
        self.gradients.push(GradientObs {
            point,
            gradient,
            noise_var: DERIVATIVE_NOISE,
        });
        Ok(())
    }

    /// Copy without any gradient observations.
    pub fn values_only(&self) -> Self {
        Self {
            gradients: Vec::new(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.values.len();
        if self.inputs.len() != n || self.noise_vars.len() != n {
            return Err(Error::InvalidArgument(format!(
                "inputs ({}), values ({n}) and noise variances ({}) differ in length",
                self.inputs.len(),
                self.noise_vars.len()
            )));
        }
        let d = self.dim();
        for p in self.inputs.iter().chain(self.gradients.iter().map(|g| &g.point)) {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.len() });
            }
        }
        for g in &self.gradients {
            if g.gradient.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: g.gradient.len() });
            }
            if !(g.noise_var >= 0.0) {
                return Err(Error::InvalidArgument("derivative noise must be >= 0".into()));
            }
        }
        if self.noise_vars.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidArgument("noise variances must be >= 0".into()));
        }
        Ok(())
    }
}
