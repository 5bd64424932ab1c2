//! One- and two-dimensional slices through a fitted campaign model.

use serde::{Deserialize, Serialize};
use sparsebo::engine::{Campaign, Fitted};

use crate::error::ApiError;

pub const MAX_GRID_1D: usize = 500;
pub const MAX_GRID_2D: usize = 80;

#[derive(Clone, Debug, Default, Deserialize)]
pub struct SliceQuery {
    /// One axis index, or two separated by a comma.
    pub axis: Option<String>,
    /// Grid points per axis.
    pub grid: Option<usize>,
    /// Coordinates of the slice's fixed dimensions; defaults to the incumbent.
    pub at: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlicePlan {
    pub axes: Vec<usize>,
    pub grid: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SliceObservation {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Posterior mean with a two-standard-deviation band. For two axes the
/// values are row-major with the first axis varying fastest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PosteriorSlice {
    pub axes: Vec<usize>,
    pub at: Vec<f64>,
    pub coords: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub observations: Vec<SliceObservation>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AcquisitionSlice {
    pub axes: Vec<usize>,
    pub at: Vec<f64>,
    pub coords: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub acquisition: String,
    pub pending: Option<Vec<f64>>,
}

fn parse_list(text: &str) -> Option<Vec<f64>> {
    text.split(',').map(|v| v.trim().parse::<f64>().ok()).collect()
}

impl SliceQuery {
    pub fn plan(&self, campaign: &Campaign) -> Result<SlicePlan, ApiError> {
        let id = campaign.id.as_str();
        let d = campaign.dim();
        let axes: Vec<usize> = match &self.axis {
            None => (0..d.min(2)).collect(),
            Some(text) => text
                .split(',')
                .map(|v| v.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| ApiError::invalid(id, format!("axis must be one or two integers, got {text:?}")))?,
        };
        if axes.is_empty() || axes.len() > 2 {
            return Err(ApiError::invalid(id, "slices take one or two axes"));
        }
        if axes.iter().any(|a| *a >= d) {
            return Err(ApiError::invalid(id, format!("axis out of range for a {d}-dimensional campaign")));
        }
        if axes.len() == 2 && axes[0] == axes[1] {
            return Err(ApiError::invalid(id, "slice axes must differ"));
        }
        let max = if axes.len() == 1 { MAX_GRID_1D } else { MAX_GRID_2D };
        let grid = self.grid.unwrap_or(if axes.len() == 1 { 100 } else { 30 });
        if grid < 2 || grid > max {
            return Err(ApiError::invalid(id, format!("grid must lie in 2..={max}")));
        }
        Ok(SlicePlan { axes, grid })
    }

    fn anchor(&self, campaign: &Campaign) -> Result<Vec<f64>, ApiError> {
        let id = campaign.id.as_str();
        match &self.at {
            Some(text) => {
                let at = parse_list(text).ok_or_else(|| ApiError::invalid(id, format!("cannot parse at={text:?}")))?;
                if at.len() != campaign.dim() {
                    return Err(ApiError::invalid(id, format!("at needs {} coordinates", campaign.dim())));
                }
                Ok(at)
            }
            None => Ok(campaign
                .incumbent()
                .map(|i| i.x)
                .unwrap_or_else(|| campaign.lower().iter().zip(campaign.upper()).map(|(l, u)| 0.5 * (l + u)).collect())),
        }
    }
}

/// Grid coordinates per axis and the full points in objective space.
fn grid_points(campaign: &Campaign, plan: &SlicePlan, at: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (lower, upper) = (campaign.lower(), campaign.upper());
    let coords: Vec<Vec<f64>> = plan
        .axes
        .iter()
        .map(|&a| (0..plan.grid).map(|i| lower[a] + (upper[a] - lower[a]) * i as f64 / (plan.grid - 1) as f64).collect())
        .collect();
    let mut points = Vec::new();
    let outer = if plan.axes.len() == 2 { plan.grid } else { 1 };
    for j in 0..outer {
        for i in 0..plan.grid {
            let mut p = at.to_vec();
            p[plan.axes[0]] = coords[0][i];
            if plan.axes.len() == 2 {
                p[plan.axes[1]] = coords[1][j];
            }
            points.push(p);
        }
    }
    (coords, points)
}

fn fit(campaign: &Campaign) -> Result<Fitted, ApiError> {
    if campaign.observations.is_empty() {
        return Err(ApiError::invalid(&campaign.id, "the campaign has no observations yet"));
    }
    campaign.fit().map_err(|e| {
        let mut err = ApiError::from_engine(&campaign.id, e);
        err.code = crate::error::ErrorCode::ModelFailure;
        err
    })
}

pub fn posterior_slice(campaign: &Campaign, query: &SliceQuery) -> Result<PosteriorSlice, ApiError> {
    let plan = query.plan(campaign)?;
    let at = query.anchor(campaign)?;
    let fitted = fit(campaign)?;
    let (coords, points) = grid_points(campaign, &plan, &at);
    let mut mean = Vec::with_capacity(points.len());
    let mut std = Vec::with_capacity(points.len());
    for p in &points {
        let pred = fitted.predict(p).map_err(|e| ApiError::from_engine(&campaign.id, e))?;
        mean.push(pred.mean);
        std.push(pred.var.max(0.0).sqrt());
    }
    Ok(PosteriorSlice {
        lower: mean.iter().zip(&std).map(|(m, s)| m - 2.0 * s).collect(),
        upper: mean.iter().zip(&std).map(|(m, s)| m + 2.0 * s).collect(),
        axes: plan.axes,
        at,
        coords,
        mean,
        std,
        observations: campaign.observations.iter().map(|o| SliceObservation { x: o.x.clone(), y: o.y }).collect(),
        notes: fitted.notes,
    })
}

pub fn acquisition_slice(campaign: &Campaign, query: &SliceQuery) -> Result<AcquisitionSlice, ApiError> {
    let plan = query.plan(campaign)?;
    let at = query.anchor(campaign)?;
    let fitted = fit(campaign)?;
    let (coords, points) = grid_points(campaign, &plan, &at);
    let values = points
        .iter()
        .map(|p| fitted.acquisition_at(p))
        .collect::<sparsebo::Result<Vec<f64>>>()
        .map_err(|e| ApiError::from_engine(&campaign.id, e))?;
    Ok(AcquisitionSlice {
        axes: plan.axes,
        at,
        coords,
        values,
        acquisition: format!("{:?}", fitted.acquisition.kind).to_lowercase(),
        pending: campaign.pending().map(|r| r.point.clone()),
    })
}
