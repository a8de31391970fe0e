//! Sequential grid search over training configurations.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ModelError, TrainConfig};

/// One grid: parameters (dotted paths into [`TrainConfig`]) and their candidate
/// values. Candidates are the cartesian product, first parameter varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub params: Vec<(String, Vec<Value>)>,
}

impl Grid {
    pub fn new(params: Vec<(String, Vec<Value>)>) -> Self {
        Self { params }
    }

    pub fn candidates(&self) -> Vec<Vec<(String, Value)>> {
        let mut out: Vec<Vec<(String, Value)>> = vec![Vec::new()];
        for (name, values) in &self.params {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut c = prefix.clone();
                        c.push((name.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub grid: usize,
    pub params: Vec<(String, Value)>,
    pub config: TrainConfig,
    pub score: f64,
}

/// Returns a copy of `cfg` with the field at `path` (e.g. `mlp.learning_rate`) replaced.
pub fn set_param(cfg: &TrainConfig, path: &str, value: &Value) -> Result<TrainConfig, ModelError> {
    let mut json = serde_json::to_value(cfg).expect("config serializes");
    let mut slot = &mut json;
    for part in path.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|o| o.get_mut(part))
            .ok_or_else(|| ModelError::InvalidConfig(format!("unknown parameter {path:?}")))?;
    }
    *slot = value.clone();
    serde_json::from_value(json).map_err(|e| ModelError::InvalidConfig(format!("{path}: {e}")))
}

/// Works through the plan in order. Each grid is searched with the values fixed
/// by earlier grids; the best-scoring candidate (first on ties) is fixed next.
pub fn sequential_grid_search<F>(
    base: &TrainConfig,
    plan: &[Grid],
    mut score: F,
) -> Result<(TrainConfig, Vec<TraceRow>), ModelError>
where
    F: FnMut(&TrainConfig) -> Result<f64, ModelError>,
{
    if plan.is_empty() || plan.iter().any(|g| g.candidates().is_empty()) {
        return Err(ModelError::InvalidConfig("grid search plan is empty".into()));
    }
    let mut fixed = base.clone();
    let mut trace = Vec::new();
    for (gi, grid) in plan.iter().enumerate() {
        let mut best: Option<(f64, TrainConfig)> = None;
        for params in grid.candidates() {
            let mut cfg = fixed.clone();
            for (path, value) in &params {
                cfg = set_param(&cfg, path, value)?;
            }
            let s = score(&cfg)?;
            trace.push(TraceRow { grid: gi, params, config: cfg.clone(), score: s });
            if best.as_ref().is_none_or(|(b, _)| s > *b) {
                best = Some((s, cfg));
            }
        }
        fixed = best.expect("grid has candidates").1;
    }
    Ok((fixed, trace))
}
