use super::{GraphInput, Model, NnError, Prediction, PredictionGrad};
use crate::Real;

/// A named scalar objective of the prediction with its gradient.
pub type Objective<'a, T> = (&'a str, &'a dyn Fn(&Prediction<T>) -> (T, PredictionGrad<T>));

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Lower bound on the denominator of the relative error.
    pub floor: f64,
    /// Restrict the check to these tensors; `None` checks all of them.
    pub tensors: Option<Vec<String>>,
    /// Test hook: perturbs the analytic gradient of the named tensor.
    pub corrupt: Option<String>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-6,
            tolerance: 1e-5,
            floor: 1e-7,
            tensors: None,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub elements: usize,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    pub max_abs_error: f64,
    /// `‖analytic − numeric‖`.
    pub error_norm: f64,
    /// `error_norm / max(‖analytic‖, ‖numeric‖, floor)`.
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub objective: String,
    pub tolerance: f64,
    pub floor: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    /// Relative error of the whole checked gradient, all tensors concatenated.
    pub fn relative_error(&self) -> f64 {
        let sq = |f: fn(&TensorCheck) -> f64| self.tensors.iter().map(|t| f(t).powi(2)).sum::<f64>().sqrt();
        let err = sq(|t| t.error_norm);
        let scale = sq(|t| t.analytic_norm).max(sq(|t| t.numeric_norm)).max(self.floor);
        err / scale
    }

    pub fn passed(&self) -> bool {
        self.relative_error() < self.tolerance
    }

    /// Largest per-tensor relative error. Tensors with tiny gradients are
    /// dominated by finite-difference roundoff, so this is diagnostic only.
    pub fn max_tensor_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.relative_error).fold(0.0, f64::max)
    }

    pub fn tensors_over_tolerance(&self) -> Vec<&TensorCheck> {
        self.tensors.iter().filter(|t| t.relative_error >= self.tolerance).collect()
    }
}

/// Compares reverse-mode gradients of every objective against central
/// differences, one report per objective.
pub fn check_gradients<T: Real>(
    model: &Model<T>,
    graph: &GraphInput<T>,
    objectives: &[Objective<'_, T>],
    options: &GradCheckOptions,
) -> Result<Vec<GradCheckReport>, NnError> {
    let selected: Vec<usize> = model
        .params
        .tensors
        .iter()
        .enumerate()
        .filter(|(_, p)| options.tensors.as_ref().is_none_or(|names| names.contains(&p.name)))
        .map(|(i, _)| i)
        .collect();

    let mut analytic: Vec<Vec<Vec<f64>>> = Vec::with_capacity(objectives.len());
    let base = model.forward(graph)?;
    for (_, objective) in objectives {
        let mut m = model.clone();
        m.zero_grad();
        let (_, g) = objective(base.prediction());
        m.backward_from(&base, &g);
        let mut grads: Vec<Vec<f64>> = selected
            .iter()
            .map(|&i| m.params.tensors[i].grad.as_slice().iter().map(|v| v.to_f64_lossy()).collect())
            .collect();
        if let Some(name) = &options.corrupt {
            for (g, &i) in grads.iter_mut().zip(&selected) {
                if &model.params.tensors[i].name == name && !g.is_empty() {
                    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    g[0] += norm.max(1.0);
                }
            }
        }
        analytic.push(grads);
    }

    let mut numeric: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(selected.len()); objectives.len()];
    let mut probe = model.clone();
    let h = T::lit(options.step);
    let evaluate = |m: &Model<T>| -> Result<Vec<f64>, NnError> {
        let cache = m.forward(graph)?;
        Ok(objectives
            .iter()
            .map(|(_, f)| f(cache.prediction()).0.to_f64_lossy())
            .collect())
    };
    for &i in &selected {
        let n = probe.params.tensors[i].value.len();
        let mut per_objective = vec![vec![0.0; n]; objectives.len()];
        for k in 0..n {
            let original = probe.params.tensors[i].value.as_slice()[k];
            probe.params.tensors[i].value.as_mut_slice()[k] = original + h;
            let plus = evaluate(&probe)?;
            probe.params.tensors[i].value.as_mut_slice()[k] = original - h;
            let minus = evaluate(&probe)?;
            probe.params.tensors[i].value.as_mut_slice()[k] = original;
            for (o, d) in per_objective.iter_mut().enumerate() {
                d[k] = (plus[o] - minus[o]) / (2.0 * options.step);
            }
        }
        for (o, d) in per_objective.into_iter().enumerate() {
            numeric[o].push(d);
        }
    }

    Ok(objectives
        .iter()
        .enumerate()
        .map(|(o, (name, _))| GradCheckReport {
            objective: name.to_string(),
            tolerance: options.tolerance,
            floor: options.floor,
            tensors: selected
                .iter()
                .enumerate()
                .map(|(s, &i)| {
                    let (a, n) = (&analytic[o][s], &numeric[o][s]);
                    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let diff: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
                    let (an, nn) = (norm(a), norm(n));
                    TensorCheck {
                        name: model.params.tensors[i].name.clone(),
                        elements: a.len(),
                        analytic_norm: an,
                        numeric_norm: nn,
                        max_abs_error: diff.iter().fold(0.0, |m, d| m.max(d.abs())),
                        error_norm: norm(&diff),
                        relative_error: norm(&diff) / an.max(nn).max(options.floor),
                    }
                })
                .collect(),
        })
        .collect())
}
