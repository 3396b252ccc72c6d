use alloc::string::String;
use alloc::vec::Vec;

use super::{Graph, ParamStore, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDiffReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// Gradients smaller than this are compared in absolute terms.
const GRAD_FLOOR: f64 = 1e-6;

fn eval<F>(f: &F, params: &ParamStore<f64>) -> Result<(Graph<f64>, Vec<Var>, Var)>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|(_, t)| g.param(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    if g.value(loss).numel() != 1 {
        return Err(Error::ShapeMismatch("finite difference target must be scalar".into()));
    }
    Ok((g, vars, loss))
}

/// Compares the analytic gradient of the scalar built by `f` with central
/// differences `(f(θ + s) − f(θ − s)) / 2s`, `s = h · max(|θ|, 1)`.
/// When a probe moves a ReLU input or L1 residual across zero the step is
/// divided by 10, at most three times, so the difference is taken on the
/// same smooth piece as the analytic gradient.
/// At most `per_param` evenly spaced entries of each tensor are probed.
/// Returns the largest `|analytic − numeric| / max(|analytic|, |numeric|, 1e-6)`.
pub fn finite_diff_check<F>(f: F, params: &ParamStore<f64>, h: f64, per_param: usize) -> Result<FiniteDiffReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let (mut g, vars, loss) = eval(&f, params)?;
    let base_signature = g.kink_signature();
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> =
        vars.iter().zip(params.iter()).map(|(&v, (_, t))| g.grad(v).map_or_else(|| alloc::vec![0.0; t.numel()], <[f64]>::to_vec)).collect();
    drop(g);

    let mut report = FiniteDiffReport { max_rel_error: 0.0, worst_param: String::new(), worst_index: 0, checked: 0 };
    let mut probe = params.clone();
    for i in 0..params.len() {
        let n = params.at(i).numel();
        let count = n.min(per_param.max(1));
        for c in 0..count {
            let k = c * n / count;
            let theta = params.at(i).data()[k];
            let mut step = h * theta.abs().max(1.0);
            let mut numeric = 0.0;
            for attempt in 0..4 {
                probe.at_mut(i).data_mut()[k] = theta + step;
                let (gp, _, lp) = eval(&f, &probe)?;
                probe.at_mut(i).data_mut()[k] = theta - step;
                let (gm, _, lm) = eval(&f, &probe)?;
                probe.at_mut(i).data_mut()[k] = theta;
                numeric = (gp.value(lp).item() - gm.value(lm).item()) / (2.0 * step);
                let smooth = gp.kink_signature() == base_signature && gm.kink_signature() == base_signature;
                if smooth || attempt == 3 {
                    break;
                }
                step /= 10.0;
            }
            let a = analytic[i][k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = rel;
                report.worst_param = params.name(i).into();
                report.worst_index = k;
            }
        }
    }
    Ok(report)
}
