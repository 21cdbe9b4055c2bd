use crate::error::Result;

use super::{Graph, ParamStore, Var};

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(1, |analytic|, |numeric|)` over all checked entries.
    pub max_rel_error: f64,
    /// Parameter path and flat index where the maximum was attained.
    pub worst: Option<(String, usize)>,
    pub entries_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compares tape gradients of `loss` against central finite differences
/// for every entry of every trainable parameter.
///
/// `loss` must build the same deterministic scalar on whichever graph it is given.
pub fn grad_check<F>(params: &ParamStore, mut loss: F, h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let root = loss(&mut g, params)?;
    let analytic = g.backward(root)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        entries_checked: 0,
    };
    let mut probe = params.clone();
    for (name, grad) in &analytic {
        for i in 0..grad.len() {
            let orig = params.get(name).expect("registered parameter").data()[i];
            let eval = |probe: &mut ParamStore, v: f64, loss: &mut F| -> Result<f64> {
                probe.get_mut(name).expect("parameter").data_mut()[i] = v;
                let mut g = Graph::untaped();
                let r = loss(&mut g, probe)?;
                g.value(r).item()
            };
            let up = eval(&mut probe, orig + h, &mut loss)?;
            let down = eval(&mut probe, orig - h, &mut loss)?;
            probe.get_mut(name).expect("parameter").data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grad.data()[i];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.entries_checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}
