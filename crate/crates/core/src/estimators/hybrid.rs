use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::AccuracySpec;

/// One degree slice as seen by the planner. `mu` is a caller-supplied
/// (pilot) value of the slice target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceInput {
    pub k: u32,
    pub mu: f64,
    pub v_mc: f64,
    pub v_gbs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mc,
    Gbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicePlan {
    pub k: u32,
    pub eps: f64,
    pub delta: f64,
    pub n_mc: Option<u64>,
    pub n_gbs: Option<u64>,
    pub choice: Option<Method>,
    pub ill_posed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridPlan {
    pub mu: f64,
    pub slices: Vec<SlicePlan>,
    /// Totals over the well-posed slices.
    pub total_mc: u128,
    pub total_gbs: u128,
    pub total_hybrid: u128,
}

fn size(v: f64, mu: f64, eps: f64, delta: f64) -> u64 {
    let n = (v.max(0.0) / (delta * eps * eps * mu * mu)).ceil();
    (n as u64).max(1)
}

/// Splits `(eps, delta)` over the slices with `eps_k = (eps/K)(|mu|/|mu_k|)`
/// and `delta_k = 1 - (1 - delta)/K`, where `K` is the number of slices and
/// `mu = sum mu_k`, then picks the cheaper method on each slice.
pub fn hybrid_plan(slices: &[SliceInput], spec: AccuracySpec) -> Result<HybridPlan> {
    if slices.is_empty() {
        return Err(Error::invalid("slices", "at least one slice is required"));
    }
    if let Some(s) = slices.iter().find(|s| !(s.mu.is_finite() && s.v_mc >= 0.0 && s.v_gbs >= 0.0)) {
        return Err(Error::invalid("slices", format!("slice k={} has invalid values", s.k)));
    }
    let count = slices.len() as f64;
    let mu: f64 = slices.iter().map(|s| s.mu).sum();
    let delta = 1.0 - (1.0 - spec.delta) / count;
    let mut plan = HybridPlan { mu, slices: Vec::new(), total_mc: 0, total_gbs: 0, total_hybrid: 0 };
    for s in slices {
        let eps = spec.eps / count * (mu.abs() / s.mu.abs());
        let ill_posed = s.mu == 0.0 || mu == 0.0;
        let (n_mc, n_gbs, choice) = if ill_posed {
            (None, None, None)
        } else {
            let n_mc = size(s.v_mc, s.mu, eps, delta);
            let n_gbs = size(s.v_gbs, s.mu, eps, delta);
            let choice = if n_gbs < n_mc { Method::Gbs } else { Method::Mc };
            plan.total_mc += n_mc as u128;
            plan.total_gbs += n_gbs as u128;
            plan.total_hybrid += n_mc.min(n_gbs) as u128;
            (Some(n_mc), Some(n_gbs), Some(choice))
        };
        plan.slices.push(SlicePlan { k: s.k, eps, delta, n_mc, n_gbs, choice, ill_posed });
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::guaranteed_sample_size;

    #[test]
    fn single_slice_is_plain_comparison() {
        let spec = AccuracySpec::new(0.1, 0.2).unwrap();
        let s = SliceInput { k: 3, mu: 0.7, v_mc: 2.0, v_gbs: 0.5 };
        let plan = hybrid_plan(&[s], spec).unwrap();
        let p = &plan.slices[0];
        assert!((p.eps - 0.1).abs() < 1e-15 && (p.delta - 0.2).abs() < 1e-15);
        assert_eq!(p.n_mc, Some(guaranteed_sample_size(2.0, 0.7, spec).unwrap()));
        assert_eq!(p.n_gbs, Some(guaranteed_sample_size(0.5, 0.7, spec).unwrap()));
        assert_eq!(p.choice, Some(Method::Gbs));
    }

    #[test]
    fn equal_slices_split_eps() {
        let spec = AccuracySpec::new(0.1, 0.2).unwrap();
        let s = [
            SliceInput { k: 1, mu: 0.5, v_mc: 1.0, v_gbs: 3.0 },
            SliceInput { k: 2, mu: 0.5, v_mc: 4.0, v_gbs: 1.0 },
        ];
        let plan = hybrid_plan(&s, spec).unwrap();
        for p in &plan.slices {
            assert!((p.eps - 0.1 / 2.0 * (1.0 / 0.5)).abs() < 1e-15);
            assert!((p.delta - (1.0 - 0.8 / 2.0)).abs() < 1e-15);
        }
        assert_eq!(plan.slices[0].choice, Some(Method::Mc));
        assert_eq!(plan.slices[1].choice, Some(Method::Gbs));
        assert!(plan.total_hybrid <= plan.total_mc.min(plan.total_gbs));
    }

    #[test]
    fn zero_slice_is_flagged() {
        let spec = AccuracySpec::new(0.1, 0.2).unwrap();
        let s = [
            SliceInput { k: 1, mu: 0.0, v_mc: 1.0, v_gbs: 3.0 },
            SliceInput { k: 2, mu: 0.5, v_mc: 4.0, v_gbs: 1.0 },
        ];
        let plan = hybrid_plan(&s, spec).unwrap();
        assert!(plan.slices[0].ill_posed && plan.slices[0].choice.is_none());
        assert!(!plan.slices[1].ill_posed);
        assert!(hybrid_plan(&[], spec).is_err());
    }
}
