//! Training objective: MSE + Pearson loss + linear exterior penalty.

use std::f64::consts::PI;

use crate::network::{PathwayParams, Role};

use super::TrainError;

/// Standard deviation below which a series counts as constant.
pub const PEARSON_EPS: f64 = 1e-8;

/// Derivative of the arctan spike surrogate at pre-activation `u = v - threshold`.
pub fn surrogate_spike_grad(u: f64, width: f64) -> f64 {
    let z = 0.5 * PI * width * u;
    width / (2.0 * (1.0 + z * z))
}

fn check_lengths(x: &[f64], x_hat: &[f64]) -> Result<(), TrainError> {
    if x.len() != x_hat.len() {
        return Err(TrainError::LengthMismatch {
            target: x.len(),
            output: x_hat.len(),
        });
    }
    Ok(())
}

pub fn mse(x: &[f64], x_hat: &[f64]) -> Result<f64, TrainError> {
    check_lengths(x, x_hat)?;
    if x.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = x.iter().zip(x_hat).map(|(a, b)| (b - a) * (b - a)).sum();
    Ok(sum / x.len() as f64)
}

struct Moments {
    mx: f64,
    my: f64,
    sx: f64,
    sy: f64,
    rho: f64,
}

fn moments(x: &[f64], y: &[f64]) -> Option<Moments> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut cxy, mut cxx, mut cyy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        cxy += da * db;
        cxx += da * da;
        cyy += db * db;
    }
    let sx = (cxx / n).sqrt();
    let sy = (cyy / n).sqrt();
    if sx < PEARSON_EPS || sy < PEARSON_EPS {
        return None;
    }
    let rho = (cxy / n / (sx * sy)).clamp(-1.0, 1.0);
    Some(Moments { mx, my, sx, sy, rho })
}

/// `1 - rho(x, x_hat)`, in `[0, 2]`. A constant series gives 1.
pub fn pearson_loss(x: &[f64], x_hat: &[f64]) -> Result<f64, TrainError> {
    check_lengths(x, x_hat)?;
    if x.len() < 2 {
        return Err(TrainError::TooShort(x.len()));
    }
    Ok(moments(x, x_hat).map_or(1.0, |m| 1.0 - m.rho))
}

/// Loss value and its gradient with respect to `x_hat` for MSE + Pearson.
pub(crate) fn output_loss_grad(x: &[f64], x_hat: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = x.len() as f64;
    let mut grad = vec![0.0; x.len()];
    let mut mse_sum = 0.0;
    for (g, (a, b)) in grad.iter_mut().zip(x.iter().zip(x_hat)) {
        mse_sum += (b - a) * (b - a);
        *g = 2.0 * (b - a) / n;
    }
    let pearson = match moments(x, x_hat) {
        None => 1.0,
        Some(m) => {
            for (g, (a, b)) in grad.iter_mut().zip(x.iter().zip(x_hat)) {
                let drho = ((a - m.mx) / (m.sx * m.sy) - m.rho * (b - m.my) / (m.sy * m.sy)) / n;
                *g -= drho;
            }
            1.0 - m.rho
        }
    };
    (mse_sum / n, pearson, grad)
}

/// Bounds of one named parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    /// `<pathway>.<role>`, e.g. `i.theta_add`.
    pub name: String,
    pub role: Role,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl ParamSpec {
    /// Distance of `value` to the interval, zero inside.
    pub fn distance(&self, value: f64) -> f64 {
        if value < self.lo {
            self.lo - value
        } else if value > self.hi {
            value - self.hi
        } else {
            0.0
        }
    }

    fn slope(&self, value: f64) -> f64 {
        if value < self.lo {
            -1.0
        } else if value > self.hi {
            1.0
        } else {
            0.0
        }
    }
}

/// Specs of every non-empty trainable array of a pathway.
pub fn pathway_specs(p: &PathwayParams) -> Vec<ParamSpec> {
    Role::ALL
        .into_iter()
        .filter(|&role| p.expected_len(role) > 0)
        .map(|role| {
            let (lo, hi) = role.range(p.threshold);
            ParamSpec {
                name: format!("{}.{}", p.kind.prefix(), role.name()),
                role,
                lo,
                hi,
                count: p.expected_len(role),
            }
        })
        .collect()
}

fn find_spec<'a>(p: &PathwayParams, role: Role, specs: &'a [ParamSpec]) -> Result<&'a ParamSpec, TrainError> {
    let name = format!("{}.{}", p.kind.prefix(), role.name());
    specs
        .iter()
        .find(|s| s.name == name)
        .ok_or(TrainError::MissingSpec(name))
}

/// Sum over parameters of their distance to the feasible interval.
pub fn exterior_penalty(p: &PathwayParams, specs: &[ParamSpec]) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for (role, values) in p.arrays() {
        if values.is_empty() {
            continue;
        }
        let spec = find_spec(p, role, specs)?;
        total += values.iter().map(|&v| spec.distance(v)).sum::<f64>();
    }
    Ok(total)
}

/// Add the penalty gradient to `grad`.
pub(crate) fn add_penalty_grad(
    p: &PathwayParams,
    specs: &[ParamSpec],
    grad: &mut PathwayParams,
) -> Result<(), TrainError> {
    for ((role, values), (_, g)) in p.arrays().into_iter().zip(grad.arrays_mut()) {
        if values.is_empty() {
            continue;
        }
        let spec = find_spec(p, role, specs)?;
        for (gi, &v) in g.iter_mut().zip(values.iter()) {
            *gi += spec.slope(v);
        }
    }
    Ok(())
}

/// `MSE + (1 - rho) + penalty`.
pub fn total_loss(x: &[f64], x_hat: &[f64], p: &PathwayParams, specs: &[ParamSpec]) -> Result<f64, TrainError> {
    Ok(mse(x, x_hat)? + pearson_loss(x, x_hat)? + exterior_penalty(p, specs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::PathwayKind;
    use proptest::prelude::*;

    fn series() -> Vec<f64> {
        (0..50).map(|k| (k as f64 * 0.37).sin() + 0.1 * k as f64).collect()
    }

    #[test]
    fn surrogate_examples() {
        assert_eq!(surrogate_spike_grad(0.0, 2.0), 1.0);
        assert_eq!(surrogate_spike_grad(0.7, 2.0), surrogate_spike_grad(-0.7, 2.0));
        assert!(surrogate_spike_grad(1e6, 2.0) < 1e-10);
    }

    #[test]
    fn pearson_examples() {
        let x = series();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let affine: Vec<f64> = x.iter().map(|v| 3.0 * v + 2.0).collect();
        assert!(pearson_loss(&x, &x).unwrap().abs() < 1e-12);
        assert!((pearson_loss(&x, &neg).unwrap() - 2.0).abs() < 1e-12);
        assert!(pearson_loss(&x, &affine).unwrap().abs() < 1e-12);
        assert_eq!(pearson_loss(&x, &vec![1.0; x.len()]).unwrap(), 1.0);
        assert!(matches!(
            pearson_loss(&x, &x[1..]),
            Err(TrainError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn penalty_examples() {
        let mut p = PathwayParams::uniform(PathwayKind::Proportional, 1);
        let specs = pathway_specs(&p);
        assert_eq!(exterior_penalty(&p, &specs).unwrap(), 0.0);
        p.tau_syn[0] = 1.2;
        assert!((exterior_penalty(&p, &specs).unwrap() - 0.2).abs() < 1e-12);
        p.tau_syn[0] = 0.5;
        p.w_in[0] = -0.3;
        assert!((exterior_penalty(&p, &specs).unwrap() - 0.3).abs() < 1e-12);
        let missing: Vec<ParamSpec> = specs.into_iter().filter(|s| s.role != Role::Gain).collect();
        assert!(matches!(exterior_penalty(&p, &missing), Err(TrainError::MissingSpec(_))));
    }

    #[test]
    fn total_loss_examples() {
        let p = PathwayParams::uniform(PathwayKind::Derivative, 2);
        let specs = pathway_specs(&p);
        let x = series();
        assert!(total_loss(&x, &x, &p, &specs).unwrap().abs() < 1e-12);
        let shifted: Vec<f64> = x.iter().map(|v| v + 0.5).collect();
        assert!((total_loss(&x, &shifted, &p, &specs).unwrap() - 0.25).abs() < 1e-12);

        // zero-mean series: MSE(x, -x) = 4 E[x^2]
        let z = [1.0, -1.0, 2.0, -2.0];
        let nz = [-1.0, 1.0, -2.0, 2.0];
        let loss = total_loss(&z, &nz, &p, &specs).unwrap();
        assert!((loss - (4.0 * 2.5 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn output_gradient_matches_finite_differences() {
        let x = series();
        let y: Vec<f64> = x.iter().enumerate().map(|(k, v)| 0.8 * v + (k as f64 * 1.3).cos()).collect();
        let (_, _, grad) = output_loss_grad(&x, &y);
        let f = |y: &[f64]| mse(&x, y).unwrap() + pearson_loss(&x, y).unwrap();
        for k in [0, 7, 25, 49] {
            let h = 1e-6;
            let mut up = y.clone();
            up[k] += h;
            let mut dn = y.clone();
            dn[k] -= h;
            let numeric = (f(&up) - f(&dn)) / (2.0 * h);
            assert!((numeric - grad[k]).abs() < 1e-7, "k={k}");
        }
    }

    proptest! {
        #[test]
        fn pearson_loss_in_range(xs in prop::collection::vec(-100.0f64..100.0, 2..40), seed in 0u64..1000) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(k, v)| v * ((k as u64 + seed) as f64).sin()).collect();
            let l = pearson_loss(&xs, &ys).unwrap();
            prop_assert!((0.0..=2.0).contains(&l));
        }

        #[test]
        fn pearson_affine_invariant(xs in prop::collection::vec(-10.0f64..10.0, 3..40), a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let ys: Vec<f64> = xs.iter().map(|v| a * v + b).collect();
            let l = pearson_loss(&xs, &ys).unwrap();
            if crate::stats::variance(&xs).sqrt() > 1e-6 {
                prop_assert!(l < 1e-9);
            }
        }

        #[test]
        fn penalty_zero_inside_linear_outside(v in -3.0f64..3.0) {
            let mut p = PathwayParams::uniform(PathwayKind::Proportional, 1);
            let specs = pathway_specs(&p);
            p.tau_mem[0] = v;
            let pen = exterior_penalty(&p, &specs).unwrap();
            let expected = if v < 0.0 { -v } else if v > 1.0 { v - 1.0 } else { 0.0 };
            prop_assert!((pen - expected).abs() < 1e-12);
        }
    }
}
