//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::Rng;

use crate::params::Parameters;
use crate::scalar::Scalar;

/// Worst coordinate found by [`finite_diff_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub probed: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-12)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares `analytic` against `(f(p + h) - f(p - h)) / 2h` on `probes`
/// coordinates drawn without replacement, or on every coordinate when
/// `probes` is `None` or exceeds the parameter count.
pub fn finite_diff_check<T, P, F, R>(
    params: &P,
    analytic: &P,
    mut loss: F,
    probes: Option<usize>,
    h: f64,
    rng: &mut R,
) -> GradCheckReport
where
    T: Scalar,
    P: Parameters<T> + Clone,
    F: FnMut(&P) -> T,
    R: Rng,
{
    let sizes: Vec<(String, usize)> = params.tensors().iter().map(|(n, t)| (n.clone(), t.len())).collect();
    let total: usize = sizes.iter().map(|(_, n)| n).sum();
    let mut coords: Vec<usize> = match probes {
        Some(k) if k < total => sample(rng, total, k).into_vec(),
        _ => (0..total).collect(),
    };
    coords.sort_unstable();

    let analytic_flat: Vec<f64> =
        analytic.tensors().iter().flat_map(|(_, t)| t.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect::<Vec<_>>()).collect();

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        probed: coords.len(),
    };
    for &flat in &coords {
        let (tensor, offset) = locate(&sizes, flat);
        let original = get(&probe, tensor, offset);
        set(&mut probe, tensor, offset, original + T::of(h));
        let plus = loss(&probe).to_f64().unwrap_or(f64::NAN);
        set(&mut probe, tensor, offset, original - T::of(h));
        let minus = loss(&probe).to_f64().unwrap_or(f64::NAN);
        set(&mut probe, tensor, offset, original);

        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic_flat[flat];
        let err = relative_error(a, numeric);
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
            report.worst_tensor = sizes[tensor].0.clone();
            report.worst_index = offset;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    report
}

fn locate(sizes: &[(String, usize)], mut flat: usize) -> (usize, usize) {
    for (i, (_, n)) in sizes.iter().enumerate() {
        if flat < *n {
            return (i, flat);
        }
        flat -= n;
    }
    unreachable!("coordinate beyond parameter count")
}

fn get<T: Scalar, P: Parameters<T>>(p: &P, tensor: usize, offset: usize) -> T {
    *p.tensors()[tensor].1.iter().nth(offset).expect("offset in range")
}

fn set<T: Scalar, P: Parameters<T>>(p: &mut P, tensor: usize, offset: usize, value: T) {
    let mut tensors = p.tensors_mut();
    *tensors[tensor].1.iter_mut().nth(offset).expect("offset in range") = value;
}
