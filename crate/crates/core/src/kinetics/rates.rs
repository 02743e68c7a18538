//! Mass-action kernel, generic over the scalar type so that dual numbers can
//! push higher derivatives through the same code path.

use super::{Mechanism, NEGATIVE_SLACK};
use crate::dual::{Dual, Scalar};

fn clamp<T: Scalar>(v: T) -> T {
    let r = v.re();
    if (-NEGATIVE_SLACK..0.0).contains(&r) {
        T::zero()
    } else {
        v
    }
}

/// Product of `c_k^ν_k` over `terms`, skipping one factor of `skip` if given.
fn monomial<T: Scalar>(c: &[T], terms: &[(usize, u32)], skip: Option<usize>) -> T {
    let mut p = T::one();
    for &(k, v) in terms {
        let e = if Some(k) == skip { v - 1 } else { v };
        p = p * c[k].powi(e);
    }
    p
}

/// Returns `S(z)` and, if requested, `J_S(z)` row-major.
pub(crate) fn evaluate<T: Scalar>(
    mech: &Mechanism,
    z: &[T],
    with_jacobian: bool,
) -> (Vec<T>, Option<Vec<T>>) {
    let n = mech.n_species();
    assert_eq!(z.len(), n, "state length does not match the mechanism");
    let g = T::from_f64(mech.volume_factor());
    let zc: Vec<T> = z.iter().map(|&v| clamp(v)).collect();
    let total = zc.iter().fold(T::zero(), |acc, &v| acc + v);
    let scale = T::one() / (g * total);
    let c: Vec<T> = zc.iter().map(|&v| v * scale).collect();

    let mut omega = vec![T::zero(); n];
    // ∂ω_k/∂c_i
    let mut w = if with_jacobian {
        vec![T::zero(); n * n]
    } else {
        Vec::new()
    };
    let mut dq = vec![T::zero(); n];

    for (r, rx) in mech.reactions.iter().enumerate() {
        let kf = T::from_f64(mech.kf[r]);
        let kr = T::from_f64(mech.kr[r]);
        let fwd = kf * monomial(&c, &rx.reactants, None);
        let rev = kr * monomial(&c, &rx.products, None);
        let net = fwd - rev;
        let m = match &rx.third_body {
            Some(eff) => eff
                .iter()
                .zip(&c)
                .fold(T::zero(), |acc, (&a, &ci)| acc + T::from_f64(a) * ci),
            None => T::one(),
        };
        let q = net * m;

        for &(k, v) in &rx.reactants {
            omega[k] = omega[k] - T::from_f64(v as f64) * q;
        }
        for &(k, v) in &rx.products {
            omega[k] = omega[k] + T::from_f64(v as f64) * q;
        }

        if with_jacobian {
            dq.iter_mut().for_each(|d| *d = T::zero());
            for &(i, v) in &rx.reactants {
                let d = kf * T::from_f64(v as f64) * monomial(&c, &rx.reactants, Some(i));
                dq[i] = dq[i] + d * m;
            }
            for &(i, v) in &rx.products {
                let d = kr * T::from_f64(v as f64) * monomial(&c, &rx.products, Some(i));
                dq[i] = dq[i] - d * m;
            }
            if let Some(eff) = &rx.third_body {
                for (i, &a) in eff.iter().enumerate() {
                    dq[i] = dq[i] + net * T::from_f64(a);
                }
            }
            let mut scatter = |k: usize, nu: f64| {
                let nu = T::from_f64(nu);
                for i in 0..n {
                    w[k * n + i] = w[k * n + i] + nu * dq[i];
                }
            };
            for &(k, v) in &rx.reactants {
                scatter(k, -(v as f64));
            }
            for &(k, v) in &rx.products {
                scatter(k, v as f64);
            }
        }
    }

    let factor = g * total;
    let source: Vec<T> = omega.iter().map(|&o| factor * o).collect();
    if !with_jacobian {
        return (source, None);
    }

    // ∂S_k/∂z_j = g ω_k + W_kj − Σ_i W_ki z_i / Σz
    let inv_total = T::one() / total;
    let mut jac = vec![T::zero(); n * n];
    for k in 0..n {
        let row = &w[k * n..(k + 1) * n];
        let proj = row
            .iter()
            .zip(&zc)
            .fold(T::zero(), |acc, (&wi, &zi)| acc + wi * zi)
            * inv_total;
        let base = g * omega[k] - proj;
        for j in 0..n {
            jac[k * n + j] = base + row[j];
        }
    }
    (source, Some(jac))
}

/// `d/dε J_S(z + ε v)`, row-major.
pub(crate) fn jacobian_directional<T: Scalar>(mech: &Mechanism, z: &[T], v: &[T]) -> Vec<T> {
    let zd: Vec<Dual<T>> = z.iter().zip(v).map(|(&a, &b)| Dual::new(a, b)).collect();
    let (_, j) = evaluate::<Dual<T>>(mech, &zd, true);
    j.expect("jacobian requested").into_iter().map(|d| d.eps).collect()
}

pub(crate) fn rates_of_progress(mech: &Mechanism, z: &[f64]) -> Vec<(f64, f64)> {
    let g = mech.volume_factor();
    let zc: Vec<f64> = z.iter().map(|&v| clamp(v)).collect();
    let total: f64 = zc.iter().sum();
    let c: Vec<f64> = zc.iter().map(|&v| v / (g * total)).collect();
    mech.reactions
        .iter()
        .enumerate()
        .map(|(r, rx)| {
            let m = rx
                .third_body
                .as_ref()
                .map_or(1.0, |eff| eff.iter().zip(&c).map(|(a, ci)| a * ci).sum());
            (
                mech.kf[r] * monomial(&c, &rx.reactants, None) * m,
                mech.kr[r] * monomial(&c, &rx.products, None) * m,
            )
        })
        .collect()
}
