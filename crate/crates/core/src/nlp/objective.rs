//! The residual `F1 = J_S S`, its Jacobian and the curvature term for Newton.

use nalgebra::{DMatrix, DVector};

use crate::dual::{Dual, Scalar};
use crate::kinetics::{rates, Mechanism, StateVector};

/// `F1` and row-major `J1 = (D_S J_S) + J_S J_S` in any scalar type.
///
/// `(D_S J_S)_kj = Σ_i S_i ∂J_kj/∂z_i = Σ_i S_i ∂J_ki/∂z_j` by symmetry of second
/// derivatives, so this is the Jacobian of `J_S S` by the product rule.
fn f1_j1<T: Scalar>(mech: &Mechanism, z: &[T]) -> (Vec<T>, Vec<T>) {
    let n = mech.n_species();
    let (s, j) = rates::evaluate::<T>(mech, z, true);
    let j = j.expect("jacobian requested");
    let dj = rates::jacobian_directional::<T>(mech, z, &s);
    let mut f1 = vec![T::zero(); n];
    let mut j1 = dj;
    for k in 0..n {
        for i in 0..n {
            f1[k] = f1[k] + j[k * n + i] * s[i];
        }
        for c in 0..n {
            let mut acc = T::zero();
            for i in 0..n {
                acc = acc + j[k * n + i] * j[i * n + c];
            }
            j1[k * n + c] = j1[k * n + c] + acc;
        }
    }
    (f1, j1)
}

/// `F1(z) = J_S(z) S(z)`.
pub fn residual(mech: &Mechanism, z: &StateVector) -> DVector<f64> {
    let (s, j) = mech.source_and_jacobian(z);
    j * s
}

/// `Φ(z) = ‖J_S S‖²`.
pub fn phi(mech: &Mechanism, z: &StateVector) -> f64 {
    residual(mech, z).norm_squared()
}

/// `(F1, J1)` at `z`.
pub fn residual_and_jacobian(mech: &Mechanism, z: &StateVector) -> (DVector<f64>, DMatrix<f64>) {
    let n = mech.n_species();
    let (f1, j1) = f1_j1::<f64>(mech, z.as_slice());
    (DVector::from_vec(f1), DMatrix::from_row_slice(n, n, &j1))
}

/// `Σ_k w_k ∇²F1_k`, i.e. `(D_z J1ᵀ) w` with `w` held fixed; column `j` is the
/// derivative of `J1ᵀ w` along `e_j`.
pub fn curvature(mech: &Mechanism, z: &StateVector, w: &DVector<f64>) -> DMatrix<f64> {
    let n = mech.n_species();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let zd: Vec<Dual<f64>> = z
            .iter()
            .enumerate()
            .map(|(i, &v)| Dual::new(v, if i == j { 1.0 } else { 0.0 }))
            .collect();
        let (_, j1) = f1_j1::<Dual<f64>>(mech, &zd);
        for c in 0..n {
            out[(c, j)] = (0..n).map(|k| j1[k * n + c].eps * w[k]).sum();
        }
    }
    // symmetric in exact arithmetic
    (&out + out.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::tests::{REFERENCE_INITIAL, REFERENCE_SOLUTION};
    use proptest::prelude::*;

    fn mech() -> Mechanism {
        Mechanism::bundled_h2()
    }

    fn fd_j1(m: &Mechanism, z: &StateVector) -> DMatrix<f64> {
        let n = m.n_species();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-6 * z[j].abs().max(1.0);
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            out.set_column(j, &((residual(m, &zp) - residual(m, &zm)) / (2.0 * h)));
        }
        out
    }

    #[test]
    fn j1_matches_finite_differences_at_reference_point() {
        let m = mech();
        let z = StateVector::from_slice(&REFERENCE_INITIAL);
        let (f1, j1) = residual_and_jacobian(&m, &z);
        assert!((&f1 - residual(&m, &z)).amax() <= 1e-12 * f1.amax());
        let fd = fd_j1(&m, &z);
        let err = (&j1 - &fd).amax() / fd.amax();
        assert!(err < 1e-6, "{err:.3e}");
    }

    #[test]
    fn j1_agrees_with_directional_formula() {
        let m = mech();
        let z = StateVector::from_slice(&REFERENCE_SOLUTION);
        let (s, j) = m.source_and_jacobian(&z);
        let direct = m.jacobian_directional(&z, &s) + &j * &j;
        let (_, j1) = residual_and_jacobian(&m, &z);
        assert!((&direct - &j1).amax() <= 1e-12 * j1.amax());
    }

    #[test]
    fn curvature_matches_gradient_differences() {
        let m = mech();
        let z = StateVector::from_slice(&REFERENCE_SOLUTION);
        let (f1, _) = residual_and_jacobian(&m, &z);
        let hc = curvature(&m, &z, &f1);
        // (D J1ᵀ) F1 with F1 frozen, by differencing J1ᵀ w
        let n = 6;
        let mut fd = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = 1e-6 * z[j].abs().max(1.0);
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            let gp = residual_and_jacobian(&m, &zp).1.transpose() * &f1;
            let gm = residual_and_jacobian(&m, &zm).1.transpose() * &f1;
            fd.set_column(j, &((gp - gm) / (2.0 * h)));
        }
        let err = (&hc - &fd).amax() / fd.amax();
        assert!(err < 1e-5, "{err:.3e}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn j1_fd_random_states(z in proptest::collection::vec(1e-4f64..40.0, 6)) {
            let m = mech();
            let z = StateVector::from_slice(&z);
            let (_, j1) = residual_and_jacobian(&m, &z);
            let fd = fd_j1(&m, &z);
            let err = (&j1 - &fd).amax() / fd.amax();
            prop_assert!(err < 1e-6, "{err:.3e}");
        }

        #[test]
        fn full_hessian_fd_random_states(z in proptest::collection::vec(1e-2f64..10.0, 6)) {
            // ∇²(½‖F1‖²) = J1ᵀJ1 + (D J1ᵀ)F1 against differences of the gradient J1ᵀF1
            let m = mech();
            let z = StateVector::from_slice(&z);
            let (f1, j1) = residual_and_jacobian(&m, &z);
            let h = j1.transpose() * &j1 + curvature(&m, &z, &f1);
            let mut fd = DMatrix::zeros(6, 6);
            for j in 0..6 {
                let step = 1e-6 * z[j].abs().max(1.0);
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[j] += step;
                zm[j] -= step;
                let (fp, jp) = residual_and_jacobian(&m, &zp);
                let (fm, jm) = residual_and_jacobian(&m, &zm);
                fd.set_column(j, &((jp.transpose() * fp - jm.transpose() * fm) / (2.0 * step)));
            }
            let err = (&h - &fd).amax() / fd.amax();
            prop_assert!(err < 1e-5, "{err:.3e}");
        }
    }
}
