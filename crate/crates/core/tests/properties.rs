// SPDX-License-Identifier: Apache-2.0

//! Property tests for structural invariants of the model.

use std::f64::consts::PI;

use mqcspec::dipole_coupling::{coupling_tensor, Configuration, TensorMode};
use mqcspec::disorder_average::window_factor_moments;
use mqcspec::operator_basis::{basis, Mat4, C64};
use mqcspec::scattering_expansion::TagFactor;
use mqcspec::single_atom_dynamics::{kick_harmonics, state_free_propagator, Polarization};
use mqcspec::spectra::DetectionChannel;
use proptest::prelude::*;

fn mat4(v: &[f64]) -> Mat4 {
    Mat4::from_fn(|i, j| C64::new(v[8 * i + 2 * j], v[8 * i + 2 * j + 1]))
}

fn density(v: &[f64]) -> Mat4 {
    let a = mat4(v);
    let rho = a * a.adjoint();
    rho / rho.trace()
}

fn max_abs(m: &Mat4) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

fn transverse() -> impl Strategy<Value = Polarization> {
    prop_oneof![Just(Polarization::X), Just(Polarization::Y)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn test_expansion_is_linear_and_invertible(
        a in prop::collection::vec(-1.0f64..1.0, 32),
        b in prop::collection::vec(-1.0f64..1.0, 32),
        s in -3.0f64..3.0,
    ) {
        let (a, b) = (mat4(&a), mat4(&b));
        let basis = basis();
        let lhs = basis.expand(&(a + b * C64::new(s, 0.0)));
        let rhs = basis.expand(&a) + basis.expand(&b) * C64::new(s, 0.0);
        prop_assert!((lhs - rhs).iter().all(|x| x.norm() < 1e-12));
        prop_assert!(max_abs(&(basis.reconstruct(&lhs) - (a + b * C64::new(s, 0.0)))) < 1e-12);
    }

    #[test]
    fn test_kick_preserves_trace_hermiticity_purity(
        v in prop::collection::vec(-1.0f64..1.0, 32),
        area in 0.0f64..(2.0 * PI),
        phi in 0.0f64..(2.0 * PI),
        pol in transverse(),
    ) {
        let b = basis();
        let rho = density(&v);
        let after = b.reconstruct(&(kick_harmonics(area, pol).reassemble(phi) * b.expand(&rho)));
        prop_assert!((after.trace() - C64::new(1.0, 0.0)).norm() < 1e-12);
        prop_assert!(max_abs(&(after - after.adjoint())) < 1e-12);
        prop_assert!(((after * after).trace() - (rho * rho).trace()).norm() < 1e-12);
    }

    #[test]
    fn test_free_propagation_semigroup_and_trace(
        v in prop::collection::vec(-1.0f64..1.0, 32),
        s in 0.0f64..5.0,
        u in 0.0f64..5.0,
        gamma in 0.1f64..3.0,
    ) {
        let b = basis();
        let whole = state_free_propagator(gamma, s + u).unwrap();
        let split = state_free_propagator(gamma, u).unwrap() * state_free_propagator(gamma, s).unwrap();
        prop_assert!((whole - split).iter().all(|x| x.norm() < 1e-12));
        let rho = b.reconstruct(&(whole * b.expand(&density(&v))));
        prop_assert!((rho.trace() - C64::new(1.0, 0.0)).norm() < 1e-12);
        for i in 0..4 {
            prop_assert!(rho[(i, i)].re > -1e-14);
        }
    }

    #[test]
    fn test_coupling_tensor_structure(
        xi in 0.5f64..500.0,
        theta in 0.0f64..PI,
        phi in 0.0f64..(2.0 * PI),
        gamma in 0.1f64..3.0,
    ) {
        let c = Configuration::new(xi, theta, phi).unwrap();
        let n = c.unit_vector().map(|x| C64::new(x, 0.0));
        for mode in [TensorMode::Exact, TensorMode::FarField, TensorMode::NearField] {
            let t = coupling_tensor(&c, mode, gamma).unwrap();
            let scale = t.t.iter().map(|x| x.norm()).fold(0.0, f64::max);
            prop_assert!((t.t - t.t.transpose()).iter().all(|x| x.norm() <= 1e-13 * scale));
            // n is an eigenvector of T.
            let tn = t.t * n;
            let lambda = n.dot(&tn);
            prop_assert!((tn - n * lambda).iter().all(|x| x.norm() <= 1e-12 * scale));
            prop_assert!(t.gamma_zeroed().gamma().iter().all(|x| *x == 0.0));
            prop_assert!((t.gamma_zeroed().omega() - t.omega()).iter().all(|x| *x == 0.0));
        }
        let far = coupling_tensor(&c, TensorMode::FarField, gamma).unwrap();
        prop_assert!((far.t * n).iter().all(|x| x.norm() < 1e-12 * gamma));
    }

    #[test]
    fn test_window_moments_conjugation_symmetry(
        lo in 5.0f64..100.0,
        width in 0.0f64..50.0,
    ) {
        let m = window_factor_moments((lo, lo + width), TensorMode::Exact, 1.0).unwrap();
        let f = TagFactor::all();
        for i in 0..18 {
            for j in 0..18 {
                prop_assert!((m[i * 18 + j] - m[j * 18 + i]).norm() < 1e-15);
                let (ic, jc) = ((f[i].slot() + 9) % 18, (f[j].slot() + 9) % 18);
                prop_assert!((m[ic * 18 + jc] - m[i * 18 + j].conj()).norm() < 1e-15);
            }
        }
    }
}

/// Sphere average of T_kl T_mn by product quadrature at fixed distance.
fn sphere_average(xi: f64, k: (usize, usize), m: (usize, usize), conj: bool) -> C64 {
    let (nu, nphi) = (400, 16);
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..nu {
        let u = -1.0 + (i as f64 + 0.5) * 2.0 / nu as f64;
        for j in 0..nphi {
            let phi = 2.0 * PI * j as f64 / nphi as f64;
            let t = coupling_tensor(&Configuration::new(xi, u.acos(), phi).unwrap(), TensorMode::Exact, 1.0).unwrap().t;
            let second = if conj { t[m].conj() } else { t[m] };
            acc += t[k] * second;
        }
    }
    acc / (nu * nphi) as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn test_point_window_moments_match_sphere_quadrature(
        xi in 1.0f64..50.0,
        k in 0usize..3, l in 0usize..3, p in 0usize..3, q in 0usize..3,
        conj in any::<bool>(),
    ) {
        let m = window_factor_moments((xi, xi), TensorMode::Exact, 1.0).unwrap();
        let i = 3 * k + l;
        let j = 3 * p + q + if conj { 9 } else { 0 };
        let expect = sphere_average(xi, (k, l), (p, q), conj);
        let scale = (0.75 / xi).powi(2) * (1.0 + 1.0 / xi.powi(4));
        prop_assert!((m[i * 18 + j] - expect).norm() < 1e-4 * scale, "{} vs {}", m[i * 18 + j], expect);
    }

    #[test]
    fn test_channel_label_parses_back(i in 0usize..4) {
        let c = DetectionChannel::all()[i];
        prop_assert_eq!(c.to_string().parse::<DetectionChannel>().unwrap(), c);
    }
}
