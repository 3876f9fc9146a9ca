mod common;

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

use common::cx;
use spinsense_core::su2::{
    cartesian_generators, euler_zyz, make_operators, rotation_unitary, so3_matrix, HalfInt,
    Parametrization, RotationParams,
};

fn cmax(m: &common::CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn params() -> impl Strategy<Value = RotationParams> {
    (0.0..2.0 * PI, 0.0..PI, 0.0..2.0 * PI)
        .prop_map(|(a, b, c)| RotationParams::new(a, b, c).unwrap())
}

#[test]
fn quarter_turn_about_z() {
    let r = so3_matrix(&RotationParams::new(PI / 2.0, 0.0, 0.0).unwrap());
    let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    assert!((r - expected).abs().max() < 1e-15);
}

#[test]
fn full_turn_is_minus_identity_for_half_odd_spin() {
    for twice in 1..=6u32 {
        let u = rotation_unitary(
            HalfInt::from_twice(twice),
            &RotationParams::new(2.0 * PI, 0.7, 1.1).unwrap(),
        );
        let sign = if twice % 2 == 1 { -1.0 } else { 1.0 };
        let d = twice as usize + 1;
        assert!(cmax(&(u - common::CMat::identity(d, d) * cx(sign, 0.0))) < 1e-12);
    }
}

#[test]
fn rejects_out_of_range_parameters() {
    assert!(RotationParams::new(-0.1, 1.0, 0.0).is_err());
    assert!(RotationParams::new(1.0, 3.5, 0.0).is_err());
    assert!(RotationParams::new(f64::NAN, 1.0, 0.0).is_err());
    assert!(
        (RotationParams::new(1.0, 1.0, -1.0).unwrap().cap_phi - (2.0 * PI - 1.0)).abs() < 1e-15
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unitary_matches_taylor_exponential(p in params(), twice in 1u32..=8) {
        let ops = common::spin_matrices(twice);
        let oracle = common::rotation(&ops, p.as_array());
        let u = rotation_unitary(HalfInt::from_twice(twice), &p);
        prop_assert!(cmax(&(u - oracle)) < 1e-11);
    }

    #[test]
    fn conjugation_rotates_spin_vector(p in params(), twice in 1u32..=6) {
        let ops = common::spin_matrices(twice);
        let u = rotation_unitary(HalfInt::from_twice(twice), &p);
        let r = so3_matrix(&p);
        for i in 0..3 {
            let lhs = u.adjoint() * &ops[i] * &u;
            let rhs = common::along(&ops, &r.row(i).transpose());
            prop_assert!(cmax(&(lhs - rhs)) < 1e-11);
        }
    }

    #[test]
    fn so3_is_a_homomorphism(a in params(), b in params()) {
        let ops = common::spin_matrices(3);
        let ua = common::rotation(&ops, a.as_array());
        let ub = common::rotation(&ops, b.as_array());
        let prod = &ua * &ub;
        // recover the SO(3) image of the product from its action on J
        let r = Matrix3::from_fn(|i, k| {
            let m = prod.adjoint() * &ops[i] * &prod;
            // Tr(J_k J_l) = δ_kl J(J+1)(2J+1)/3 = 5 at J = 3/2
            (&ops[k] * m).trace().re / 5.0
        });
        prop_assert!((r - so3_matrix(&a) * so3_matrix(&b)).abs().max() < 1e-10);
    }

    #[test]
    fn omega_round_trip(p in params()) {
        let q = RotationParams::from_omega(&p.omega());
        prop_assert!((so3_matrix(&p) - so3_matrix(&q)).abs().max() < 1e-10);
        prop_assert!(q.theta <= PI + 1e-12);
    }

    #[test]
    fn euler_angles_reproduce_rotation(p in params()) {
        let [a, b, g] = euler_zyz(&so3_matrix(&p));
        let z = |t: f64| RotationParams::new(t.rem_euclid(2.0 * PI), 0.0, 0.0).unwrap();
        let y = RotationParams::new(b, PI / 2.0, PI / 2.0).unwrap();
        let r = so3_matrix(&z(a)) * so3_matrix(&y) * so3_matrix(&z(g));
        prop_assert!((r - so3_matrix(&p)).abs().max() < 1e-9);
    }

    #[test]
    fn cartesian_generators_match_finite_differences(w in prop::array::uniform3(-1.5f64..1.5)) {
        let omega = Vector3::from(w);
        let ops = common::spin_matrices(2);
        let rot = |v: Vector3<f64>| common::expm(&(common::along(&ops, &v) * cx(0.0, -1.0)));
        let r0 = rot(omega);
        let g = cartesian_generators(&omega);
        for k in 0..3 {
            let h = 1e-5;
            let e = Vector3::ith(k, h);
            let fd = (rot(omega + e) - rot(omega - e)) * cx(0.0, 1.0 / (2.0 * h)) * r0.adjoint();
            prop_assert!(cmax(&(fd - common::along(&ops, &g.column(k).into_owned()))) < 1e-8);
        }
    }

    #[test]
    fn generator_columns_span_each_parametrization(p in params()) {
        prop_assume!(p.theta > 0.05 && p.cap_theta > 0.05 && p.cap_theta < PI - 0.05);
        for param in [Parametrization::Spherical, Parametrization::Cartesian] {
            prop_assert!(param.generator_columns(&p).determinant().abs() > 1e-6);
        }
    }
}

#[test]
fn operators_obey_commutation_relations() {
    for twice in 1..=10u32 {
        let ops = make_operators(HalfInt::from_twice(twice));
        let comm = &ops.jx * &ops.jy - &ops.jy * &ops.jx;
        assert!(cmax(&(comm - &ops.jz * cx(0.0, 1.0))) < 1e-12);
        let j = twice as f64 / 2.0;
        let d = twice as usize + 1;
        assert!(cmax(&(&ops.jsq - common::CMat::identity(d, d) * cx(j * (j + 1.0), 0.0))) < 1e-11);
    }
}
