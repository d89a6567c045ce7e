#![allow(clippy::needless_range_loop)]

use landau_core::axisym::{
    angular_interaction_integral, arcsin_margin, fenchel_margin, read_axisym, write_axisym, AngularMode, Axis, AxisGrid,
    AxisymField,
};
use landau_core::collision::CollisionOperator;
use landau_core::config::maxwellian;
use landau_core::conv::ConvPath;
use landau_core::diagnostics::{h_plus, heat_kernel, heat_kernel_floor, moments_and_entropy};
use landau_core::inequalities::{g_plus_upper, nonlinearization_pointwise};
use landau_core::fields::{read_snapshot, write_snapshot, DistributionField, ParabolicCylinder, VelocityGrid};
use landau_core::kernel::{kernel_matrix, kernel_sqrt_variant, mat_mul, mat_vec, norm, sym_eigenvalues, KernelModel, Variant};
use landau_core::regularity::{contains, disjoint, five_expansion, level_schedule, radius_schedule, vitali_cover};
use proptest::prelude::*;

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![
        Just(Variant::Full),
        Just(Variant::Mollified),
        Just(Variant::InPart),
        Just(Variant::OutPart),
        Just(Variant::InPartMollified),
        Just(Variant::OutPartMollified),
    ]
}

fn model() -> impl Strategy<Value = KernelModel> {
    (-3.0..-2.01f64, 0.05..0.95f64, 1.0..20.0f64).prop_map(|(g, d, n)| KernelModel::new(g, d, n).unwrap())
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-3.0..3.0f64).prop_filter("nonzero", |z| norm(*z) > 1e-3)
}

fn cylinder() -> impl Strategy<Value = ParabolicCylinder> {
    (0.0..1.0f64, prop::array::uniform3(-1.0..1.0f64), 0.01..0.5f64).prop_map(|(t, v, r)| ParabolicCylinder { t0: t, v0: v, r })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn kernel_is_symmetric_psd_with_z_in_its_null_space(m in model(), z in point(), v in variant()) {
        let a = kernel_matrix(z, &m, v).unwrap();
        let scale = a.iter().flatten().fold(0.0f64, |s, x| s.max(x.abs())).max(f64::MIN_POSITIVE);
        for i in 0..3 {
            for j in 0..3 {
                prop_assert_eq!(a[i][j], a[j][i]);
            }
        }
        prop_assert!(sym_eigenvalues(&a)[0] >= -1e-12 * scale);
        let az = mat_vec(&a, z);
        prop_assert!(norm(az) <= 1e-12 * scale * norm(z));
    }

    #[test]
    fn kernel_split_adds_up(m in model(), z in point()) {
        let get = |v| kernel_matrix(z, &m, v).unwrap();
        let (full, inp, outp) = (get(Variant::Full), get(Variant::InPart), get(Variant::OutPart));
        let (moll, inm, outm) = (get(Variant::Mollified), get(Variant::InPartMollified), get(Variant::OutPartMollified));
        let scale = full.iter().flatten().fold(0.0f64, |s, x| s.max(x.abs()));
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((full[i][j] - inp[i][j] - outp[i][j]).abs() <= 1e-13 * scale);
                prop_assert!((moll[i][j] - inm[i][j] - outm[i][j]).abs() <= 1e-13 * scale);
            }
        }
    }

    #[test]
    fn kernel_square_root_squares_back(m in model(), z in point(), v in variant()) {
        let s = kernel_sqrt_variant(z, &m, v).unwrap();
        let a = kernel_matrix(z, &m, v).unwrap();
        let ss = mat_mul(&s, &s);
        let scale = a.iter().flatten().fold(0.0f64, |x, y| x.max(y.abs())).max(f64::MIN_POSITIVE);
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((ss[i][j] - a[i][j]).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn grid_index_map_inverts(n in 8usize..40, l in 0.5..10.0f64, seed in any::<u64>()) {
        let g = VelocityGrid::new(n, l).unwrap();
        let idx = (seed % g.len() as u64) as usize;
        let (a, b, c) = g.unindex(idx);
        prop_assert_eq!(g.index(a, b, c), idx);
        let p = g.position(idx);
        prop_assert_eq!(p, [g.coord(a), g.coord(b), g.coord(c)]);
    }

    #[test]
    fn snapshot_round_trip(vals in prop::collection::vec(0.0..1e3f64, 512), t in -5.0..5.0f64) {
        let g = VelocityGrid::new(8, 2.0).unwrap();
        let f = DistributionField::new(g, t, vals).unwrap();
        prop_assert_eq!(read_snapshot(&write_snapshot(&f)).unwrap(), f);
    }

    #[test]
    fn schedules_are_monotone(j in 0u32..60) {
        prop_assert!(radius_schedule(j + 1) < radius_schedule(j) || radius_schedule(j) == 0.5);
        prop_assert!(radius_schedule(j) >= 0.5);
        prop_assert!(level_schedule(j + 1) > level_schedule(j) || level_schedule(j) == 2.0);
        prop_assert!(level_schedule(j) <= 2.0);
    }

    #[test]
    fn truncated_entropy_density_is_nonnegative(r in 0.0..1e6f64, kappa in 1.0..10.0f64) {
        prop_assert!(h_plus(r, kappa) >= 0.0);
    }

    #[test]
    fn heat_kernel_stays_above_its_floor(lambda in 0.05..2.0f64, s in 0.0..1.0f64, v in prop::array::uniform3(-1.0..1.0f64)) {
        let t = -4.0 * lambda * lambda * s;
        let v = v.map(|x| x * 2.0 * lambda / 3f64.sqrt());
        prop_assert!(heat_kernel(t, v, lambda).unwrap() >= heat_kernel_floor(lambda));
    }

    #[test]
    fn nonlinearization_pointwise_bounds(g in 0.0..50.0f64, kappa in 1.0..4.0f64, frac in 0.01..0.99f64) {
        let kappa_bar = kappa + frac;
        let (lhs, rhs) = nonlinearization_pointwise(g, kappa, kappa_bar).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
        let (g2, excess) = g_plus_upper(g, kappa);
        prop_assert!(g2 <= excess * (1.0 + 1e-12));
    }

    #[test]
    fn fenchel_and_arcsin_margins_are_nonnegative(p in 1e-3..100.0f64, q in 1e-6..10.0f64, y in 0.0..=1.0f64) {
        prop_assert!(fenchel_margin(p, q) >= 0.0);
        prop_assert!(arcsin_margin(y) >= -1e-15);
    }

    #[test]
    fn angular_integral_is_below_its_bound(a in 1e-3..2.0f64, b in 0.05..3.0f64, sigma0 in 0.01..3.0f64) {
        let exact = angular_interaction_integral(a, b, sigma0, AngularMode::ExactQuadrature).unwrap();
        let bound = angular_interaction_integral(a, b, sigma0, AngularMode::ArsinhBound).unwrap();
        prop_assert!(exact <= bound * (1.0 + 1e-9));
    }

    #[test]
    fn disjointness_is_symmetric_and_expansion_contains(a in cylinder(), b in cylinder()) {
        prop_assert_eq!(disjoint(&a, &b), disjoint(&b, &a));
        prop_assert!(contains(&five_expansion(&a), &a));
        if !disjoint(&a, &b) && b.r <= a.r {
            prop_assert!(contains(&five_expansion(&a), &b));
        }
    }

    #[test]
    fn vitali_selection_is_disjoint_and_covers(family in prop::collection::vec(cylinder(), 1..30)) {
        let chosen = vitali_cover(&family).unwrap();
        for (k, &a) in chosen.iter().enumerate() {
            for &b in &chosen[k + 1..] {
                prop_assert!(disjoint(&family[a], &family[b]));
            }
        }
        for c in &family {
            prop_assert!(chosen.iter().any(|&s| contains(&five_expansion(&family[s]), c)));
        }
    }

    #[test]
    fn reconstruction_is_rotation_invariant(dir in point(), rho in 0.0..1.5f64, along in -1.0..1.0f64, t1 in 0.0..6.3f64, t2 in 0.0..6.3f64) {
        let axis = Axis::new([0.1, -0.2, 0.0], dir).unwrap();
        let grid = AxisGrid::new(33, 0.05, 41, -1.0, 0.05).unwrap();
        let f = AxisymField::from_fn(axis, grid, 0.0, |r, z| (-(r - 0.7).powi(2) - z * z).exp());
        let a = f.eval(axis.point(rho, t1, along));
        let b = f.eval(axis.point(rho, t2, along));
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        let back = read_axisym(&write_axisym(&f)).unwrap();
        prop_assert_eq!(back.values, f.values);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn diffusion_matrix_is_psd_and_pairs_antisymmetric(
        theta in 0.3..1.5f64,
        u in prop::array::uniform3(-0.3..0.3f64),
        bump in 0.0..0.5f64,
    ) {
        let g = VelocityGrid::new(8, 2.0).unwrap();
        let f = DistributionField::from_fn(g, 0.0, |v| {
            maxwellian(v, 1.0, u, theta) + bump * maxwellian(v, 1.0, [0.5, 0.0, 0.0], 0.2)
        });
        let op = CollisionOperator::new(g, KernelModel::coulomb(1.0), Variant::Mollified, ConvPath::Direct).unwrap();
        prop_assert!(op.diffusion_matrix(&f).unwrap().is_psd());
        let report = op.dissipation_pairs(&f, 7).unwrap();
        let lookup: std::collections::HashMap<(usize, usize), [f64; 3]> =
            report.samples.iter().map(|s| ((s.v, s.w), s.value)).collect();
        for s in &report.samples {
            let back = lookup[&(s.w, s.v)];
            for d in 0..3 {
                prop_assert!((s.value[d] + back[d]).abs() <= 1e-12 * (1.0 + s.value[d].abs()));
            }
        }
        prop_assert!(report.total >= 0.0);
        prop_assert!(moments_and_entropy(&f).mass > 0.0);
    }
}
