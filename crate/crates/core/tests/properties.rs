//! Property-based tests of the pure numerical building blocks: randomized
//! inputs exercise the invariants each operator promises regardless of the
//! particular field.

use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use dg_tracer::cases::{HZ_SLICE_M, LX_SLICE_M};
use dg_tracer::chemistry::{chemistry_tendency, K2};
use dg_tracer::diagnostics::{log_log_slope, relative_drift, DiagnosticsSeries, StepRecord};
use dg_tracer::field::Field;
use dg_tracer::limiter::{apply_mmr_limiter, mean_mixing_ratio, positive_definite_vertex_limiter};
use dg_tracer::mesh::{build_slice_mesh, Mesh};
use dg_tracer::remap::{
    galerkin_project, identify_mixing_ratio, inject, SolverPolicy, DEFAULT_DENSITY_GUARD_REL,
};
use dg_tracer::space::{make_space, FunctionSpace, SpaceSpec};
use dg_tracer::transport::{ssprk3_step, upwind};

fn small_mesh() -> &'static Arc<Mesh> {
    static MESH: OnceLock<Arc<Mesh>> = OnceLock::new();
    MESH.get_or_init(|| Arc::new(build_slice_mesh(4, 4, LX_SLICE_M, HZ_SLICE_M).unwrap()))
}

fn dg1_space() -> &'static Arc<FunctionSpace> {
    static SPACE: OnceLock<Arc<FunctionSpace>> = OnceLock::new();
    SPACE.get_or_init(|| make_space(small_mesh(), SpaceSpec::density(1)).unwrap())
}

fn field_from(values: &[f64], space: &Arc<FunctionSpace>) -> Field {
    let mut f = Field::zeros(space);
    for (slot, v) in f.data.iter_mut().zip(values.iter().cycle()) {
        *slot = *v;
    }
    f
}

proptest! {
    /// The upwind trace always returns one of its inputs, chosen by the
    /// sign of the outward normal velocity.
    #[test]
    fn upwind_selects_the_upstream_side(
        un in -10.0f64..10.0,
        plus in -5.0f64..5.0,
        minus in -5.0f64..5.0,
    ) {
        let picked = upwind(un, plus, minus);
        if un >= 0.0 {
            prop_assert_eq!(picked, plus);
        } else {
            prop_assert_eq!(picked, minus);
        }
    }

    /// For a linear system dq/dt = A q the three-stage scheme applies
    /// exactly the cubic Taylor polynomial of exp(dt A).
    #[test]
    fn ssprk3_applies_cubic_matrix_polynomial(
        entries in proptest::array::uniform9(-1.0f64..1.0),
        q0 in proptest::array::uniform3(-2.0f64..2.0),
        dt in 0.01f64..0.4,
    ) {
        let a = |v: &[f64]| -> Vec<f64> {
            (0..3)
                .map(|i| (0..3).map(|j| entries[3 * i + j] * v[j]).sum())
                .collect()
        };
        let stepped = ssprk3_step(&q0, 0.0, dt, |v, _| Ok(a(v)), |_, _| Ok(())).unwrap();

        // q + dt A q + dt²/2 A²q + dt³/6 A³q, accumulated term by term.
        let mut expected = q0.to_vec();
        let mut term = q0.to_vec();
        for order in 1..=3 {
            term = a(&term);
            let coeff = dt.powi(order) / [1.0, 1.0, 2.0, 6.0][order as usize];
            for (e, t) in expected.iter_mut().zip(&term) {
                *e += coeff * t;
            }
        }
        for (got, want) in stepped.iter().zip(&expected) {
            prop_assert!(
                (got - want).abs() <= 1e-12,
                "stage combination deviates from the cubic polynomial: {} vs {}",
                got,
                want
            );
        }
    }

    /// Slope fitting recovers the exponent of exact power laws.
    #[test]
    fn log_log_slope_recovers_power_laws(
        p in -3.0f64..3.0,
        c in 0.1f64..10.0,
    ) {
        let dx: [f64; 4] = [50.0, 33.3, 25.0, 12.5];
        let err: Vec<f64> = dx.iter().map(|&h| c * h.powf(p)).collect();
        let slope = log_log_slope(&dx, &err).unwrap();
        prop_assert!((slope - p).abs() <= 1e-10, "fitted {slope} for exponent {p}");
    }

    /// Relative drift is zero on identical values and invariant under a
    /// common positive scaling.
    #[test]
    fn relative_drift_is_scale_invariant(
        base in 0.5f64..100.0,
        delta in -0.4f64..0.4,
        scale in 0.01f64..100.0,
    ) {
        prop_assert_eq!(relative_drift(base, base), 0.0);
        let a = relative_drift(base * (1.0 + delta), base);
        let b = relative_drift(scale * base * (1.0 + delta), scale * base);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
    }

    /// CSV emission keeps full precision: every floating-point column
    /// round-trips bit for bit through the text form.
    #[test]
    fn diagnostics_csv_round_trips_exactly(
        t in 0.0f64..1e6,
        integral in 1e-3f64..1e15,
        delta in 0.0f64..1.0,
        m_lo in -1.0f64..1.0,
        span in 0.0f64..2.0,
    ) {
        let mut series = DiagnosticsSeries::default();
        series.rows.push(StepRecord {
            step: 3,
            t,
            integral_rho: integral,
            integral_rho_x: integral * 0.02,
            delta_rho_x_rel: delta,
            m_min: m_lo,
            m_max: m_lo + span,
            limited_cells: 7,
            unfixable_cells: 1,
            l2_error: None,
        });
        let csv = series.to_csv();
        let data_line = csv.lines().nth(1).unwrap();
        let cols: Vec<&str> = data_line.split(',').collect();
        prop_assert_eq!(cols.len(), 9);
        let parsed: Vec<f64> = cols[1..7].iter().map(|s| s.parse().unwrap()).collect();
        let expect = [t, integral, integral * 0.02, delta, m_lo, m_lo + span];
        for (got, want) in parsed.iter().zip(&expect) {
            prop_assert!(
                got.to_bits() == want.to_bits(),
                "column failed to round-trip: {} vs {}",
                got,
                want
            );
        }
    }

    /// Pointwise implicit chemistry preserves the combined species total
    /// and never drives either species negative.
    #[test]
    fn chemistry_tendency_preserves_total_and_positivity(
        x in 0.0f64..8e-6,
        x2 in 0.0f64..4e-6,
        k1 in 1e-8f64..2.0,
        dt in 1.0f64..3600.0,
    ) {
        let d = chemistry_tendency(x, x2, k1, K2, dt).unwrap();
        let (xn, x2n) = (x + d, x2 - 0.5 * d);
        prop_assert!(xn >= -1e-20, "X went negative: {xn:.3e}");
        prop_assert!(x2n >= -1e-20, "X2 went negative: {x2n:.3e}");
        let total_before = x + 2.0 * x2;
        let total_after = xn + 2.0 * x2n;
        prop_assert!(
            (total_after - total_before).abs() <= 1e-16 + 1e-12 * total_before,
            "total changed: {:.3e}",
            total_after - total_before
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// The baseline vertex limiter removes negative nodes while keeping
    /// each cell's arithmetic node mean (its Q1 cell integral on an affine
    /// mesh is proportional to that mean).
    #[test]
    fn baseline_limiter_fixes_negatives_and_keeps_cell_means(
        values in proptest::collection::vec(-0.5f64..2.0, 64),
    ) {
        let space = dg1_space();
        let mut m = field_from(&values, space);
        let means_before: Vec<f64> = (0..space.mesh.n_cells())
            .map(|c| {
                let dofs = space.cell_dofs(c);
                dofs.iter().map(|&d| m.data[d]).sum::<f64>() / dofs.len() as f64
            })
            .collect();
        positive_definite_vertex_limiter(&mut m).unwrap();
        let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        prop_assert!(
            m.data.iter().all(|&v| v >= -1e-14 * scale),
            "negative node survived: min {:.3e}",
            m.data.iter().copied().fold(f64::INFINITY, f64::min)
        );
        for (c, before) in means_before.iter().enumerate() {
            if *before < 0.0 {
                continue; // clipped cells lose their (negative) mean by design
            }
            let dofs = space.cell_dofs(c);
            let after = dofs.iter().map(|&d| m.data[d]).sum::<f64>() / dofs.len() as f64;
            prop_assert!(
                (after - before).abs() <= 1e-13 * scale.max(1.0),
                "cell {} mean moved from {:.6e} to {:.6e}",
                c,
                before,
                after
            );
        }
    }

    /// The mass-preserving limiter keeps every density-weighted cell mean
    /// and leaves no negative node behind in fixable cells.
    #[test]
    fn mmr_limiter_keeps_weighted_means(
        values in proptest::collection::vec(-0.3f64..2.0, 64),
        rho_values in proptest::collection::vec(0.5f64..2.0, 64),
    ) {
        let space = dg1_space();
        let mut m = field_from(&values, space);
        let rho = field_from(&rho_values, space);
        let means_before = mean_mixing_ratio(&m, &rho).unwrap();
        let outcome = apply_mmr_limiter(&mut m, &rho, false).unwrap();
        let means_after = mean_mixing_ratio(&m, &rho).unwrap();
        let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-30);
        for (b, a) in means_before.data.iter().zip(&means_after.data) {
            prop_assert!(
                (a - b).abs() <= 1e-13 * scale,
                "weighted cell mean moved from {:.6e} to {:.6e}",
                b,
                a
            );
        }
        if outcome.unfixable_cells == 0 {
            prop_assert!(
                m.data.iter().all(|&v| v >= -1e-13 * scale),
                "negative node after limiting: {:.3e}",
                m.data.iter().copied().fold(f64::INFINITY, f64::min)
            );
        }
    }

    /// Injection into the enriched transport space followed by projection
    /// back is the identity on the smaller space (nested spaces, tight
    /// solver policy).
    #[test]
    fn nested_inject_project_round_trip_is_identity(
        values in proptest::collection::vec(-2.0f64..2.0, 48),
    ) {
        let mesh = small_mesh();
        let tracer = make_space(mesh, SpaceSpec::staggered_tracer(1)).unwrap();
        let transport = make_space(mesh, SpaceSpec::staggered_transport()).unwrap();
        let m = field_from(&values, &tracer);
        let up = inject(&m, &transport).unwrap();
        let back = galerkin_project(&up, &tracer, &SolverPolicy::tight()).unwrap();
        let max_dev = m
            .data
            .iter()
            .zip(&back.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        prop_assert!(
            max_dev <= 1e-10,
            "inject/project round trip moved a coefficient by {:.3e}",
            max_dev
        );
    }

    /// Nodal identification inverts the nodal product exactly.
    #[test]
    fn identification_inverts_nodal_product(
        m_values in proptest::collection::vec(-1.0f64..1.0, 64),
        rho_values in proptest::collection::vec(0.5f64..2.0, 64),
    ) {
        let space = dg1_space();
        let m = field_from(&m_values, space);
        let rho = field_from(&rho_values, space);
        let mut q = rho.clone();
        for (qv, mv) in q.data.iter_mut().zip(&m.data) {
            *qv *= mv;
        }
        let recovered = identify_mixing_ratio(&q, &rho, DEFAULT_DENSITY_GUARD_REL).unwrap();
        for (got, want) in recovered.data.iter().zip(&m.data) {
            prop_assert!(
                (got - want).abs() <= 1e-15 * want.abs().max(1.0),
                "nodal ratio {} vs {}",
                got,
                want
            );
        }
    }
}
