use proptest::prelude::*;

use gbspe_core::advantage::{estimate_percentage, AdvantageConfig, AdvantageMode, TrialRecord};
use gbspe_core::estimators::{
    guaranteed_sample_size, hybrid_plan, mu_haf, mu_hafsq, variance_gbsi, variance_gbsi_direct,
    variance_gbsp, variance_mc_haf, variance_mc_hafsq, AccuracySpec, SliceInput, DEFAULT_PAIR_BUDGET,
};
use gbspe_core::gbs::{build_degree_sampler, degree_mass_closed_form, GbsProgram};
use gbspe_core::hafnian::{hafnian_dense, hafnian_matching_sum, hafnian_multiindex, hafnian_repeated};
use gbspe_core::problem::{sample_problem_instance, ProblemShape};
use gbspe_core::{HafnianCache, MultiIndex, RngStream, SymmetricMatrix};

fn symmetric(n: usize, entries: &[f64]) -> SymmetricMatrix {
    SymmetricMatrix::from_fn(n, |i, j| entries[i.min(j) * n + i.max(j)])
}

fn arb_matrix(max_half: usize) -> impl Strategy<Value = SymmetricMatrix> {
    (1..=max_half).prop_flat_map(|h| {
        let n = 2 * h;
        proptest::collection::vec(-1.0f64..1.0, n * n).prop_map(move |e| symmetric(n, &e))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hafnian_routes_agree(a in arb_matrix(5)) {
        let reference = hafnian_matching_sum(&a).unwrap();
        let ones = MultiIndex::new(vec![1; a.dim()]);
        let scale = hafnian_matching_sum(&SymmetricMatrix::from_fn(a.dim(), |i, j| a.get(i, j).abs())).unwrap();
        prop_assert!((hafnian_dense(&a).unwrap() - reference).abs() <= 1e-12 * scale.max(1.0));
        prop_assert!((hafnian_repeated(&a, &ones).unwrap() - reference).abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn hafnian_is_homogeneous(a in arb_matrix(4), c in 0.1f64..3.0) {
        let h = hafnian_dense(&a).unwrap();
        let hc = hafnian_dense(&a.scaled(c)).unwrap();
        let expect = c.powi(a.dim() as i32 / 2) * h;
        let scale = hafnian_matching_sum(&SymmetricMatrix::from_fn(a.dim(), |i, j| a.get(i, j).abs())).unwrap();
        prop_assert!((hc - expect).abs() <= 1e-11 * scale.max(1.0) * c.powi(a.dim() as i32 / 2).max(1.0));
    }

    #[test]
    fn repeated_index_equals_expanded_matrix(
        entries in proptest::collection::vec(-1.0f64..1.0, 9),
        idx in proptest::collection::vec(0u32..4, 3),
    ) {
        let b = symmetric(3, &entries);
        let mut idx = idx;
        if idx.iter().sum::<u32>() % 2 == 1 { idx[0] += 1; }
        let i = MultiIndex::new(idx);
        let cache = HafnianCache::new();
        let fast = hafnian_multiindex(&b, &i, &cache).unwrap();
        let rows = i.expanded_rows();
        let expanded = SymmetricMatrix::from_fn(rows.len(), |p, q| b.get(rows[p], rows[q]));
        let reference = hafnian_matching_sum(&expanded).unwrap();
        prop_assert!((fast - reference).abs() <= 1e-11 * reference.abs().max(1.0));
    }

    #[test]
    fn instance_invariants(seed in any::<u64>(), n in 1usize..5, k in 1u32..4) {
        let cache = HafnianCache::new();
        let shape = ProblemShape::new(n, k).unwrap();
        let (inst, w) = sample_problem_instance(&mut RngStream::new(seed), shape).unwrap();
        prop_assert!(w >= 0.0);
        let program = GbsProgram::for_instance(&inst).unwrap();
        prop_assert!((program.mean_photon_number() - 2.0 * k as f64).abs() <= 1e-9 * 2.0 * k as f64);
        let sampler = build_degree_sampler(&program, k, &cache).unwrap();
        let closed = degree_mass_closed_form(inst.eigenvalues(), program.t, k).unwrap();
        prop_assert!((sampler.degree_mass() - closed).abs() <= 1e-9 * closed);
        prop_assert!(sampler.degree_mass() <= 1.0 / (2.0 * std::f64::consts::PI).sqrt() + 1e-9);

        let vi = variance_gbsi(&inst, &program, &cache).unwrap();
        let vd = variance_gbsi_direct(&inst, &program, &cache).unwrap();
        prop_assert!((vi - vd).abs() <= 1e-10 * vi.max(vd).max(f64::MIN_POSITIVE));
        prop_assert!(variance_gbsp(&inst, &program, &cache).unwrap() >= 0.0);
        prop_assert!(variance_mc_haf(&inst, &cache, DEFAULT_PAIR_BUDGET).unwrap() >= 0.0);
        prop_assert!(variance_mc_hafsq(&inst, &cache, DEFAULT_PAIR_BUDGET).unwrap() >= 0.0);
    }

    #[test]
    fn negation_flips_targets(seed in any::<u64>()) {
        let cache = HafnianCache::new();
        let (inst, _) = sample_problem_instance(&mut RngStream::new(seed), ProblemShape::new(3, 1).unwrap()).unwrap();
        let neg = inst.with_coefficients(inst.coefficients().iter().map(|a| -a).collect()).unwrap();
        prop_assert_eq!(mu_haf(&neg, &cache).unwrap(), -mu_haf(&inst, &cache).unwrap());
        prop_assert_eq!(mu_hafsq(&neg, &cache).unwrap(), -mu_hafsq(&inst, &cache).unwrap());
    }

    #[test]
    fn sample_size_is_monotone_in_variance(v1 in 0.0f64..1e6, v2 in 0.0f64..1e6, mu in 0.01f64..10.0,
                                          eps in 0.01f64..0.99, delta in 0.01f64..0.99) {
        let spec = AccuracySpec::new(eps, delta).unwrap();
        let (lo, hi) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
        let n_lo = guaranteed_sample_size(lo, mu, spec).unwrap();
        let n_hi = guaranteed_sample_size(hi, mu, spec).unwrap();
        prop_assert!(n_lo >= 1 && n_lo <= n_hi);
        prop_assert_eq!(guaranteed_sample_size(lo, -mu, spec).unwrap(), n_lo);
    }

    #[test]
    fn hybrid_never_costs_more(slices in proptest::collection::vec((0.01f64..5.0, 0.0f64..100.0, 0.0f64..100.0), 1..6)) {
        let input: Vec<SliceInput> = slices
            .iter()
            .enumerate()
            .map(|(k, &(mu, v_mc, v_gbs))| SliceInput { k: k as u32 + 1, mu, v_mc, v_gbs })
            .collect();
        let plan = hybrid_plan(&input, AccuracySpec::new(0.1, 0.1).unwrap()).unwrap();
        prop_assert!(plan.total_hybrid <= plan.total_mc.min(plan.total_gbs));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn percentage_is_a_proportion(seed in any::<u64>(), gbsi in any::<bool>()) {
        let mode = if gbsi { AdvantageMode::GbsiVsMcHafSq } else { AdvantageMode::GbspVsMcHaf };
        let config = AdvantageConfig::new(ProblemShape::new(2, 2).unwrap(), mode, 4, 6, seed);
        let r = estimate_percentage(&config).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.percentage));
        prop_assert_eq!(*r.trace.last().unwrap(), r.percentage);
        prop_assert!(r.trace.iter().all(|p| (0.0..=1.0).contains(p)));
        for rec in &r.records {
            prop_assert_eq!(rec.h, TrialRecord::indicator(rec.v_mc, rec.v_gbs));
        }
    }
}
