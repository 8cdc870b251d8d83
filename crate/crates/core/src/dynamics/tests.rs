use super::*;
use crate::hamilton::{code, Sign};
use crate::spectra::{solve_dirichlet, GalerkinOptions};
use proptest::prelude::*;
use std::f64::consts::PI;

fn kg(a: f64, modes: usize) -> KleinGordon {
    KleinGordon::new(1.0, modes, &[LadderTerm::constant(2, 2.0 * a)], None).unwrap()
}

fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn state(model: &dyn Model, s: f64, radius: f64, seed: u64) -> Vec<Complex64> {
    random_state(&mut seeded(seed), model.family(), s, radius, f64::INFINITY).unwrap()
}

#[test]
fn complexify_zero_and_round_trip() {
    assert!(kg_complexify(&[0.0; 4], &[0.0; 4], 1.0).unwrap().iter().all(|z| *z == Complex64::default()));
    let phi = [0.3, -0.1, 0.05, 0.7];
    let psi = [-0.2, 0.4, 0.0, 0.01];
    let u = kg_complexify(&phi, &psi, 0.5).unwrap();
    let (a, b) = kg_decomplexify(&u, 0.5).unwrap();
    for i in 0..4 {
        assert!((a[i] - phi[i]).abs() < 1e-15 && (b[i] - psi[i]).abs() < 1e-15);
    }
    assert!(kg_complexify(&phi, &psi, -1.0).is_err());
}

#[test]
fn harmonic_energy_of_a_sine() {
    let n = 3;
    let mut phi = vec![0.0; 5];
    phi[n - 1] = (PI / 2.0).sqrt(); // sin(3x) = sqrt(π/2) e_3
    let e = harmonic_energy(&phi, &[0.0; 5], 2.0, n).unwrap();
    assert!((e - 11f64.sqrt() * (PI / 2.0).powi(2)).abs() < 1e-13);
    let psi = [0.1, 0.2, -0.3, 0.0, 0.5];
    let u = kg_complexify(&phi, &psi, 2.0).unwrap();
    for k in 1..=5 {
        let e = harmonic_energy(&phi, &psi, 2.0, k).unwrap();
        assert!((e - PI / 2.0 * u[k - 1].norm_sqr()).abs() < 1e-14);
        assert!(e >= 0.0);
    }
}

#[test]
fn kg_cubic_coefficient_by_hand() {
    // g = aΦ² gives P⁽³⁾ = -(a/3) ∫ Φ³; the (+,+,+) coefficient on mode 1 is
    // -(1/3!) · 2a · ω₁^{-3/2} (2/π)^{3/2} / 8 · ∫ sin³ = ... with ∫₀^π sin³ = 4/3
    let a = 0.7;
    let m = kg(a, 4);
    let p = m.perturbation().unwrap();
    let w1 = 2f64.sqrt();
    let expected = -(2.0 * a / 6.0) * w1.powf(-1.5) * (2.0 / PI).powf(1.5) / 8.0 * (4.0 / 3.0);
    let key: crate::hamilton::Key = [code(0, Sign::Plus); 3].into_iter().collect();
    assert!((p.get(&key).re - expected).abs() < 1e-15, "{} vs {expected}", p.get(&key).re);
    // ∫ sin² x sin 2x = 0 exactly, so the key is absent
    let key: crate::hamilton::Key = [code(0, Sign::Plus), code(0, Sign::Plus), code(1, Sign::Minus)].into_iter().collect();
    assert_eq!(p.get(&key), Complex64::default());
    assert_eq!(p.degrees(), vec![3]);
    assert!(p.reality_defect() == 0.0);
}

#[test]
fn kg_polynomial_matches_the_discrete_model() {
    let m = KleinGordon::new(
        1.0,
        6,
        &[LadderTerm::constant(2, 1.4), LadderTerm { order: 3, value: -0.5, profile: Some(Potential::cosine(1)) }],
        None,
    )
    .unwrap();
    let p = m.perturbation().unwrap();
    assert_eq!(p.degrees(), vec![3, 4]);
    let model: &dyn Model = &m;
    let u = state(model, 0.5, 0.3, 1);
    let h = model.hamiltonian(&u);
    assert!((h - m.z2().evaluate(&u) - p.evaluate(&u).unwrap()).abs() < 1e-14 * h.abs());
    // the kick moves u by -i dt ∇P(u) up to O(dt²) along Ψ, exactly linear in dt
    let dt = 1e-3;
    let mut v = u.clone();
    model.kick(&mut v, dt);
    let g = p.gradient(&u).unwrap();
    for k in 0..u.len() {
        let expect = -Complex64::i() * g[k] * dt;
        assert!((v[k] - u[k] - expect).norm() < 1e-12 * dt, "{k}");
    }
}

#[test]
fn linear_limit_keeps_moduli() {
    let spec = ModelSpec::KleinGordon { mass: 1.0, modes: 8, nonlinearity: vec![], grid: None };
    let model = spec.build().unwrap();
    let u = state(model.as_ref(), 0.5, 0.1, 2);
    let (trace, _) = integrate(model.as_ref(), &u, 100.0, 0.01, &IntegrateOptions::new(100, 0.5)).unwrap();
    assert_eq!(trace.steps, 10_000);
    assert!(conservation(&trace).modulus_drift <= 1e-12);
    assert!(orbital_alignment_error(&trace, 1.0).iter().all(|e| *e <= 1e-12));
    assert!(track_superactions(&trace, 0.0, 0.0).iter().all(|r| r.sup_drift <= 1e-12));
}

fn nls_dirichlet() -> Box<dyn Model> {
    let v = Potential::Fourier { cos: vec![0.1, 0.3, -0.2], sin: vec![] };
    ModelSpec::nls_cubic(NlsBoundary::Dirichlet, v, 1.0, 16).build().unwrap()
}

#[test]
fn nls_mass_is_conserved_over_ten_thousand_steps() {
    let periodic = ModelSpec::nls_cubic(NlsBoundary::Periodic, Potential::cosine(2), -1.0, 8).build().unwrap();
    let plane = ModelSpec::Nls2d {
        vhat: vec![ConvolutionEntry { n: [1, 0], value: 0.3 }],
        modes: 4,
        nonlinearity: vec![LadderTerm::constant(1, 1.0)],
    }
    .build()
    .unwrap();
    for model in [nls_dirichlet(), periodic, plane] {
        let u = state(model.as_ref(), 1.0, 0.5, 3);
        let (trace, _) = integrate(model.as_ref(), &u, 100.0, 0.01, &IntegrateOptions::new(1000, 1.0)).unwrap();
        let c = conservation(&trace);
        assert!(c.mass_drift.unwrap() <= 1e-11, "{} {:e}", model.name(), c.mass_drift.unwrap());
    }
}

fn drift_ratio(model: &dyn Model, u: &[Complex64], t: f64, dt: f64) -> f64 {
    let opts = IntegrateOptions { stride: 1, s: 1.0, forcing: false };
    let (a, _) = integrate(model, u, t, dt, &opts).unwrap();
    let (b, _) = integrate(model, u, t, dt / 2.0, &opts).unwrap();
    energy_error(&a) / energy_error(&b)
}

#[test]
fn energy_error_is_second_order() {
    let k = kg(1.0, 8);
    let u = state(&k, 0.5, 0.2, 4);
    let r = drift_ratio(&k, &u, 5.0, 0.02);
    assert!((3.5..=4.5).contains(&r), "kg {r}");
    let n = nls_dirichlet();
    let u = state(n.as_ref(), 1.0, 0.5, 4);
    let r = drift_ratio(n.as_ref(), &u, 2.0, 0.005);
    assert!((3.5..=4.5).contains(&r), "nls {r}");
}

#[test]
fn splitting_is_time_reversible() {
    let k = kg(1.0, 8);
    let u = state(&k, 0.5, 0.2, 5);
    let opts = IntegrateOptions { stride: 100, s: 0.5, forcing: false };
    let (_, v) = integrate(&k, &u, 10.0, 0.01, &opts).unwrap();
    let (_, w) = integrate(&k, &v, -10.0, -0.01, &opts).unwrap();
    let err = u.iter().zip(&w).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err <= 10.0 * 0.01f64.powi(2) * 10.0 && err < 1e-11, "{err:e}");
}

#[test]
fn free_dirichlet_nls_has_square_frequencies() {
    let m = ModelSpec::nls_cubic(NlsBoundary::Dirichlet, Potential::zero(), 1.0, 12).build().unwrap();
    for (id, w) in m.family().omega().iter().enumerate() {
        let n = m.family().lattice().mode(id).first() as f64;
        assert!((w - n * n).abs() < 1e-10 * n * n);
    }
}

#[test]
fn collocation_spectrum_tracks_galerkin() {
    let v = Potential::Fourier { cos: vec![0.2, 0.5, -0.3], sin: vec![] };
    let m = Nls1d::new(NlsBoundary::Dirichlet, &v, 32, &[]).unwrap();
    let sys = solve_dirichlet(&v, &GalerkinOptions::new(8, 128)).unwrap();
    for n in 1..=8 {
        let w = m.family().omega()[n - 1];
        assert!((w - sys.eigenvalue(n as i32).unwrap()).abs() < 1e-6, "{n}");
    }
}

#[test]
fn free_periodic_groups_pair_plus_minus() {
    let m = ModelSpec::nls_cubic(NlsBoundary::Periodic, Potential::zero(), 1.0, 5).build().unwrap();
    let groups = m.groups();
    assert_eq!(groups.len(), 6);
    assert_eq!(groups[0].len(), 1);
    assert!(groups[1..].iter().all(|g| g.len() == 2));
    assert!(ModelSpec::nls_cubic(NlsBoundary::Periodic, Potential::Fourier { cos: vec![], sin: vec![1.0] }, 1.0, 5)
        .build()
        .is_err());
}

#[test]
fn grid_transforms_invert() {
    let d = Nls1d::new(NlsBoundary::Periodic, &Potential::cosine(1), 6, &[]).unwrap();
    let m: &dyn Model = &d;
    let u = state(m, 1.0, 1.0, 6);
    let back = d.from_grid(&d.to_grid(&u));
    assert!(u.iter().zip(&back).all(|(a, b)| (a - b).norm() < 1e-14));
    let p = Nls2d::new(&[], 3, &[]).unwrap();
    let m: &dyn Model = &p;
    let u = state(m, 1.0, 1.0, 6);
    let back = p.from_grid(&p.to_grid(&u));
    assert!(u.iter().zip(&back).all(|(a, b)| (a - b).norm() < 1e-14));
}

#[test]
fn plane_wave_keeps_its_modulus() {
    let spec = ModelSpec::Nls2d { vhat: vec![], modes: 3, nonlinearity: vec![LadderTerm::constant(1, 1.0)] };
    let model = spec.build().unwrap();
    let id = model.family().lattice().require(&ModeIndex::d2(1, -2)).unwrap();
    let mut u = vec![Complex64::default(); model.len()];
    u[id] = Complex64::new(0.4, 0.3);
    let (trace, _) = integrate(model.as_ref(), &u, 10.0, 0.01, &IntegrateOptions::new(50, 1.0)).unwrap();
    assert!(conservation(&trace).modulus_drift < 1e-13);
}

#[test]
fn action_derivative_matches_bracket() {
    let k = kg(1.0, 8);
    let p = k.perturbation().unwrap();
    let u = state(&k, 0.5, 0.3, 7);
    let dt = 1e-5;
    let opts = IntegrateOptions { stride: 1, s: 0.5, forcing: false };
    let (fwd, _) = integrate(&k, &u, 5.0 * dt, dt, &opts).unwrap();
    let (bwd, _) = integrate(&k, &u, -5.0 * dt, -dt, &opts).unwrap();
    let g = p.gradient(&u).unwrap();
    let model: &dyn Model = &k;
    // dJ/dt = (∇J, -i∇P) with ∇J = 2u on the group
    let exact: Vec<f64> = model
        .groups()
        .iter()
        .map(|members| members.iter().map(|&i| (2.0 * u[i].conj() * (-Complex64::i() * g[i])).re).sum())
        .collect();
    let scale = exact.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    for (gi, e) in exact.iter().enumerate() {
        let fd = (fwd.samples.last().unwrap().actions[gi] - bwd.samples.last().unwrap().actions[gi]) / (10.0 * dt);
        assert!((fd - e).abs() <= 1e-6 * scale, "group {gi}: {fd} vs {e}");
    }
}

#[test]
fn energies_follow_moduli_along_a_trace() {
    let k = kg(1.0, 6);
    let u = state(&k, 0.5, 0.2, 8);
    let (trace, _) = integrate(&k, &u, 1.0, 0.01, &IntegrateOptions::new(10, 0.5)).unwrap();
    for s in &trace.samples {
        for (e, m) in s.energies.iter().zip(&s.moduli) {
            assert!((e - PI / 2.0 * m * m).abs() <= 1e-15 * e.max(1e-300) * 4.0);
        }
    }
    assert_eq!(orbital_alignment_error(&trace, 1.0)[0], 0.0);
}

#[test]
fn drifts_bound_the_mass_change() {
    let k = kg(1.0, 6);
    let u = state(&k, 0.5, 0.2, 9);
    let (trace, _) = integrate(&k, &u, 20.0, 0.01, &IntegrateOptions::new(10, 0.5)).unwrap();
    let rows = track_superactions(&trace, 0.0, 0.0);
    let total: f64 = rows.iter().map(|r| r.sup_drift).sum();
    let l2 = |s: &TraceSample| s.moduli.iter().map(|m| m * m).sum::<f64>();
    for s in &trace.samples {
        assert!((l2(s) - l2(&trace.samples[0])).abs() <= total * (1.0 + 1e-12));
    }
    assert!(total > 0.0);
}

#[test]
fn blowup_aborts_with_partial_trace() {
    let k = kg(1.0, 4);
    let u = state(&k, 0.5, 20.0, 10);
    match integrate(&k, &u, 100.0, 0.01, &IntegrateOptions::new(10, 0.5)) {
        Err(DynamicsError::Aborted { trace, time, .. }) => {
            assert!(time < 100.0);
            assert!(!trace.samples.is_empty());
        }
        other => panic!("expected abort, got {:?}", other.map(|t| t.0.steps)),
    }
}

#[test]
fn coercivity_sweep_and_violation() {
    let k = kg(1.0, 8);
    let m: &dyn Model = &k;
    let zero = coercivity_check(m, &[Complex64::default(); 8], 0.5);
    assert_eq!(zero.ratio, 0.0);
    assert!(zero.validated);
    let a = coercivity_sweep(m, &[0.02, 0.01], 20, 0.5, 1).unwrap();
    let b = coercivity_sweep(m, &[0.01, 0.005], 20, 0.5, 1).unwrap();
    assert!(a.violations.is_empty() && b.violations.is_empty());
    assert!(a.lambda.is_finite() && (a.lambda - b.lambda).abs() < 0.05 * a.lambda);
    let big = coercivity_sweep(m, &[400.0], 20, 0.5, 1).unwrap();
    assert_eq!(big.violations, vec![400.0]);
}

#[test]
fn forcing_vanishes_only_without_nonlinearity() {
    let k = kg(1.0, 6);
    let u = state(&k, 0.5, 0.2, 11);
    assert!(Model::forcing(&k, &u, 0.5) > 0.0);
    let lin = KleinGordon::new(1.0, 6, &[], None).unwrap();
    assert_eq!(Model::forcing(&lin, &u, 0.5), 0.0);
    let n = nls_dirichlet();
    let v = state(n.as_ref(), 1.0, 0.5, 11);
    assert!(n.forcing(&v, 1.0) > 0.0);
    let p = ModelSpec::Nls2d { vhat: vec![], modes: 3, nonlinearity: vec![LadderTerm::constant(1, 1.0)] }.build().unwrap();
    let w = state(p.as_ref(), 1.0, 0.5, 11);
    assert!(p.forcing(&w, 1.0) > 0.0);
}

#[test]
fn spec_serde_and_validation() {
    let spec = ModelSpec::kg_quadratic(1.0, 1.0, 12);
    let text = serde_json::to_string(&spec).unwrap();
    assert_eq!(serde_json::from_str::<ModelSpec>(&text).unwrap(), spec);
    assert!(serde_json::from_str::<ModelSpec>(r#"{"kind":"klein-gordon","mass":1,"modes":3,"bogus":1}"#).is_err());
    assert!(ModelSpec::kg_quadratic(-1.0, 1.0, 4).validate().is_err());
    assert!(ModelSpec::KleinGordon { mass: 1.0, modes: 4, nonlinearity: vec![LadderTerm::constant(1, 1.0)], grid: None }
        .validate()
        .is_err());
    assert_eq!(spec.order(), Some(3));
    assert_eq!(ModelSpec::nls_cubic(NlsBoundary::Dirichlet, Potential::zero(), 1.0, 4).order(), Some(4));
}

#[test]
fn csv_has_header_and_full_precision() {
    let k = kg(1.0, 3);
    let u = state(&k, 0.5, 0.1, 12);
    let (trace, _) = integrate(&k, &u, 0.1, 0.01, &IntegrateOptions::new(5, 0.5)).unwrap();
    let mut buf = vec![];
    trace.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,norm,hamiltonian,J_1,J_2,J_3,E_1,E_2,E_3,forcing");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 10);
    let mantissa = row[1].split('e').next().unwrap();
    assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
    assert_eq!(text.lines().count(), 1 + 3);
}

#[test]
fn scaling_without_nonlinearity_is_exact_zero() {
    let spec = ModelSpec::KleinGordon { mass: 1.0, modes: 6, nonlinearity: vec![], grid: None };
    let opts = ScalingOptions {
        eps: vec![0.1, 0.05, 0.025],
        r: 5,
        p: 3,
        seeds: vec![1],
        dt: 0.05,
        t_cap: 5.0,
        track: 4.5,
        support: 4.5,
        s: None,
        stride: 10,
        compare_doubled: false,
    };
    let rep = scaling_experiment(&spec, &opts).unwrap();
    assert!(rep.exact_zero);
    assert_eq!(rep.slope, None);
    assert_eq!(rep.cells.len(), 3);
    let mut bad = opts.clone();
    bad.eps = vec![0.1, 0.05, 0.03];
    assert!(scaling_experiment(&spec, &bad).is_err());
}

#[test]
fn parallel_cells_match_serial() {
    let spec = ModelSpec::kg_quadratic(1.0, 1.0, 6);
    let opts = ScalingOptions {
        eps: vec![0.2, 0.1, 0.05],
        r: 5,
        p: 3,
        seeds: vec![1, 2],
        dt: 0.05,
        t_cap: 10.0,
        track: 3.5,
        support: 3.5,
        s: None,
        stride: 10,
        compare_doubled: true,
    };
    let a = serde_json::to_string(&scaling_experiment(&spec, &opts).unwrap()).unwrap();
    let b = serde_json::to_string(&scaling_experiment_parallel(&spec, &opts, 3).unwrap()).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn complexify_round_trip(phi in prop::collection::vec(-1.0f64..1.0, 1..8), m in -0.9f64..5.0) {
        let psi: Vec<f64> = phi.iter().map(|x| 0.5 - x).collect();
        let u = kg_complexify(&phi, &psi, m).unwrap();
        let (a, b) = kg_decomplexify(&u, m).unwrap();
        for i in 0..phi.len() {
            prop_assert!((a[i] - phi[i]).abs() < 1e-14 && (b[i] - psi[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn nls_kick_is_an_isometry(seed in 0u64..1000) {
        let m = nls_dirichlet();
        let mut u = state(m.as_ref(), 1.0, 1.0, seed);
        let before: f64 = u.iter().map(|z| z.norm_sqr()).sum();
        m.kick(&mut u, 0.3);
        let after: f64 = u.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((after - before).abs() < 1e-14 * before);
    }
}
