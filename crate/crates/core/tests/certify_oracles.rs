mod common;

use common::{domain_grid, random_convex_pwa, random_net, random_point, random_pwa_1d, tie_margin};
use maxcert::certify::{
    certify_exact, encode_network_gain, encode_network_output, encode_pwa_law, law_gain_expr, lipschitz, max_error, recover_gain,
    recover_law, recover_output, Alpha, Bound, Certificate, CertifySettings,
};
use maxcert::exact::{build_exact_type1, synthesize_type1};
use maxcert::maxout::{scalar_exact_network, MaxoutLayer};
use maxcert::mpc::{condense, double_integrator, explicit_mpc, scalar_unstable};
use maxcert::{Error, MaxoutNetwork, Polytope, PwaFunction, PwaRegion};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const M: f64 = 1e4;

fn v1(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

fn finite_difference(net: &MaxoutNetwork, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut g = DMatrix::zeros(net.output_dim(), n);
    for r in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[r] += h;
        xm[r] -= h;
        g.set_column(r, &((net.eval(&xp).unwrap() - net.eval(&xm).unwrap()) / (2.0 * h)));
    }
    g
}

#[test]
fn output_encoding_matches_forward_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.gen_range(1..=3);
        let depth = rng.gen_range(1..=2);
        let net = random_net(&mut rng, n, depth, 2, 4, 4);
        let x = random_point(&mut rng, n, 2.0);
        let got = recover_output(&net, &x, M, 0.0).unwrap().expect("feasible with eps = 0");
        assert!((got - net.eval(&x).unwrap()).amax() <= 1e-7);
    }
}

#[test]
fn gain_encoding_matches_delta_product_and_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let eps = 1e-5;
    let mut checked = 0;
    while checked < 50 {
        let n = rng.gen_range(1..=3);
        let depth = rng.gen_range(1..=2);
        let net = random_net(&mut rng, n, depth, 2, 4, 4);
        let x = random_point(&mut rng, n, 2.0);
        if tie_margin(&net, &x) <= 1e-3 {
            continue;
        }
        let got = recover_gain(&net, &x, M, M, eps).unwrap().expect("interior point is feasible");
        assert!((&got - net.local_gain(&x).unwrap()).amax() <= 1e-7);
        assert!((&got - finite_difference(&net, &x, 1e-7)).amax() <= 1e-5);
        checked += 1;
    }
}

#[test]
fn points_within_margin_of_a_tie_are_excluded() {
    let net = scalar_exact_network();
    let eps = 1e-5;
    // Neuron 1 ties at x = 1, neuron 2 at x = -1.
    for x in [1.0, 1.0 + 0.4 * eps, 1.0 - 0.4 * eps, -1.0, -1.0 + 0.4 * eps] {
        assert!(recover_gain(&net, &v1(x), M, M, eps).unwrap().is_none(), "x = {x}");
        assert!(recover_output(&net, &v1(x), M, 0.0).unwrap().is_some());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let net = random_net(&mut rng, 2, 1, 1, 3, 3);
        // Walk from an interior point until the first layer crosses a tie.
        let x0 = random_point(&mut rng, 2, 1.0);
        let dir = random_point(&mut rng, 2, 1.0);
        let pat0 = net.activation_pattern(&x0).unwrap();
        let (mut a, mut b) = (0.0, 0.0);
        for k in 1..400 {
            let t = k as f64 * 0.01;
            if net.activation_pattern(&(&x0 + &dir * t)).unwrap().winners != pat0.winners {
                b = t;
                a = t - 0.01;
                break;
            }
        }
        if b == 0.0 {
            continue;
        }
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if net.activation_pattern(&(&x0 + &dir * mid)).unwrap().winners == pat0.winners {
                a = mid;
            } else {
                b = mid;
            }
        }
        let tie = &x0 + &dir * a;
        assert!(tie_margin(&net, &tie) < 1e-9);
        assert!(recover_gain(&net, &tie, M, M, 1e-3).unwrap().is_none());
    }
}

#[test]
fn selectors_are_unique_at_interior_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let eps = 1e-5;
    let mut checked = 0;
    while checked < 20 {
        let n = rng.gen_range(1..=2);
        let net = random_net(&mut rng, n, 1, 2, 3, 3);
        let x = random_point(&mut rng, n, 2.0);
        if tie_margin(&net, &x) <= 1e-3 {
            continue;
        }
        let pattern = net.activation_pattern(&x).unwrap();
        let (base, vars, _) = encode_network_gain(&net, M, M, eps).unwrap();
        for (i, layer) in net.layers.iter().enumerate() {
            for s in 0..layer.neurons {
                let mut enc = base.clone();
                for (j, col) in vars.x.clone().enumerate() {
                    enc.fix(col, x[j]);
                }
                enc.fix(vars.delta[i].start + s * layer.channels + pattern.winners[i][s], 0.0);
                assert!(enc.feasible_point().unwrap().is_none());
            }
        }
        checked += 1;
    }
}

#[test]
fn reference_network_recovery() {
    let net = scalar_exact_network();
    let (mut enc, vars) = encode_network_output(&net, M, 0.0).unwrap();
    enc.check_invariants().unwrap();
    enc.fix(vars.x.start, 0.5);
    let p = enc.feasible_point().unwrap().unwrap();
    // Channel -x wins in neuron 1, channel 0 in neuron 2.
    let d: Vec<f64> = vars.delta[0].clone().map(|j| p[j]).collect();
    assert_eq!(d, vec![1.0, 0.0, 0.0, 1.0]);
    assert!((recover_output(&net, &v1(0.5), M, 0.0).unwrap().unwrap()[0] + 0.5).abs() < 1e-12);
    let g = |x: f64| recover_gain(&net, &v1(x), M, M, 1e-5).unwrap().unwrap()[(0, 0)];
    assert!((g(0.5) + 1.0).abs() < 1e-12);
    assert!(g(2.0).abs() < 1e-12);
}

#[test]
fn single_channel_neurons_collapse_to_equalities() {
    let layer = MaxoutLayer::new(DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 0.25]), DVector::from_vec(vec![0.1, -0.3]), 1).unwrap();
    let net = MaxoutNetwork::new(vec![layer], DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::zeros(1)).unwrap();
    let x = DVector::from_vec(vec![0.7, -1.1]);
    let (mut enc, vars, gain) = encode_network_gain(&net, M, M, 1e-3).unwrap();
    for (j, col) in vars.x.clone().enumerate() {
        enc.fix(col, x[j]);
    }
    let p = enc.feasible_point().unwrap().unwrap();
    assert!(vars.delta[0].clone().all(|j| p[j] == 1.0));
    assert!((gain[0][0].eval(&p) - 1.5).abs() < 1e-12 && (gain[0][1].eval(&p) + 1.75).abs() < 1e-12);
}

#[test]
fn law_encoding_matches_region_lookup() {
    let law = explicit_mpc(&condense(&scalar_unstable()).unwrap()).unwrap();
    let (u, k) = recover_law(&law, &v1(0.5)).unwrap().unwrap();
    assert!((u[0] + 0.5).abs() < 1e-9 && (k[(0, 0)] + 1.0).abs() < 1e-9);

    let law = explicit_mpc(&condense(&double_integrator().unwrap()).unwrap()).unwrap();
    let (enc, xs, vars) = encode_pwa_law(&law, &law.domain).unwrap();
    enc.check_invariants().unwrap();
    let gain = law_gain_expr(&law, &vars);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for x in law.domain.sample_uniform(&mut rng, 1000).unwrap() {
        let mut fixed = enc.clone();
        for (j, col) in xs.clone().enumerate() {
            fixed.fix(col, x[j]);
        }
        let p = fixed.feasible_point().unwrap().expect("covered");
        let u = DVector::from_fn(vars.u.len(), |k, _| p[vars.u.start + k]);
        let k = DMatrix::from_fn(1, 2, |a, b| gain[a][b].eval(&p));
        assert!((u - law.eval(&x).unwrap()).amax() <= 1e-7);
        // On shared facets either neighbour's gain is valid.
        let ok = law
            .regions
            .iter()
            .any(|r| r.poly.contains(&x, 1e-7).unwrap() && (&r.gain - &k).amax() <= 1e-7);
        assert!(ok);
    }
}

#[test]
fn single_region_law_is_forced() {
    let poly = Polytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
    let region = PwaRegion::new(poly.clone(), DMatrix::from_row_slice(1, 2, &[2.0, -1.0]), DVector::from_element(1, 0.5)).unwrap();
    let law = PwaFunction::new(poly, vec![region]).unwrap();
    let x = DVector::from_vec(vec![0.3, 0.9]);
    let (u, k) = recover_law(&law, &x).unwrap().unwrap();
    assert!((u[0] - (0.6 - 0.9 + 0.5)).abs() < 1e-12);
    assert_eq!(k, DMatrix::from_row_slice(1, 2, &[2.0, -1.0]));
}

/// Affine law and affine network over a box: both certified quantities are
/// plain norms of constant vectors and matrices.
#[test]
fn norms_of_constant_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let s = CertifySettings::default();
    for _ in 0..10 {
        let (n, m) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let domain = Polytope::from_box(&vec![-1.0; n], &vec![1.0; n]).unwrap();
        let k1 = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-2.0..2.0));
        let k2 = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-2.0..2.0));
        let c = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        let law = PwaFunction::new(domain.clone(), vec![PwaRegion::new(domain.clone(), k1.clone(), c.clone()).unwrap()]).unwrap();
        // Single-channel network computing K2 x.
        let layer = MaxoutLayer::new(DMatrix::identity(n, n), DVector::zeros(n), 1).unwrap();
        let net = MaxoutNetwork::new(vec![layer], k2.clone(), DVector::zeros(m)).unwrap();
        let diff = &k1 - &k2;
        for alpha in [Alpha::One, Alpha::Inf] {
            let lip = lipschitz(&law, &net, &domain, alpha, &s).unwrap();
            let want = match alpha {
                Alpha::Inf => (0..m).map(|i| diff.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max),
                Alpha::One => (0..n).map(|j| diff.column(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max),
            };
            assert!((lip.value - want).abs() <= 1e-9, "{alpha}: {} vs {want}", lip.value);
            // Error (K1 - K2) x + c over the box: a vertex enumeration oracle.
            let err = max_error(&law, &net, &domain, alpha, &s).unwrap();
            let mut best = 0.0f64;
            for mask in 0..(1usize << n) {
                let x = DVector::from_fn(n, |j, _| if mask >> j & 1 == 1 { 1.0 } else { -1.0 });
                let e = &diff * x + &c;
                best = best.max(match alpha {
                    Alpha::Inf => e.amax(),
                    Alpha::One => e.iter().map(|v| v.abs()).sum(),
                });
            }
            assert!((err.value - best).abs() <= 1e-9, "{alpha}: {} vs {best}", err.value);
        }
    }
}

fn check_certificates(law: &PwaFunction, net: &MaxoutNetwork, s: &CertifySettings) {
    let domain = &law.domain;
    let eps = maxcert::certify::default_epsilon(law.state_dim());
    let grid = domain_grid(domain, 500);
    for alpha in [Alpha::Inf, Alpha::One] {
        let err = max_error(law, net, domain, alpha, s).unwrap();
        let grid_max = grid
            .iter()
            .map(|x| alpha.vector_norm(&(law.eval(x).unwrap() - net.eval(x).unwrap())))
            .fold(0.0, f64::max);
        assert!(err.value >= grid_max - 1e-6, "{} < {grid_max}", err.value);
        check_witness(&err, law, net, domain);

        let lip = lipschitz(law, net, domain, alpha, s).unwrap();
        let grid_max = grid
            .iter()
            .filter(|x| tie_margin(net, x) > 2.0 * eps)
            .filter_map(|x| {
                // Interior of a law region only.
                let inside: Vec<&PwaRegion> = law.regions.iter().filter(|r| r.poly.contains(x, 1e-9).unwrap()).collect();
                (inside.len() == 1).then(|| alpha.matrix_norm(&(&inside[0].gain - net.local_gain(x).unwrap())))
            })
            .fold(0.0, f64::max);
        assert!(lip.value >= grid_max - 1e-6, "{} < {grid_max}", lip.value);
        check_witness(&lip, law, net, domain);
    }
}

fn check_witness(cert: &Certificate, law: &PwaFunction, net: &MaxoutNetwork, domain: &Polytope) {
    let x = cert.witness();
    assert!(domain.contains(&x, 1e-6).unwrap());
    assert!(law.regions[cert.region].poly.contains(&x, 1e-6).unwrap());
    let replay = cert.replay(law, net).unwrap();
    assert!((replay - cert.value).abs() <= cert.gap + 1e-6, "{replay} vs {}", cert.value);
    let json = serde_json::to_string(cert).unwrap();
    let back: Certificate = serde_json::from_str(&json).unwrap();
    assert_eq!(&back, cert);
}

#[test]
fn milp_values_dominate_grids_and_replay() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let s = CertifySettings::default();
    for k in 0..20 {
        let (law, net) = if k % 2 == 0 {
            (random_pwa_1d(&mut rng, 5), random_net(&mut rng, 1, 1, 2, 3, 3))
        } else {
            (random_convex_pwa(&mut rng, 2, 4), random_net(&mut rng, 2, 1, 2, 3, 3))
        };
        check_certificates(&law, &net, &s);
    }
}

#[test]
fn reference_networks_are_certified_exact() {
    let spec = scalar_unstable();
    let law = explicit_mpc(&condense(&spec).unwrap()).unwrap();
    let s = CertifySettings::default();
    for net in [scalar_exact_network(), synthesize_type1(&law).unwrap()] {
        let err = max_error(&law, &net, &law.domain, Alpha::Inf, &s).unwrap();
        assert!(err.value + err.gap <= 1e-9);
        let lip = lipschitz(&law, &net, &spec.terminal_set, Alpha::Inf, &s).unwrap();
        assert!(lip.value + lip.gap <= 1e-9);
    }

    let spec = double_integrator().unwrap();
    let law = explicit_mpc(&condense(&spec).unwrap()).unwrap();
    let (net, cert) = build_exact_type1(&law, &s).unwrap();
    assert!(cert.value + cert.gap <= 1e-6);
    let lip = lipschitz(&law, &net, &spec.terminal_set, Alpha::Inf, &s).unwrap();
    assert!(lip.value + lip.gap <= 1e-3);
}

#[test]
fn perturbed_network_fails_exactness() {
    let law = explicit_mpc(&condense(&scalar_unstable()).unwrap()).unwrap();
    let mut net = scalar_exact_network();
    net.out_bias[0] += 1e-3;
    let res = certify_exact(&law, &net, &CertifySettings::default());
    assert!(matches!(res, Err(Error::CertificationFailure { .. })));
}

#[test]
fn undersized_big_m_is_rejected_and_auto_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let law = random_pwa_1d(&mut rng, 4);
    let mut net = random_net(&mut rng, 1, 1, 1, 2, 3);
    net.layers[0].weights *= 1e5;
    let s = CertifySettings::default();
    assert!(matches!(
        max_error(&law, &net, &law.domain, Alpha::Inf, &s),
        Err(Error::InvalidBigM { .. })
    ));
    let auto = CertifySettings {
        big_m: Bound::Auto,
        w_bound: Bound::Auto,
        ..CertifySettings::default()
    };
    let wide = CertifySettings {
        big_m: Bound::Fixed(1e7),
        ..CertifySettings::default()
    };
    let a = max_error(&law, &net, &law.domain, Alpha::Inf, &auto).unwrap();
    let b = max_error(&law, &net, &law.domain, Alpha::Inf, &wide).unwrap();
    assert!((a.value - b.value).abs() <= 1e-6 * (1.0 + b.value));
}

#[test]
fn uncovered_domain_is_reported() {
    let mut law = explicit_mpc(&condense(&scalar_unstable()).unwrap()).unwrap();
    law.regions.pop();
    let res = max_error(&law, &scalar_exact_network(), &law.domain.clone(), Alpha::Inf, &CertifySettings::default());
    assert!(matches!(res, Err(Error::CoverageGap(_))));
}

#[test]
fn everywhere_tied_network_has_no_lipschitz_point() {
    let law = explicit_mpc(&condense(&scalar_unstable()).unwrap()).unwrap();
    // Two channels that never differ by more than 1e-7.
    let layer = MaxoutLayer::new(DMatrix::from_column_slice(2, 1, &[1.0, 1.0]), DVector::from_vec(vec![0.0, 1e-7]), 2).unwrap();
    let net = MaxoutNetwork::new(vec![layer], DMatrix::from_element(1, 1, 1.0), DVector::zeros(1)).unwrap();
    let res = lipschitz(&law, &net, &law.domain, Alpha::Inf, &CertifySettings::default());
    assert!(matches!(res, Err(Error::AllBoundary)), "{res:?}");
    let zero = CertifySettings {
        epsilon: Some(0.0),
        ..CertifySettings::default()
    };
    assert!(lipschitz(&law, &scalar_exact_network(), &law.domain, Alpha::Inf, &zero).is_err());
}
