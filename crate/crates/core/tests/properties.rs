use std::collections::HashSet;
use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::hermite::GaussHermite;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sgfem::adapt::{doerfler_mark_det, doerfler_mark_sto, run, AdaptConfig, Branch, Problem, QuasiErrorLedger, MARK_SLACK};
use sgfem::chaos::{
    index_set_boundary, lookahead_slab, triple_product_1d, ModeScaling, MultiIndexSet, TripleProductTable,
};
use sgfem::estimator::{lipschitz_diagnostic, Estimator};
use sgfem::fem::{prolongation, stiffness, FeSpace};
use sgfem::field::{exp_chaos_coefficient, expand_lognormal, positivity_audit, truncation_residual, AffineField};
use sgfem::galerkin::{energy_product, CoeffTensor, GalerkinOperator};
use sgfem::mesh::initial_lshape;
use sgfem::sparse::dot;
use sgfem::validate::mc_errors;

fn probabilists_hermite(n: usize, t: f64) -> Vec<f64> {
    let mut he = vec![1.0, t];
    for k in 1..n {
        he.push(t * he[k] - k as f64 * he[k - 1]);
    }
    he.truncate(n + 1);
    he
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn min_subset(v: &[f64], value: impl Fn(f64) -> f64, need: f64) -> usize {
    let n = v.len();
    (0u32..1 << n)
        .filter_map(|mask| {
            let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| value(v[i])).sum();
            (s >= need * (1.0 - MARK_SLACK)).then_some(mask.count_ones() as usize)
        })
        .min()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn boundary_partitions_the_full_set(
        dims in prop::collection::vec(1usize..=4, 1..=4),
        extra in prop::collection::vec(1usize..=4, 4),
    ) {
        let dhat: Vec<usize> = extra[..dims.len()].to_vec();
        let lambda = MultiIndexSet::new(dims.clone());
        let boundary = index_set_boundary(&lambda, &dhat);
        let full = MultiIndexSet::new(dims.iter().zip(&dhat).map(|(d, h)| d + h - 1).collect());
        let bset: HashSet<Vec<usize>> = boundary.iter().cloned().collect();
        prop_assert_eq!(bset.len(), boundary.len());
        for mu in &boundary {
            prop_assert!(!lambda.contains(mu));
            prop_assert!(full.contains(mu));
        }
        prop_assert_eq!(boundary.len() + lambda.len(), full.len());
    }

    #[test]
    fn slab_lies_in_boundary(
        dims in prop::collection::vec(1usize..=4, 1..=3),
        extra in prop::collection::vec(2usize..=4, 3),
        mode_pick in 0usize..3,
        q_pick in 0usize..3,
    ) {
        let dhat: Vec<usize> = extra[..dims.len()].to_vec();
        let mode = mode_pick % dims.len();
        let q = 1 + q_pick % (dhat[mode] - 1);
        let lambda = MultiIndexSet::new(dims);
        let boundary: HashSet<Vec<usize>> = index_set_boundary(&lambda, &dhat).into_iter().collect();
        let slab = lookahead_slab(&lambda, mode, q, dhat[mode]).unwrap();
        prop_assert!(!slab.is_empty());
        for mu in slab {
            prop_assert!(boundary.contains(&mu));
        }
    }

    #[test]
    fn triple_products_vanish_off_support(i in 0usize..=20, j in 0usize..=20, k in 0usize..=20) {
        let s = i + j + k;
        let v = triple_product_1d(1.0, i, j, k);
        if s % 2 == 1 || 2 * i.max(j).max(k) > s {
            prop_assert_eq!(v, 0.0);
            prop_assert_eq!(TripleProductTable::new(21).get(i, j, k), 0.0);
        } else {
            prop_assert!(v > 0.0);
        }
    }

    #[test]
    fn zeta_moments_match_quadrature(sigma in 1.0f64..1.3, alpha_pick in 0usize..4) {
        let alpha = [0.5, 2.0, 3.0, 4.0][alpha_pick];
        let scaling = ModeScaling::new(vec![2.0 * sigma.ln()], 1.0, 0.5);
        // zeta^alpha pi_0 is proportional to a centered Gaussian density
        let inv_var = alpha / (sigma * sigma) + 1.0 - alpha;
        if inv_var <= 0.0 {
            let divergent = matches!(scaling.zeta_moment(alpha), Err(sgfem::Error::DivergentMoment { .. }));
            prop_assert!(divergent);
        } else {
            let want = sigma.powf(-alpha) / inv_var.sqrt();
            let got = scaling.zeta_moment(alpha).unwrap();
            prop_assert!((got - want).abs() <= 1e-10 * want);
        }
    }

    #[test]
    fn chaos_coefficients_match_projection(b in -1.0f64..1.0, s in 0.5f64..1.5, k in 0usize..8) {
        let rule = GaussHermite::new(NonZeroUsize::new(60).unwrap());
        let q: f64 = rule
            .iter()
            .map(|(x, w)| {
                let y = 2f64.sqrt() * s * x;
                w * (b * y).exp() * probabilists_hermite(k, y / s)[k] / factorial(k).sqrt()
            })
            .sum::<f64>()
            / std::f64::consts::PI.sqrt();
        prop_assert!((exp_chaos_coefficient(b, s, k) - q).abs() <= 1e-10 * (1.0 + q.abs()));
    }

    #[test]
    fn markers_are_minimal(
        v in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], 1..=10),
        theta_pick in 0usize..4,
    ) {
        let theta = [0.1, 0.3, 0.5, 1.0][theta_pick];
        let sq: f64 = v.iter().map(|x| x * x).sum();
        let det = doerfler_mark_det(&v, theta).unwrap();
        prop_assert_eq!(det.len(), min_subset(&v, |x| x * x, theta * theta * sq));
        let sum: f64 = v.iter().sum();
        let sto = doerfler_mark_sto(&v, theta, sum).unwrap();
        prop_assert_eq!(sto.len(), min_subset(&v, |x| x, theta * sum));
        let unique: HashSet<usize> = det.iter().copied().collect();
        prop_assert_eq!(unique.len(), det.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bisection_is_conforming_nested_and_shape_regular(seed in any::<u64>(), frac in 0.05f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mesh = initial_lshape(0.25);
        let floor = 0.4 * mesh.min_angle();
        let mut angles = HashSet::new();
        for _ in 0..8 {
            let marked: Vec<usize> = (0..mesh.n_triangles()).filter(|_| rng.random_bool(frac)).collect();
            let (fine, map) = mesh.bisect(&marked);
            prop_assert_eq!(fine.hanging_nodes(), 0);
            let perimeter: f64 =
                (0..fine.edges().len()).filter(|&e| fine.edges()[e].is_boundary()).map(|e| fine.edge_length(e)).sum();
            prop_assert!((perimeter - 4.0).abs() < 1e-12);
            for (t, kids) in map.children.iter().enumerate() {
                let sum: f64 = kids.iter().map(|&c| fine.area(c)).sum();
                prop_assert!((sum - mesh.area(t)).abs() <= 1e-14 * mesh.area(t));
            }
            for &t in &marked {
                prop_assert!(map.children[t].len() >= 2);
            }
            for (v, p) in mesh.vertices.iter().enumerate() {
                prop_assert_eq!(fine.vertices[v], *p);
            }
            for t in 0..fine.n_triangles() {
                angles.insert((fine.angles(t).iter().cloned().fold(f64::INFINITY, f64::min) * 1e9).round() as i64);
            }
            prop_assert!(fine.min_angle() >= floor);
            mesh = fine;
        }
        prop_assert!(angles.len() <= 8);
    }

    #[test]
    fn prolongation_reproduces_coarse_functions(seed in any::<u64>(), order in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coarse = initial_lshape(0.25);
        let marked: Vec<usize> = (0..coarse.n_triangles()).filter(|_| rng.random_bool(0.4)).collect();
        let (fine, map) = coarse.bisect(&marked);
        let (cs, fs) = (FeSpace::new(&coarse, order).unwrap(), FeSpace::new(&fine, order).unwrap());
        let u: Vec<f64> = (0..cs.n_dofs).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = prolongation(&cs, &fs, &map.parent);
        let v = p.matvec(&u);
        for (t, &parent) in map.parent.iter().enumerate() {
            let g = &fs.geoms[t];
            for xi in [[0.2, 0.3], [0.6, 0.1], [1.0 / 3.0, 1.0 / 3.0]] {
                let x = g.to_physical(xi);
                let a = fs.eval(&v, t, xi);
                let b = cs.eval(&u, parent, cs.geoms[parent].to_reference(x));
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
        let cv: HashSet<usize> = (0..coarse.n_vertices()).collect();
        for d in cv {
            prop_assert!((v[d] - u[d]).abs() < 1e-13);
        }
    }
}

#[test]
fn mean_field_is_product_of_exponentials() {
    let field = AffineField::benchmark(4, 2.0);
    let scaling = field.scaling(1.0, 0.3);
    let mesh = initial_lshape(0.25);
    let coef = expand_lognormal(&field, &scaling, &[5, 4, 4, 3], &mesh, 2).unwrap();
    for (node, &x) in coef.space.dof_coords.iter().enumerate() {
        let want: f64 = (0..4)
            .map(|m| {
                let bs = field.mode(m, x) * scaling.weight_sigma(m);
                (0.5 * bs * bs).exp()
            })
            .product();
        assert!((coef.mean(node) - want).abs() <= 1e-10 * want);
    }
    let res = truncation_residual(&field, &coef, 100, 3);
    assert!(res < 0.05, "truncation residual {res}");
    assert_eq!(positivity_audit(&field, &coef, 100, 3), 0);
}

struct Small {
    fine: sgfem::mesh::Mesh2D,
    anc: Vec<usize>,
    space: FeSpace,
    coef: sgfem::field::DiscreteCoefficient,
    table: TripleProductTable,
}

fn small(theta: f64) -> Small {
    let coarse = initial_lshape(0.25);
    let (fine, anc) = coarse.uniform_refine_with_parents(1);
    let field = AffineField::benchmark(2, 2.0);
    let coef = expand_lognormal(&field, &field.scaling(1.0, theta), &[3, 3], &coarse, 1).unwrap();
    let space = FeSpace::new(&fine, 1).unwrap();
    Small { fine, anc, space, coef, table: TripleProductTable::new(8) }
}

fn random_tensor(space: &FeSpace, set: &MultiIndexSet, rng: &mut ChaCha8Rng) -> CoeffTensor {
    let mut w = CoeffTensor::zeros(space.n_dofs, set.clone());
    let l = set.len();
    for &d in &space.free_dofs {
        for k in 0..l {
            w.data[d * l + k] = rng.random_range(-1.0..1.0);
        }
    }
    w
}

#[test]
fn stochastic_estimator_is_lipschitz() {
    let s = small(0.2);
    let set = MultiIndexSet::new(vec![2, 2]);
    let est = Estimator::new(&s.fine, &s.space, &s.coef, &s.anc, &set, &s.table).unwrap();
    let c = lipschitz_diagnostic(&set, &s.coef, &s.table, 1000).unwrap().sto.unwrap();
    let unit = stiffness(&s.space, &vec![1.0; s.space.n_dofs]);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let v = random_tensor(&s.space, &set, &mut rng);
        let w = random_tensor(&s.space, &set, &mut rng);
        let grad_sq: f64 = set
            .iter()
            .map(|mu| {
                let e: Vec<f64> = v.column(&mu).iter().zip(w.column(&mu)).map(|(a, b)| a - b).collect();
                dot(&unit.matvec(&e), &e)
            })
            .sum();
        let lhs = (est.eta_sto(&v) - est.eta_sto(&w)).abs();
        assert!(lhs <= c * grad_sq.sqrt() * (1.0 + 1e-12), "{lhs} > {c} * {}", grad_sq.sqrt());
    }
}

#[test]
fn unweighted_stochastic_estimator_is_additive_and_det_ratio_is_finite() {
    let s = small(0.0);
    let set = MultiIndexSet::new(vec![2, 1]);
    let est = Estimator::new(&s.fine, &s.space, &s.coef, &s.anc, &set, &s.table).unwrap();
    let boundary = index_set_boundary(&set, &s.coef.dhat);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ratios = Vec::new();
    for _ in 0..20 {
        let w = random_tensor(&s.space, &set, &mut rng);
        let modes = est.residual_modes(&w);
        let (d2, rest): (Vec<Vec<usize>>, Vec<Vec<usize>>) = boundary.iter().cloned().partition(|_| rng.random_bool(0.7));
        let (d1, d21): (Vec<Vec<usize>>, Vec<Vec<usize>>) = d2.iter().cloned().partition(|_| rng.random_bool(0.5));
        let a = est.eta_sto_subset(&modes, &d1).unwrap().powi(2);
        let b = est.eta_sto_subset(&modes, &d21).unwrap().powi(2);
        let total = est.eta_sto_subset(&modes, &d2).unwrap().powi(2);
        assert!((a + b - total).abs() <= 1e-12 * total.max(1.0));
        let _ = rest;
        if d2.is_empty() {
            continue;
        }
        let det: f64 = est
            .eta_det_subset(&modes, &|_| 0.0, &d2)
            .unwrap()
            .iter()
            .map(|(v, j)| v * v + j * j)
            .sum::<f64>()
            .sqrt();
        let sto = total.sqrt();
        if sto > 0.0 {
            ratios.push(det / sto);
        }
    }
    assert!(!ratios.is_empty());
    assert!(ratios.iter().all(|r| r.is_finite() && *r > 0.0));
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), r| (l.min(*r), h.max(*r)));
    assert!(hi / lo < 100.0, "det/sto ratio spread {lo}..{hi}");
}

#[test]
fn adaptive_run_invariants() {
    let problem = Problem::new(
        initial_lshape(0.25),
        AffineField::benchmark(3, 2.0),
        1.0,
        0.1,
        1,
        1e-8,
        Arc::new(|_| 1.0),
    )
    .unwrap();
    let cfg = AdaptConfig { max_iter: 8, c_eq: 20.0, ..Default::default() };
    let run = run(&problem, &cfg, |_| {}).unwrap();
    let mut energies = Vec::new();
    for it in &run.iterates {
        let space = FeSpace::new(&it.mesh, 1).unwrap();
        let table = TripleProductTable::new(sgfem::adapt::table_size(&it.set, &problem.coef.dhat));
        let op = GalerkinOperator::new(&space, &problem.coef, &it.ancestor, &it.set, &table).unwrap();
        energies.push(energy_product(&op, &space, &it.u, &it.u));
    }
    let mut saw = [false, false];
    for (k, w) in run.iterates.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        let mesh_changed = b.mesh.n_triangles() != a.mesh.n_triangles();
        let modes = a.set.modes().max(b.set.modes());
        let (da, db) = (a.set.padded(modes), b.set.padded(modes));
        let set_changed = da.dims() != db.dims();
        assert!(mesh_changed != set_changed, "iteration {k} refined both or neither");
        assert!(da.dims().iter().zip(db.dims()).all(|(x, y)| y >= x));
        match a.branch.unwrap() {
            Branch::Deterministic => {
                saw[0] = true;
                assert!(mesh_changed);
                for (v, p) in a.mesh.vertices.iter().enumerate() {
                    assert_eq!(b.mesh.vertices[v], *p);
                }
            }
            Branch::Stochastic => {
                saw[1] = true;
                assert!(set_changed);
            }
        }
        assert!(energies[k + 1] >= energies[k] * (1.0 - 1e-10));
    }
    assert!(saw[0] && saw[1], "run should exercise both branches: {saw:?}");

    let mc = mc_errors(&run, &problem, &sgfem::validate::McConfig { samples: 20, ..Default::default() }).unwrap();
    let ledger = QuasiErrorLedger::new(&run, &mc, 1.0, 4.0);
    for (k, r) in ledger.rows.iter().enumerate() {
        let e = r.mc_error.unwrap();
        let recomputed = e * e + r.eta_det * r.eta_det + 4.0 * r.eta_sto * r.eta_sto;
        assert!((recomputed - r.quasi_err.unwrap()).abs() <= 1e-12 * recomputed);
        if k > 0 {
            let prev = &ledger.rows[k - 1];
            let (e0, e1) = (prev.mc_error.unwrap().powi(2), e * e);
            assert!(e1 <= e0 + 2.0 * (prev.mc_stderr.unwrap() + r.mc_stderr.unwrap()));
        }
    }
}
