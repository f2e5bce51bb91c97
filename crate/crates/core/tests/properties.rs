use std::sync::Arc;

use approx::assert_relative_eq;
use fracshape_core::oracle::enumerate_masks;
use fracshape_core::shapeopt::*;
use fracshape_core::solve::{solve_torsion, SolverOpts};
use fracshape_core::spectral::{first_eigenpair, EigenOpts};
use fracshape_core::*;
use proptest::prelude::*;

fn grid1(n: usize) -> Arc<Grid> {
    Grid::new(GridSpec::unit(1, n, 2)).unwrap()
}

fn mask_from_bits(g: &Arc<Grid>, bits: u32) -> Mask {
    let cells: Vec<bool> = (0..g.interior_count()).map(|c| bits >> c & 1 == 1).collect();
    Mask::from_cells(g, cells).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn volume_is_additive(a in 0u32..1024, b in 0u32..1024) {
        let g = grid1(10);
        let (ma, mb) = (mask_from_bits(&g, a), mask_from_bits(&g, b));
        let union = ma.union(&mb).unwrap().volume();
        let inter = ma.intersection(&mb).unwrap().volume();
        prop_assert!((union + inter - ma.volume() - mb.volume()).abs() < 1e-12);
    }

    #[test]
    fn lp_norm_is_homogeneous(vals in prop::collection::vec(-5.0f64..5.0, 12), t in -4.0f64..4.0, p in 1.1f64..4.0) {
        let g = grid1(12);
        let u = Field::from_interior(&g, &vals).unwrap();
        let lhs = lp_norm(&u.scale(t), p).unwrap();
        let rhs = t.abs() * lp_norm(&u, p).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
    }

    #[test]
    fn lp_norm_matches_reversed_sum(vals in prop::collection::vec(-3.0f64..3.0, 9), p in 1.1f64..4.0) {
        let g = grid1(9);
        let u = Field::from_interior(&g, &vals).unwrap();
        let h = g.cell_volume();
        let rev: f64 = vals.iter().rev().map(|v| v.abs().powf(p)).sum::<f64>() * h;
        prop_assert!((lp_norm(&u, p).unwrap() - rev.powf(1.0 / p)).abs() <= 1e-12 * rev.powf(1.0 / p).max(1e-300));
    }

    #[test]
    fn reflection_is_an_involution(bits in 0u32..4096) {
        let g = grid1(12);
        let m = mask_from_bits(&g, bits);
        prop_assert_eq!(m.reflect().reflect(), m.clone());
        prop_assert_eq!(m.reflect().count(), m.count());
    }
}

#[test]
fn torsion_and_eigenvalue_are_domain_monotone() {
    let g = grid1(12);
    let params = IsoParams::new(0.5, 2.0).unwrap();
    let opts = SolverOpts::for_exponent(2.0);
    let eo = EigenOpts::for_exponent(2.0);
    let chain = [vec![5], vec![4, 5], vec![4, 5, 6], vec![2, 4, 5, 6, 9], vec![0, 1, 2, 4, 5, 6, 9, 11]];
    let masks: Vec<Mask> = chain.iter().map(|c| Mask::from_cell_indices(&g, c).unwrap()).collect();
    for w in masks.windows(2) {
        let ua = solve_torsion(&w[0], params.clone(), &opts).unwrap().field;
        let ub = solve_torsion(&w[1], params.clone(), &opts).unwrap().field;
        assert!(ua.values().iter().zip(ub.values()).all(|(a, b)| *a <= b + 10.0 * opts.tol_grad));
        let la = first_eigenpair(&w[0], params.clone(), &eo).unwrap().lambda;
        let lb = first_eigenpair(&w[1], params.clone(), &eo).unwrap().lambda;
        assert!(lb <= la + 1e-8);
    }
}

#[test]
fn enumeration_restriction_and_reflection() {
    let g = grid1(10);
    for kind in [CostKind::FirstEigenvalue, CostKind::TorsionalCompliance] {
        let f = CostFunctional::new(kind, IsoParams::new(0.5, 2.0).unwrap());
        let r = optimize_enumerate(&g, &f, 0.4).unwrap();
        let u = optimize_enumerate_unrestricted(&g, &f, 0.4).unwrap();
        assert_relative_eq!(r.cost, u.cost, max_relative = 1e-10);
        assert!(r.mask.volume() <= 0.4 + 1e-12);
        for t in &r.ties {
            assert!(r.ties.contains(&t.reflect()), "{:?}", t.cell_indices());
        }
        // no mask of the budget beats the optimum
        let ev = Evaluator::new(&g, &f).unwrap();
        for m in enumerate_masks(&g, 4).unwrap().step_by(7) {
            assert!(ev.cost(&m).unwrap() >= r.cost - 1e-10);
        }
    }
}

#[test]
fn rearrangement_never_beats_enumeration() {
    use rand::{Rng, SeedableRng};
    let g = grid1(10);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for kind in [CostKind::FirstEigenvalue, CostKind::TorsionalCompliance] {
        let f = CostFunctional::new(kind, IsoParams::new(0.5, 3.0).unwrap());
        let opt = optimize_enumerate(&g, &f, 0.4).unwrap();
        for _ in 0..3 {
            let mut cells: Vec<usize> = (0..10).collect();
            for i in 0..4 {
                let j = rng.gen_range(i..10);
                cells.swap(i, j);
            }
            let init = Mask::from_cell_indices(&g, &cells[..4]).unwrap();
            let r = optimize_rearrange(&g, &f, 0.4, &init, &RearrangeOpts::default()).unwrap();
            assert!(r.cost >= opt.cost - 1e-10);
            assert!(r.mask.count() == 4);
        }
    }
}
