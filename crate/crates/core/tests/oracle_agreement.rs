use std::sync::Arc;

use fracshape_core::operator::{AnisoParams, DiagonalRule, IsoParams, Operator};
use fracshape_core::oracle::{assemble_dense_p2, dense_eigen_p2, dense_solve_p2, directional_energy_lines};
use fracshape_core::solve::{solve_torsion, SolverOpts};
use fracshape_core::spectral::{first_eigenpair, rayleigh_quotient, EigenOpts};
use fracshape_core::{Field, Grid, GridSpec, Mask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(g: &Arc<Grid>, rng: &mut ChaCha8Rng) -> Field {
    let v: Vec<f64> = (0..g.interior_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Field::from_interior(g, &v).unwrap()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[test]
fn apply_matches_dense_matrix_in_1d_and_2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grids = [
        Grid::new(GridSpec::unit(1, 16, 2)).unwrap(),
        Grid::new(GridSpec::unit(1, 64, 2)).unwrap(),
        Grid::new(GridSpec::unit(2, 6, 2)).unwrap(),
        Grid::new(GridSpec::unit(2, 5, 0)).unwrap(),
    ];
    for g in &grids {
        for s in [0.3, 0.5, 0.8, 1.0] {
            for rule in [DiagonalRule::CellAverage, DiagonalRule::Excluded] {
                let params = IsoParams::new(s, 2.0).unwrap().with_diagonal(rule);
                let l = assemble_dense_p2(g, &params).unwrap();
                let op = Operator::new(g, params).unwrap();
                let u = random_field(g, &mut rng);
                let main = op.apply(&u).unwrap().interior_values();
                let dense = l.mul(&u.interior_values());
                let e = rel_err(&main, &dense);
                assert!(e <= 1e-12, "dim {} s {s} {rule:?}: {e:e}", g.dim());
            }
        }
    }
}

#[test]
fn torsion_and_eigen_match_dense() {
    let g = Grid::new(GridSpec::unit(1, 32, 2)).unwrap();
    let m = Mask::full(&g);
    for s in [0.3, 0.5, 0.8] {
        let params = IsoParams::new(s, 2.0).unwrap();
        let l = assemble_dense_p2(&g, &params).unwrap();
        let ud = dense_solve_p2(&l, &m, &Field::from_fn(&g, |_| 1.0)).unwrap();
        let rep = solve_torsion(&m, params.clone(), &SolverOpts::for_exponent(2.0)).unwrap();
        assert!(rep.field.max_abs_diff(&ud) <= 1e-8, "{}", rep.field.max_abs_diff(&ud));
        let (lam, v) = dense_eigen_p2(&l, &m).unwrap();
        let res = first_eigenpair(&m, params.clone(), &EigenOpts::for_exponent(2.0)).unwrap();
        assert!((res.lambda - lam).abs() <= 1e-8 * lam, "{} vs {}", res.lambda, lam);
        let rq = rayleigh_quotient(&v, params).unwrap();
        assert!((rq - lam).abs() <= 1e-10 * lam);
    }
}

#[test]
fn aniso_energy_matches_line_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = Grid::new(GridSpec::unit(2, 7, 2)).unwrap();
    let u = random_field(&g, &mut rng);
    for (s, p) in [(0.5, 2.0), (0.3, 3.0), (0.7, 1.5), (1.0, 2.0)] {
        for rule in [DiagonalRule::CellAverage, DiagonalRule::Excluded] {
            let a = AnisoParams::new(vec![s, s], vec![p, p]).unwrap().with_diagonal(rule);
            let e = Operator::new(&g, a.clone()).unwrap().energy(&u).unwrap();
            let o = directional_energy_lines(&u, &a);
            assert!((e - o).abs() <= 1e-12 * o, "{s} {p} {rule:?}: {e} {o}");
        }
    }
}
