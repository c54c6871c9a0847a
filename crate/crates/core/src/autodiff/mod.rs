//! Minimal reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] records values and the op that produced each; [`Graph::backward`]
//! walks the record in reverse and accumulates gradients into every leaf.
//! Besides the usual elementwise and matmul ops there are three fused ops
//! for the contrastive objectives: batched cosine scores, batched ridge
//! projection scores (differentiated through the k x k solve by adjoint
//! solves with the same factor), and batch-mean InfoNCE.

mod adam;
mod gradcheck;
mod graph;
pub mod kernels;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, GradCheck, GradCheckReport, Stencil};
pub use graph::{Gradients, Graph, Var};
pub use mlp::{forward_mlp, Activation, BoundMlp, Layer, MlpParams, LEAKY_SLOPE};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::Error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_gives_ones() {
        let mut g = Graph::new();
        let x = g.leaf(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().as_slice(), &[1.0; 4]);
    }

    #[test]
    fn squared_norm_gives_two_x() {
        let xv = Matrix::from_rows(&[vec![1.5, -2.0, 0.25]]).unwrap();
        let mut g = Graph::new();
        let x = g.leaf(xv.clone());
        let sq = g.square(x);
        let s = g.sum(sq);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap(), &xv.scaled(2.0));
    }

    #[test]
    fn shared_subexpressions_accumulate() {
        let xv = Matrix::from_rows(&[vec![0.7, -1.1]]).unwrap();
        let mut g = Graph::new();
        let x = g.leaf(xv.clone());
        let xx = g.mul(x, x).unwrap();
        let a = g.sum(xx);
        let ga = g.backward(a).unwrap().get(x).unwrap().clone();

        let mut g2 = Graph::new();
        let x2 = g2.leaf(xv);
        let sq = g2.square(x2);
        let b = g2.sum(sq);
        let gb = g2.backward(b).unwrap().get(x2).unwrap().clone();
        assert_eq!(g.scalar(a), g2.scalar(b));
        assert_eq!(ga, gb);
    }

    #[test]
    fn non_scalar_root_is_an_error() {
        let mut g = Graph::new();
        let x = g.leaf(Matrix::zeros(2, 2));
        assert!(matches!(g.backward(x), Err(Error::NonScalarRoot { rows: 2, cols: 2 })));
    }

    #[test]
    fn unused_leaf_has_no_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Matrix::scalar(1.0));
        let y = g.leaf(Matrix::scalar(2.0));
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(y).is_none());
        assert_eq!(grads.get_or_zeros(y, &Matrix::scalar(0.0)), Matrix::scalar(0.0));
    }

    #[test]
    fn backward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Matrix::new(5, 4, (0..20).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let b = Matrix::new(5, 4, (0..20).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let run = || {
            let mut g = Graph::new();
            let (x, y) = (g.leaf(a.clone()), g.leaf(b.clone()));
            let s = g.projection_scores(x, &[y], 1e-8).unwrap();
            let l = g.infonce(s, 0.1, false).unwrap();
            let grads = g.backward(l).unwrap();
            (grads.get(x).unwrap().clone(), grads.get(y).unwrap().clone())
        };
        assert_eq!(run(), run());
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::new(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn fused_ops_pass_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for k in 1..=3 {
            let params: Vec<Matrix> = (0..=k).map(|_| random(&mut rng, 4, 5)).collect();
            let report = finite_diff_check(&params, 1e-5, 1e-4, |g, p| {
                let s = g.projection_scores(p[0], &p[1..], 1e-8)?;
                g.infonce(s, 0.5, false)
            })
            .unwrap();
            assert!(report.pass, "projection k={k}: {report:?}");
        }
        let params = vec![random(&mut rng, 4, 3), random(&mut rng, 4, 3)];
        for include_positive in [false, true] {
            let report = finite_diff_check(&params, 1e-5, 1e-4, |g, p| {
                let s = g.cosine_scores(p[0], p[1])?;
                g.infonce(s, 0.3, include_positive)
            })
            .unwrap();
            assert!(report.pass, "cosine: {report:?}");
        }
        let params = vec![random(&mut rng, 3, 2), random(&mut rng, 2, 4), random(&mut rng, 1, 4)];
        let report = finite_diff_check(&params, 1e-5, 1e-4, |g, p| {
            let h = g.matmul(p[0], p[1])?;
            let h = g.add_row(h, p[2])?;
            let h = g.leaky_relu(h, 0.01);
            let c = g.concat_cols(&[h, p[0]])?;
            let sq = g.square(c);
            Ok(g.mean(sq))
        })
        .unwrap();
        assert!(report.pass, "mlp ops: {report:?}");
    }

    #[test]
    fn injected_fault_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = vec![random(&mut rng, 4, 5), random(&mut rng, 4, 5), random(&mut rng, 4, 5)];
        let check = GradCheck {
            inject_fault: true,
            ..GradCheck::new(1e-5, 1e-4)
        };
        let report = check
            .run(&params, |g, p| {
                let s = g.projection_scores(p[0], &p[1..], 1e-8)?;
                g.infonce(s, 0.5, false)
            })
            .unwrap();
        assert!(!report.pass);
    }
}
