//! Build a small computation on the tape, run backward, and compare the
//! gradients against central differences.

use anyhow::Result;
use dre::autodiff::{finite_diff_check, Tape, Tensor, TensorError, Var};

fn main() -> Result<()> {
    let x = Tensor::from_rows(&[vec![0.5, -1.0, 2.0], vec![1.5, 0.25, -0.75]])?;
    let w = Tensor::from_rows(&[vec![0.2, -0.4], vec![0.7, 0.1], vec![-0.3, 0.9]])?;
    let b = Tensor::row_vector(vec![0.05, -0.02]);

    let loss = |tape: &mut Tape, p: &[Var]| -> Result<Var, TensorError> {
        let a = tape.affine(p[0], p[1], p[2])?;
        let h = tape.tanh(a);
        tape.softmax_cross_entropy(h, vec![1, 0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = [&x, &w, &b].iter().map(|t| tape.param((*t).clone())).collect();
    let l = loss(&mut tape, &vars)?;
    tape.backward(l)?;
    println!("loss {:.6}", tape.value(l).item());
    println!("dL/dW {:?}", tape.grad(vars[1]).map(|g| g.data().to_vec()));

    let err = finite_diff_check(loss, &[x, w, b], 1e-6)?;
    println!("max relative gradient error {err:.2e}");
    Ok(())
}
