//! Reverse-mode gradients on a tiny graph, checked against central
//! differences.
//!
//!     cargo run --example autodiff_basics

use audetect::numeric::{finite_difference_check, Graph, ParamSet, Selection, Tensor};

fn main() -> audetect::Result<()> {
    let mut params = ParamSet::<f64>::new();
    let w = params.add("w", Tensor::from_f64(&[2, 3], &[0.5, -1.0, 0.25, 2.0, 0.1, -0.3])?)?;
    let b = params.add("b", Tensor::vector(vec![0.1, -0.2]))?;
    let x = Tensor::vector(vec![1.0, 2.0, -1.5]);

    // f = sum(tanh(W x + b))
    let forward = |p: &ParamSet<f64>| -> audetect::Result<(Graph<f64>, audetect::numeric::Var)> {
        let mut g = Graph::new();
        let (wv, bv) = (g.param(p, w), g.param(p, b));
        let xv = g.constant(x.clone());
        let y = g.linear(wv, bv, xv)?;
        let y = g.tanh(y);
        let f = g.sum(y);
        Ok((g, f))
    };

    let (g, f) = forward(&params)?;
    println!("f = {:.6}", g.value(f).data()[0]);
    g.backward(f, &mut params)?;
    for p in params.iter() {
        println!("d f / d {} = {:?}", p.name, p.gradient.data());
    }

    let report = finite_difference_check(&mut params, 1e-4, &Selection::All, |p| {
        let (g, f) = forward(p)?;
        Ok(g.value(f).data()[0])
    })?;
    println!(
        "finite differences agree to {:.2e} (relative) over {} components",
        report.max_relative_error, report.checked
    );
    Ok(())
}
