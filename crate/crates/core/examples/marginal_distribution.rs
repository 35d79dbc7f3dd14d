//! CDF, density and quantiles of W = Z + αᵁ(E₀ᵁ, Eᵁ) − αᴸ(E₀ᴸ, Eᴸ).
use corlmc::margins::{Marginal, VariableLoadings};

fn main() -> corlmc::Result<()> {
    let cases = [
        ("gaussian", VariableLoadings::new(0.0, 0.0, 0.0, 0.0)),
        ("upper skew", VariableLoadings::new(1.1, 0.9, 0.0, 0.0)),
        ("both tails", VariableLoadings::new(1.1, 0.9, 0.7, 1.1)),
        ("equal loadings", VariableLoadings::new(0.8, 0.8, 0.8, 0.8)),
    ];
    for (name, l) in cases {
        let m = Marginal::new(l)?;
        println!("{name}: mean {:.4}, variance {:.4}", l.mean(), l.variance());
        for u in [0.001, 0.05, 0.5, 0.95, 0.999] {
            let z = m.quantile(u)?;
            println!("  u = {u:<5}  z = {z:>9.5}  F(z) = {:.12}  f(z) = {:.6}", m.cdf(z), m.pdf(z));
        }
    }
    Ok(())
}
