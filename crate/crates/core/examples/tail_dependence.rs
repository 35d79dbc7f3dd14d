//! Closed-form tail quantities: within-variable λ, the cross-variable stable
//! tail dependence function under exponential and Pareto factors, and the
//! Hüsler–Reiss limit when only the common factor loads.
use corlmc::margins::{FactorLoadings, VariableLoadings};
use corlmc::tails::{
    husler_reiss, lambda_pareto_within, lambda_within_pair, stable_tail_exponential, stable_tail_numeric,
    stable_tail_pareto,
};

fn main() -> corlmc::Result<()> {
    let v = VariableLoadings::new(1.1, 0.9, 0.7, 1.1);
    for rho in [0.0, 0.5, 0.9] {
        let (lo, up) = lambda_within_pair(rho, &v)?;
        println!("within, rho_Z = {rho}: lambda_L = {lo:.4}, lambda_U = {up:.4}");
    }

    let l = FactorLoadings::from_vectors(&[1.0, 0.3, 0.8, 0.2], &[0.0; 4])?;
    let rho = 0.4;
    let exact = stable_tail_exponential(1.0, 1.0, &l, rho)?;
    println!("cross ell(1,1) = {exact:.6}, lambda_U = {:.6}", 2.0 - exact);
    for n in [1e2, 1e4, 1e6] {
        println!("  pre-limit n = {n:e}: {:.6}", stable_tail_numeric(1.0, 1.0, n, &l, rho)?);
    }

    let common = FactorLoadings::from_vectors(&[1.0, 0.0, 0.6, 0.0], &[0.0; 4])?;
    let rho12 = (1.0f64 - 2.0 * rho * 0.6 + 0.36).sqrt() / 0.6;
    println!(
        "common factor only: {:.10} vs Husler-Reiss {:.10}",
        stable_tail_exponential(1.0, 2.0, &common, rho)?,
        husler_reiss(1.0, 2.0, rho12)
    );

    let k = 3.0;
    println!("Pareto k = {k}: within lambda_U = {:.4}", lambda_pareto_within(1.0, 1.0, k)?);
    println!("Pareto k = {k}: cross ell(1,1) = {:.4}", stable_tail_pareto(1.0, 1.0, &l, k)?);
    Ok(())
}
