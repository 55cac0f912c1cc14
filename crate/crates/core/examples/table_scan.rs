//! Quick look at the optimizer on the five regular-check instances plus the
//! irregular-check example; prints rate, gap and solver diagnostics.

use rateopt_core::desim;
use rateopt_core::ensemble::{ChannelParam, DegreeDistribution, DistributionKind};
use rateopt_core::sdpcore;
use rateopt_core::sosrep;

fn run(rho: &DegreeDistribution, eps: f64, dv_max: u32, label: &str) {
    let epsilon = ChannelParam::new(eps).unwrap();
    let problem = sosrep::build_rate_sdp(rho, epsilon, dv_max).unwrap();
    let t0 = std::time::Instant::now();
    let solution = sdpcore::solve(&problem, &sosrep::design_solve_options()).unwrap();
    let solve_ms = t0.elapsed().as_millis();
    println!(
        "{label}: status {:?} iters {} obj {:.6} pres {:.2e} gap {:.2e} ({} ms)",
        solution.status,
        solution.iterations,
        solution.objective_value,
        solution.primal_residual,
        solution.dual_gap_estimate,
        solve_ms
    );
    match sosrep::extract_design(&problem, &solution, rho, epsilon) {
        Ok((design, cert)) => {
            let verification = desim::verify_design(&design, 100_000).unwrap();
            println!(
                "  lambda {}  rate {:.4} delta {:.4} cert(min_eig {:.2e}, recon {:.2e}, ok {})",
                design.lambda, design.rate, design.delta, cert.min_eigenvalue,
                cert.reconstruction_residual, cert.accepted()
            );
            println!(
                "  verify: margin {:.2e} threshold {:.5} pass {}",
                verification.min_margin, verification.threshold, verification.pass
            );
        }
        Err(e) => println!("  extraction failed: {e}"),
    }
}

fn main() {
    let cases = [(3u32, 0.69), (4, 0.56), (5, 0.49), (6, 0.38), (7, 0.33)];
    for (n, eps) in cases {
        let rho = DegreeDistribution::regular(DistributionKind::Check, n + 1).unwrap();
        run(&rho, eps, 7, &format!("rho=x^{n} eps={eps}"));
    }
    let rho = DegreeDistribution::from_pairs(
        DistributionKind::Check,
        &[(6, 0.48555), (7, 0.51445)],
    )
    .unwrap();
    run(&rho, 0.45, 7, "rho irregular eps=0.45");

    // Known-infeasible configuration.
    let rho = DegreeDistribution::regular(DistributionKind::Check, 6).unwrap();
    run(&rho, 0.95, 7, "rho=x^5 eps=0.95 (infeasible)");
}
