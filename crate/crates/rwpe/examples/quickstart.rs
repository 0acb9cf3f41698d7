//! Parse an environment, compute its exact asymptotics, and confirm the
//! drift against a simulated estimate. Mirrors the README walkthrough.

use rwpe::{diffusion_matrix, drift, estimate_drift};
use rwpe::{parse_environment, InducedChain};

const LADDER: &str = r#"{
  "dims": [2],
  "sites": [
    { "coord": [0], "jumps": [
      { "step": [-1], "prob": "3/10" },
      { "step": [1], "prob": "7/10" }
    ] },
    { "coord": [1], "jumps": [
      { "step": [-1], "prob": "2/5" },
      { "step": [1], "prob": "3/5" }
    ] }
  ]
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = parse_environment(LADDER)?;
    let chain = InducedChain::from_env(&env)?;

    let nu = drift(&env, &chain)?;
    let sigma = diffusion_matrix(&env, &chain, &nu)?;
    println!("nu = {:.6}, sigma = {:.6}", nu[0], sigma[(0, 0)]);

    // 100 replicas of 10^5 steps from seed 7
    let stats = estimate_drift(&env, 100_000, 100, 7)?;
    println!("nu_hat = {:.6} +- {:.6}", stats.nu_hat[0], stats.nu_stderr[0]);
    assert!((stats.nu_hat[0] - nu[0]).abs() < 4.0 * stats.nu_stderr[0]);
    Ok(())
}
