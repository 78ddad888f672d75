//! Shows how tanh(βω) approaches sign(ω) along the β schedule, and the
//! penalty ε/β² that shrinks with it.
//!
//! cargo run --release --example atanh_continuation

use dagh::hashnet::{atanh_activate, sign_quantize, BetaSchedule};

fn main() -> dagh::Result<()> {
    let omega = [-0.8, -0.1, -0.01, 0.0, 0.01, 0.1, 0.8];
    println!("sign: {:?}", sign_quantize(&omega).as_slice());
    let schedule = BetaSchedule::default();
    println!("{:>6} {:>10} {:>12}  codes", "beta", "penalty", "max |u-b|");
    for epoch in 0..=10 {
        let beta = schedule.beta(epoch);
        let (u, penalty) = atanh_activate(&omega, beta, 0.001)?;
        // deviation over the entries with |ω| ≥ 0.1
        let dev = u
            .iter()
            .zip(&omega)
            .filter(|(_, w)| w.abs() >= 0.1)
            .map(|(u, w)| (u - w.signum()).abs())
            .fold(0.0, f64::max);
        let shown: Vec<String> = u.iter().map(|v| format!("{v:+.3}")).collect();
        println!("{beta:>6} {penalty:>10.2e} {dev:>12.3e}  [{}]", shown.join(" "));
    }
    Ok(())
}
