//! The linearized QP filter and the SOS filter side by side at a few states.

use sosguard::cbf::{filter_action, qp_filter_action, FilterConfig, QpConfig};
use sosguard::pendulum::{nominal_polynomial_model, pendulum_barrier, PendulumParams, BARRIER_DOMAIN};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dynamics = nominal_polynomial_model(&PendulumParams::default(), 9)?.truncated(5)?;
    let spec = pendulum_barrier(&BARRIER_DOMAIN)?;
    let sos_cfg = FilterConfig { local_radius: Some(vec![0.05, 0.2]), ..FilterConfig::default() };
    let qp_cfg = QpConfig::default();
    let cases = [([0.0, 0.0], 0.0), ([0.3, 0.5], 5.0), ([0.9, 0.5], 10.0), ([-0.95, -0.2], -12.0)];
    println!(
        "{:>16} {:>7} | {:>9} {:>18} | {:>9} {:>18}",
        "state", "a_rl", "qp a_cbf", "qp status", "sos a_cbf", "sos status"
    );
    for (s, a) in cases {
        let q = qp_filter_action(&spec.h, &dynamics, &s, &[a], &qp_cfg)?;
        let p = filter_action(&spec, &dynamics, &s, &[a], &sos_cfg)?;
        println!(
            "({:+.2}, {:+.2}) {a:>7.2} | {:>9.3} {:>18} | {:>9.3} {:>18}",
            s[0],
            s[1],
            q.a_cbf[0],
            q.status.as_str(),
            p.a_cbf[0],
            p.status.as_str()
        );
    }
    Ok(())
}
