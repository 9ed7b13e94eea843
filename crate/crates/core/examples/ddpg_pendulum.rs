//! Plain DDPG on the pendulum without any safety layer.
//! The cost grows with the unwrapped angle, so once the agent swings the
//! pendulum over the top nothing pulls it back and the cost runs away.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sosguard::ddpg::{Agent, AgentConfig, Transition};
use sosguard::pendulum::{reset, step, InitRange, PendulumParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let episodes: usize = std::env::args().nth(1).and_then(|v| v.parse().ok()).unwrap_or(10);
    let params = PendulumParams::default();
    let mut agent = Agent::new(2, AgentConfig::default(), 11)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for ep in 0..episodes {
        let mut s = reset(&mut rng, &InitRange::default());
        let (mut cost, mut worst, mut last_loss) = (0.0, 0.0f64, f64::NAN);
        for _ in 0..200 {
            let a = agent.act(&s.to_vec(), true);
            let (next, reward) = step(s, a[0], &params)?;
            agent.remember(Transition {
                state: s.to_vec(),
                a_total: a.clone(),
                a_rl: a,
                a_prior: vec![0.0],
                a_cbf: vec![0.0],
                reward,
                next_state: next.to_vec(),
                done: false,
            });
            if let Some(stats) = agent.train_step()? {
                last_loss = stats.critic_loss;
            }
            cost -= reward;
            worst = worst.max(next.theta.abs());
            s = next;
        }
        agent.end_episode();
        println!("episode {ep:2}: cost {cost:10.2}  max |theta| {worst:8.3}  critic loss {last_loss:.3e}");
    }
    Ok(())
}
