use super::{check_action, EnvError, EnvSpec, Environment, Step};
use crate::rng::Rng;
use rand_distr::{Distribution, Normal};

/// A stateless one-step problem: every episode is a single pull that pays
/// the fixed reward vector of the chosen arm.
#[derive(Clone, Debug, PartialEq)]
pub struct Bandit {
    arms: Vec<Vec<f64>>,
    noise_sd: f64,
    noise: Vec<f64>,
    running: bool,
}

impl Bandit {
    /// `arms[a]` is the reward vector of action `a`; all must have one length.
    pub fn new(arms: Vec<Vec<f64>>) -> Result<Self, EnvError> {
        let k = arms.first().map_or(0, Vec::len);
        if k == 0 || arms.iter().any(|r| r.len() != k || r.iter().any(|x| !x.is_finite())) {
            return Err(EnvError::Config("bandit arms need equal, nonzero length and finite rewards".into()));
        }
        Ok(Self {
            arms,
            noise_sd: 0.0,
            noise: Vec::new(),
            running: false,
        })
    }

    /// Adds zero-mean Gaussian noise with standard deviation `sd` to every
    /// reward component. The noise is drawn at reset from the episode's RNG.
    pub fn with_noise(mut self, sd: f64) -> Result<Self, EnvError> {
        if !(sd.is_finite() && sd >= 0.0) {
            return Err(EnvError::Config(format!("noise sd must be finite and non-negative, got {sd}")));
        }
        self.noise_sd = sd;
        Ok(self)
    }

    /// `n` arms that all pay the same vector, so every policy is optimal.
    pub fn flat(n: usize, reward: Vec<f64>) -> Result<Self, EnvError> {
        Self::new(vec![reward; n])
    }
}

impl Environment for Bandit {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_dim: 1,
            num_actions: self.arms.len(),
            num_objectives: self.arms[0].len(),
            max_episode_steps: 1,
        }
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.running = true;
        let k = self.arms[0].len();
        self.noise = match Normal::new(0.0, self.noise_sd) {
            Ok(n) if self.noise_sd > 0.0 => (0..k).map(|_| n.sample(rng)).collect(),
            _ => vec![0.0; k],
        };
        vec![1.0]
    }

    fn step(&mut self, action: usize) -> Result<Step, EnvError> {
        if !self.running {
            return Err(EnvError::NotRunning);
        }
        check_action(action, self.arms.len())?;
        self.running = false;
        Ok(Step {
            state: vec![1.0],
            reward: self.arms[action].iter().zip(&self.noise).map(|(r, n)| r + n).collect(),
            terminal: true,
            truncated: false,
        })
    }

    fn boxed_clone(&self) -> Box<dyn Environment> {
        Box::new(Self {
            running: false,
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_pull_per_episode() {
        let mut b = Bandit::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(b.step(0), Err(EnvError::NotRunning));
        b.reset(&mut crate::rng::stream(0, &[]));
        let s = b.step(1).unwrap();
        assert!(s.terminal);
        assert_eq!(s.reward, vec![0.0, 1.0]);
        assert_eq!(b.step(0), Err(EnvError::NotRunning));
        assert!(Bandit::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(Bandit::flat(2, vec![1.0]).unwrap().with_noise(-1.0).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let pull = |seed| {
            let mut b = Bandit::flat(2, vec![1.0, 1.0]).unwrap().with_noise(0.5).unwrap();
            b.reset(&mut crate::rng::stream(seed, &[]));
            b.step(0).unwrap().reward
        };
        assert_eq!(pull(3), pull(3));
        assert_ne!(pull(3), pull(4));
    }
}
