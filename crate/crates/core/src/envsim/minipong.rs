//! Grid Pong against a wall.
//!
//! The ball bounces diagonally around a W×H grid; the agent's paddle guards
//! the rightmost column. Reaching that column scores one point: +1 if the
//! paddle covers the ball (the ball is returned), −1 if it misses (the ball
//! re-serves from the center). An episode ends after `max_points` points or
//! `episode_cap` steps, so returns span [−max_points, +max_points].

use serde::{Deserialize, Serialize};

use crate::envsim::{EnvSpec, StepOutcome};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const ACTION_NOOP: usize = 0;
pub const ACTION_UP: usize = 1;
pub const ACTION_DOWN: usize = 2;

fn opposite(a: usize) -> usize {
    match a {
        ACTION_UP => ACTION_DOWN,
        ACTION_DOWN => ACTION_UP,
        other => other, // noop has no opposite
    }
}

/// Geometry and scoring of a MiniPong environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiniPongSpec {
    pub width: usize,
    pub height: usize,
    pub paddle_height: usize,
    pub episode_cap: usize,
    pub max_points: usize,
}

impl Default for MiniPongSpec {
    fn default() -> Self {
        MiniPongSpec { width: 12, height: 12, paddle_height: 3, episode_cap: 500, max_points: 21 }
    }
}

impl MiniPongSpec {
    pub fn validate(&self) -> Result<()> {
        if self.paddle_height < 1 || self.paddle_height >= self.height {
            return Err(Error::Config(format!(
                "paddle height {} must satisfy 1 ≤ P < H = {}",
                self.paddle_height, self.height
            )));
        }
        if self.width < 4 {
            return Err(Error::Config(format!("width must be ≥ 4, got {}", self.width)));
        }
        if self.height < 3 {
            return Err(Error::Config(format!("height must be ≥ 3, got {}", self.height)));
        }
        if self.max_points == 0 || self.episode_cap == 0 {
            return Err(Error::Config("max_points and episode_cap must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MiniPong {
    spec: MiniPongSpec,
    ball_x: i64,
    ball_y: i64,
    vel_x: i64,
    vel_y: i64,
    paddle_y: i64, // top row of the paddle
    steps: usize,
    points_played: usize,
    done: bool,
    rng: SplitMix64,
}

impl MiniPong {
    pub fn new(spec: MiniPongSpec) -> Result<Self> {
        spec.validate()?;
        Ok(MiniPong {
            spec,
            ball_x: 0,
            ball_y: 0,
            vel_x: 1,
            vel_y: 1,
            paddle_y: 0,
            steps: 0,
            points_played: 0,
            done: true,
            rng: SplitMix64::new(0),
        })
    }

    pub fn pong_spec(&self) -> &MiniPongSpec {
        &self.spec
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: 5,
            action_cardinality: 3,
            opposite_map: opposite,
            episode_cap: self.spec.episode_cap,
        }
    }

    fn serve_from_center(&mut self) {
        self.ball_x = (self.spec.width / 2) as i64;
        self.ball_y = (self.spec.height / 2) as i64;
        self.vel_x = self.rng.sign();
        self.vel_y = self.rng.sign();
    }

    /// Observation: [ball_x, ball_y, vel_x, vel_y, paddle_y], each affinely
    /// scaled to [−1, 1].
    fn observe(&self) -> Vec<f64> {
        let scale = |v: i64, max: usize| {
            if max == 0 {
                0.0
            } else {
                2.0 * v as f64 / max as f64 - 1.0
            }
        };
        vec![
            scale(self.ball_x, self.spec.width - 1),
            scale(self.ball_y, self.spec.height - 1),
            self.vel_x as f64,
            self.vel_y as f64,
            scale(self.paddle_y, self.spec.height - self.spec.paddle_height),
        ]
    }

    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = SplitMix64::new(seed);
        self.paddle_y = ((self.spec.height - self.spec.paddle_height) / 2) as i64;
        self.ball_x = (self.spec.width / 2) as i64;
        // initial ball row and velocity come from the seeded generator
        self.ball_y = 1 + self.rng.below((self.spec.height - 2) as u64) as i64;
        self.vel_x = self.rng.sign();
        self.vel_y = self.rng.sign();
        self.steps = 0;
        self.points_played = 0;
        self.done = false;
        self.observe()
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Contract("step() after terminal; call reset() first".into()));
        }
        if action > 2 {
            return Err(Error::Contract(format!("minipong action {action} out of range [0, 3)")));
        }

        // paddle first, so the action taken this step can still reach a ball
        // arriving at the paddle column
        let paddle_max = (self.spec.height - self.spec.paddle_height) as i64;
        match action {
            ACTION_UP => self.paddle_y = (self.paddle_y - 1).max(0),
            ACTION_DOWN => self.paddle_y = (self.paddle_y + 1).min(paddle_max),
            _ => {}
        }

        // walls reflect the velocity component before the ball moves
        if self.ball_y == 0 {
            self.vel_y = 1;
        } else if self.ball_y == (self.spec.height - 1) as i64 {
            self.vel_y = -1;
        }
        if self.ball_x == 0 {
            self.vel_x = 1;
        }
        self.ball_x += self.vel_x;
        self.ball_y += self.vel_y;

        let mut reward = 0.0;
        if self.ball_x == (self.spec.width - 1) as i64 {
            self.points_played += 1;
            let covered =
                self.paddle_y <= self.ball_y && self.ball_y < self.paddle_y + self.spec.paddle_height as i64;
            if covered {
                reward = 1.0;
                self.vel_x = -1;
            } else {
                reward = -1.0;
                self.serve_from_center();
            }
        }

        self.steps += 1;
        self.done = self.points_played >= self.spec.max_points || self.steps >= self.spec.episode_cap;
        Ok(StepOutcome { observation: self.observe(), reward, terminal: self.done })
    }
}
