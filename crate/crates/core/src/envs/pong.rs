use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tuning::pong::*;
use super::{reflect, GameSim, ObjectState, Observation};

/// Pong with the player on the right (x = 140) and a ball-tracking opponent
/// on the left (x = 16).
///
/// Actions: 0 NOOP, 2 moves the paddle toward smaller y, 3 toward larger y.
#[derive(Debug, Clone, Default)]
pub struct Pong {
    pub(crate) player_y: i32,
    pub(crate) player_dy: i32,
    pub(crate) enemy_y: i32,
    pub(crate) enemy_dy: i32,
    pub(crate) ball: ObjectState,
    pub(crate) player_score: i32,
    pub(crate) enemy_score: i32,
}

impl Pong {
    fn serve(&mut self, rng: &mut ChaCha8Rng) {
        let y = rng.random_range(SERVE_Y_MIN..=SERVE_Y_MAX);
        let dx = if rng.random_bool(0.5) { BALL_SPEED_X } else { -BALL_SPEED_X };
        let dy = SERVE_DY[rng.random_range(0..SERVE_DY.len())];
        self.ball = ObjectState::new(SERVE_X, y, BALL_W, BALL_H).with_velocity(dx, dy);
    }

    /// Ball contact test against a paddle whose top edge is at `paddle_y`.
    fn touches(ball_y: i32, paddle_y: i32) -> bool {
        ball_y + BALL_H >= paddle_y && ball_y <= paddle_y + PADDLE_H
    }

    /// New dy after a paddle hit. Outer zones steer the ball away from the
    /// paddle centre; if the ball also bounced off a wall this step the wall's
    /// direction is kept and only the magnitude changes.
    fn deflect(ball_y: i32, paddle_y: i32, dy: i32, wall_bounced: bool) -> i32 {
        let offset = (ball_y + BALL_H / 2) - (paddle_y + PADDLE_H / 2);
        let half = (PADDLE_H + BALL_H) / 2;
        let zone = ((offset + half) * 5 / (2 * half + 1)).clamp(0, 4) as usize;
        let magnitude = ZONE_DY[zone];
        let current = if dy < 0 { -1 } else { 1 };
        let direction = if wall_bounced {
            current
        } else {
            match zone {
                0 | 1 => -1,
                3 | 4 => 1,
                _ => current,
            }
        };
        direction * magnitude
    }

    fn move_paddle(y: i32, delta: i32) -> i32 {
        (y + delta).clamp(PADDLE_Y_MIN, PADDLE_Y_MAX)
    }
}

impl GameSim for Pong {
    fn reset(&mut self, rng: &mut ChaCha8Rng) {
        let centre = (TOP + BOTTOM) / 2 - PADDLE_H / 2;
        *self = Pong {
            player_y: centre,
            enemy_y: centre,
            ..Pong::default()
        };
        self.serve(rng);
    }

    fn advance(&mut self, action: u8, rng: &mut ChaCha8Rng) -> (i32, bool) {
        let delta = match action {
            2 => -PADDLE_SPEED,
            3 => PADDLE_SPEED,
            _ => 0,
        };
        let before = self.player_y;
        self.player_y = Self::move_paddle(self.player_y, delta);
        self.player_dy = self.player_y - before;

        // The opponent only reacts while the ball is heading its way.
        let before = self.enemy_y;
        if self.ball.dx < 0 {
            let target = self.ball.y + BALL_H / 2;
            let enemy_centre = self.enemy_y + PADDLE_H / 2;
            self.enemy_y = Self::move_paddle(self.enemy_y, (target - enemy_centre).clamp(-ENEMY_SPEED, ENEMY_SPEED));
        }
        self.enemy_dy = self.enemy_y - before;

        let ball = &mut self.ball;
        let (x0, mut x, mut y) = (ball.x, ball.x + ball.dx, ball.y + ball.dy);
        let mut wall_bounced = false;
        if y < TOP {
            y = reflect(y, TOP);
            ball.dy = -ball.dy;
            wall_bounced = true;
        } else if y > BOTTOM {
            y = reflect(y, BOTTOM);
            ball.dy = -ball.dy;
            wall_bounced = true;
        }

        let mut reward = 0;
        if ball.dx > 0 && x0 < PLAYER_X && x >= PLAYER_X {
            if Self::touches(y, self.player_y) {
                x = reflect(x, PLAYER_X);
                ball.dx = -ball.dx;
                ball.dy = Self::deflect(y, self.player_y, ball.dy, wall_bounced);
            } else {
                reward = -1;
            }
        } else if ball.dx < 0 && x0 > ENEMY_X && x <= ENEMY_X {
            if Self::touches(y, self.enemy_y) {
                x = reflect(x, ENEMY_X);
                ball.dx = -ball.dx;
                ball.dy = Self::deflect(y, self.enemy_y, ball.dy, wall_bounced);
            } else {
                reward = 1;
            }
        }
        ball.x = x;
        ball.y = y;

        match reward {
            1 => self.player_score += 1,
            -1 => self.enemy_score += 1,
            _ => {}
        }
        let over = self.player_score >= WIN_SCORE || self.enemy_score >= WIN_SCORE;
        if reward != 0 && !over {
            self.serve(rng);
        }
        (reward, over)
    }

    fn observe(&self) -> Observation {
        let mut obs = Observation {
            score: self.player_score,
            ..Observation::default()
        };
        obs.objects.insert(
            "Player".into(),
            ObjectState::new(PLAYER_X, self.player_y, PADDLE_W, PADDLE_H).with_velocity(0, self.player_dy),
        );
        obs.objects.insert(
            "Enemy".into(),
            ObjectState::new(ENEMY_X, self.enemy_y, PADDLE_W, PADDLE_H).with_velocity(0, self.enemy_dy),
        );
        obs.objects.insert("Ball".into(), self.ball);
        obs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Env, EnvConfig, Game};
    use rand::SeedableRng;

    fn sim() -> (Pong, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pong = Pong::default();
        pong.reset(&mut rng);
        (pong, rng)
    }

    #[test]
    fn reset_layout() {
        let (_, obs) = Env::start(EnvConfig::new(Game::Pong, 7, 100)).unwrap();
        let labels: Vec<_> = obs.labels().collect();
        assert_eq!(labels, ["Ball", "Enemy", "Player"]);
        assert_eq!(obs.get("Player").unwrap().x, 140);
        assert_eq!(obs.get("Enemy").unwrap().x, 16);
    }

    #[test]
    fn reflects_off_top() {
        let (mut pong, mut rng) = sim();
        pong.ball = ObjectState::new(80, 30, BALL_W, BALL_H).with_velocity(4, -3);
        pong.advance(0, &mut rng);
        assert_eq!(pong.ball.dy, 3);
        assert_eq!(pong.ball.y, 33);
    }

    #[test]
    fn reflects_off_bottom() {
        let (mut pong, mut rng) = sim();
        pong.ball = ObjectState::new(80, 189, BALL_W, BALL_H).with_velocity(-4, 2);
        pong.advance(0, &mut rng);
        assert_eq!(pong.ball.dy, -2);
        assert_eq!(pong.ball.y, 189);
    }

    #[test]
    fn noop_keeps_player_still() {
        let (mut pong, mut rng) = sim();
        let y = pong.player_y;
        pong.ball = ObjectState::new(80, 100, BALL_W, BALL_H).with_velocity(4, 1);
        pong.advance(0, &mut rng);
        assert_eq!(pong.player_y, y);
        assert_eq!(pong.player_dy, 0);
    }

    #[test]
    fn action_two_moves_up_screen() {
        let (mut pong, mut rng) = sim();
        let y = pong.player_y;
        pong.advance(2, &mut rng);
        assert_eq!(pong.player_y, y - PADDLE_SPEED);
        pong.advance(3, &mut rng);
        assert_eq!(pong.player_y, y);
    }

    #[test]
    fn paddle_returns_ball() {
        let (mut pong, mut rng) = sim();
        pong.player_y = 100;
        pong.ball = ObjectState::new(138, 106, BALL_W, BALL_H).with_velocity(4, 0);
        let (reward, _) = pong.advance(0, &mut rng);
        assert_eq!(reward, 0);
        assert_eq!(pong.ball.dx, -4);
        assert_eq!(pong.ball.x, 138);
    }

    #[test]
    fn missed_ball_scores_for_enemy() {
        let (mut pong, mut rng) = sim();
        pong.player_y = PADDLE_Y_MIN;
        pong.ball = ObjectState::new(138, 180, BALL_W, BALL_H).with_velocity(4, 0);
        let (reward, over) = pong.advance(0, &mut rng);
        assert_eq!((reward, over), (-1, false));
        assert_eq!(pong.enemy_score, 1);
        assert_eq!(pong.ball.x, SERVE_X);
    }

    #[test]
    fn twenty_first_point_ends_game() {
        let (mut pong, mut rng) = sim();
        pong.player_score = 20;
        pong.enemy_score = 4;
        pong.enemy_y = PADDLE_Y_MAX;
        pong.ball = ObjectState::new(18, 40, BALL_W, BALL_H).with_velocity(-4, 0);
        let (reward, over) = pong.advance(0, &mut rng);
        assert_eq!((reward, over), (1, true));
        assert_eq!(pong.player_score - pong.enemy_score, 17);
    }

    #[test]
    fn deflection_zones() {
        // top edge contact steers up, bottom edge down, centre keeps direction
        assert_eq!(Pong::deflect(100 - BALL_H, 100, 1, false), -4);
        assert_eq!(Pong::deflect(100 + PADDLE_H, 100, -1, false), 4);
        assert_eq!(Pong::deflect(100 + PADDLE_H / 2 - BALL_H / 2, 100, -3, false), -ZONE_DY[2]);
        assert_eq!(Pong::deflect(100 - BALL_H, 100, 3, true), 4);
    }
}
