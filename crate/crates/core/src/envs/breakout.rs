use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tuning::breakout::*;
use super::{reflect, GameSim, ObjectState, Observation};

const ROWS: usize = ROW_Y.len();

/// Breakout with six brick rows, five lives and automatic relaunch.
///
/// Actions: 0 NOOP, 2 RIGHT, 3 LEFT. There is no FIRE action; each serve is
/// launched downward from below the wall and aimed away from the paddle.
#[derive(Debug, Clone, Default)]
pub struct Breakout {
    pub(crate) paddle_x: i32,
    pub(crate) paddle_dx: i32,
    pub(crate) ball: ObjectState,
    pub(crate) bricks: [[bool; BRICKS_PER_ROW]; ROWS],
    pub(crate) rebuilt: bool,
    pub(crate) fast: bool,
    pub(crate) lives: i32,
    pub(crate) score: i32,
}

pub(crate) fn brick_label(row: usize, col: usize) -> String {
    format!("{}{:02}", ROW_LABELS[row], col)
}

pub(crate) fn brick_state(row: usize, col: usize) -> ObjectState {
    ObjectState::new(LEFT_WALL + BRICK_W * col as i32, ROW_Y[row], BRICK_W, BRICK_H)
}

/// Point value of a brick label such as `"OB03"`.
pub fn brick_points(label: &str) -> Option<i32> {
    ROW_LABELS
        .iter()
        .position(|p| label.len() > p.len() && label.starts_with(p))
        .map(|row| ROW_POINTS[row])
}

impl Breakout {
    fn speed(&self) -> i32 {
        if self.fast {
            FAST_BALL_DY
        } else {
            BALL_DY
        }
    }

    /// x where a ball moving straight down from `(x, SERVE_Y)` crosses the
    /// paddle plane, side walls included.
    fn landing_x(mut x: i32, mut dx: i32) -> i32 {
        let mut y = SERVE_Y;
        while y < PADDLE_Y {
            x += dx;
            y += BALL_DY;
            if x < LEFT_WALL {
                x = reflect(x, LEFT_WALL);
                dx = -dx;
            } else if x > RIGHT_WALL {
                x = reflect(x, RIGHT_WALL);
                dx = -dx;
            }
        }
        x
    }

    fn serve(&mut self, rng: &mut ChaCha8Rng) {
        let paddle_centre = self.paddle_x + PADDLE_W / 2;
        let misses = |x: i32, dx: i32| (Self::landing_x(x, dx) + BALL_W / 2 - paddle_centre).abs() > SERVE_MISS_MARGIN;
        let mut choice = None;
        for _ in 0..32 {
            let x = rng.random_range(SERVE_X_MIN..=SERVE_X_MAX);
            let dx = SERVE_DX[rng.random_range(0..SERVE_DX.len())];
            if misses(x, dx) {
                choice = Some((x, dx));
                break;
            }
        }
        // Deterministic fallback: scan for any serve that misses.
        let (x, dx) = choice.unwrap_or_else(|| {
            (SERVE_X_MIN..=SERVE_X_MAX)
                .flat_map(|x| SERVE_DX.iter().map(move |&dx| (x, dx)))
                .find(|&(x, dx)| misses(x, dx))
                .unwrap_or((SERVE_X_MIN, SERVE_DX[0]))
        });
        self.fast = false;
        self.ball = ObjectState::new(x, SERVE_Y, BALL_W, BALL_H).with_velocity(dx, BALL_DY);
    }

    fn remaining(&self) -> usize {
        self.bricks.iter().flatten().filter(|b| **b).count()
    }

    /// Brick the ball runs into first: lowest row when rising, highest when
    /// falling, then the column under the ball's centre.
    fn hit_brick(&self, ball: &ObjectState, rising: bool) -> Option<(usize, usize)> {
        let centre = ball.x + BALL_W / 2;
        let mut best: Option<(usize, usize)> = None;
        for row in 0..ROWS {
            for col in 0..BRICKS_PER_ROW {
                if !self.bricks[row][col] || !brick_state(row, col).overlaps(ball) {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((brow, bcol)) if brow == row => {
                        let d = (brick_state(row, col).x + BRICK_W / 2 - centre).abs();
                        let bd = (brick_state(brow, bcol).x + BRICK_W / 2 - centre).abs();
                        d < bd
                    }
                    Some((brow, _)) => (row > brow) == rising,
                };
                if better {
                    best = Some((row, col));
                }
            }
        }
        best
    }
}

impl GameSim for Breakout {
    fn reset(&mut self, rng: &mut ChaCha8Rng) {
        *self = Breakout {
            paddle_x: (LEFT_WALL + RIGHT_WALL) / 2 - PADDLE_W / 2,
            bricks: [[true; BRICKS_PER_ROW]; ROWS],
            lives: LIVES,
            ..Breakout::default()
        };
        self.serve(rng);
    }

    fn advance(&mut self, action: u8, rng: &mut ChaCha8Rng) -> (i32, bool) {
        let delta = match action {
            2 => PADDLE_SPEED,
            3 => -PADDLE_SPEED,
            _ => 0,
        };
        let before = self.paddle_x;
        self.paddle_x = (self.paddle_x + delta).clamp(PADDLE_X_MIN, PADDLE_X_MAX);
        self.paddle_dx = self.paddle_x - before;

        let y0 = self.ball.y;
        let mut ball = self.ball;
        ball.x += ball.dx;
        ball.y += ball.dy;
        if ball.x < LEFT_WALL {
            ball.x = reflect(ball.x, LEFT_WALL);
            ball.dx = -ball.dx;
        } else if ball.x > RIGHT_WALL {
            ball.x = reflect(ball.x, RIGHT_WALL);
            ball.dx = -ball.dx;
        }
        if ball.y < TOP_WALL {
            ball.y = reflect(ball.y, TOP_WALL);
            ball.dy = -ball.dy;
        }

        let mut reward = 0;
        if let Some((row, col)) = self.hit_brick(&ball, ball.dy < 0) {
            self.bricks[row][col] = false;
            reward += ROW_POINTS[row];
            if row < FAST_ROWS {
                self.fast = true;
            }
            let brick = brick_state(row, col);
            if ball.dy < 0 {
                ball.y = brick.y + BRICK_H;
                ball.dy = self.speed();
            } else {
                ball.y = brick.y - BALL_H;
                ball.dy = -self.speed();
            }
        }

        if ball.dy > 0 && y0 < PADDLE_Y && ball.y >= PADDLE_Y {
            let caught = ball.x + BALL_W >= self.paddle_x && ball.x <= self.paddle_x + PADDLE_W;
            if caught {
                ball.y = reflect(ball.y, PADDLE_Y);
                ball.dy = -self.speed();
                let offset = (ball.x + BALL_W / 2) - (self.paddle_x + PADDLE_W / 2);
                let half = (PADDLE_W + BALL_W) / 2;
                let zone = ((offset + half) * 5 / (2 * half + 1)).clamp(0, 4) as usize;
                ball.dx = if zone == 2 {
                    ZONE_DX[2] * if ball.dx < 0 { -1 } else { 1 }
                } else {
                    ZONE_DX[zone]
                };
                self.ball = ball;
            } else {
                self.ball = ball;
                self.lives -= 1;
                if self.lives > 0 {
                    self.serve(rng);
                }
            }
        } else {
            self.ball = ball;
        }

        self.score += reward;
        if self.remaining() == 0 && !self.rebuilt {
            self.bricks = [[true; BRICKS_PER_ROW]; ROWS];
            self.rebuilt = true;
        }
        let over = self.lives <= 0 || self.score >= MAX_SCORE;
        (reward, over)
    }

    fn observe(&self) -> Observation {
        let mut obs = Observation {
            lives: self.lives.max(0),
            score: self.score,
            ..Observation::default()
        };
        obs.objects.insert(
            "Player".into(),
            ObjectState::new(self.paddle_x, PADDLE_Y, PADDLE_W, PADDLE_H).with_velocity(self.paddle_dx, 0),
        );
        obs.objects.insert("Ball".into(), self.ball);
        for row in 0..ROWS {
            for col in 0..BRICKS_PER_ROW {
                if self.bricks[row][col] {
                    obs.objects.insert(brick_label(row, col), brick_state(row, col));
                }
            }
        }
        obs
    }
}
