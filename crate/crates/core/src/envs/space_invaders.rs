use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tuning::space_invaders::*;
use super::tuning::SCREEN_H;
use super::{GameSim, ObjectState, Observation};

const ALIENS: usize = ALIEN_ROWS * ALIEN_COLS;

#[derive(Debug, Clone, Copy)]
struct Bullet {
    state: ObjectState,
    from_player: bool,
}

/// Space Invaders with a marching 6x6 alien grid, three shields and a single
/// player bullet at a time.
///
/// Actions: 0 NOOP, 1 FIRE, 2 RIGHT, 3 LEFT, 4 RIGHT+FIRE, 5 LEFT+FIRE.
#[derive(Debug, Clone, Default)]
pub struct SpaceInvaders {
    player_x: i32,
    player_dx: i32,
    alive: Vec<bool>,
    grid_x: i32,
    grid_y: i32,
    grid_dir: i32,
    grid_dx: i32,
    grid_dy: i32,
    march_timer: u32,
    bullets: Vec<Bullet>,
    shields: [u32; 3],
    cooldown: u32,
    lives: i32,
    score: i32,
}

fn alien_points(index: usize) -> i32 {
    ROW_POINTS[index / ALIEN_COLS]
}

impl SpaceInvaders {
    fn alien_state(&self, index: usize) -> ObjectState {
        let (row, col) = (index / ALIEN_COLS, index % ALIEN_COLS);
        ObjectState::new(
            self.grid_x + col as i32 * ALIEN_SPACING_X,
            self.grid_y + row as i32 * ALIEN_SPACING_Y,
            ALIEN_W,
            ALIEN_H,
        )
        .with_velocity(self.grid_dx, self.grid_dy)
    }

    fn shield_state(i: usize) -> ObjectState {
        ObjectState::new(SHIELD_X[i], SHIELD_Y, SHIELD_W, SHIELD_H)
    }

    fn player_state(&self) -> ObjectState {
        ObjectState::new(self.player_x, PLAYER_Y, PLAYER_W, PLAYER_H).with_velocity(self.player_dx, 0)
    }

    fn alive_count(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }

    fn player_bullet_in_flight(&self) -> bool {
        self.bullets.iter().any(|b| b.from_player)
    }

    fn march(&mut self) {
        self.grid_dx = 0;
        self.grid_dy = 0;
        let alive = self.alive_count() as u32;
        if alive == 0 {
            return;
        }
        let period = (alive * MARCH_PERIOD_FULL).div_ceil(ALIENS as u32).max(1);
        self.march_timer += 1;
        if self.march_timer < period {
            return;
        }
        self.march_timer = 0;
        let (mut min_x, mut max_x) = (i32::MAX, i32::MIN);
        for i in (0..ALIENS).filter(|&i| self.alive[i]) {
            let a = self.alien_state(i);
            min_x = min_x.min(a.x);
            max_x = max_x.max(a.x + a.w);
        }
        let step = self.grid_dir * MARCH_STEP_X;
        if min_x + step < GRID_X_MIN || max_x + step > GRID_X_MAX {
            self.grid_y += MARCH_DROP_Y;
            self.grid_dy = MARCH_DROP_Y;
            self.grid_dir = -self.grid_dir;
        } else {
            self.grid_x += step;
            self.grid_dx = step;
        }
    }

    fn alien_fire(&mut self, rng: &mut ChaCha8Rng) {
        let in_flight = self.bullets.iter().filter(|b| !b.from_player).count();
        if in_flight >= MAX_ALIEN_BULLETS || !rng.random_bool(ALIEN_FIRE_PROB) {
            return;
        }
        let columns: Vec<usize> = (0..ALIEN_COLS)
            .filter(|&c| (0..ALIEN_ROWS).any(|r| self.alive[r * ALIEN_COLS + c]))
            .collect();
        if columns.is_empty() {
            return;
        }
        let col = columns[rng.random_range(0..columns.len())];
        let row = (0..ALIEN_ROWS).rev().find(|&r| self.alive[r * ALIEN_COLS + col]).unwrap_or(0);
        let shooter = self.alien_state(row * ALIEN_COLS + col);
        self.bullets.push(Bullet {
            state: ObjectState::new(shooter.x + ALIEN_W / 2, shooter.y + ALIEN_H, BULLET_W, BULLET_H)
                .with_velocity(0, ALIEN_BULLET_DY),
            from_player: false,
        });
    }
}

impl GameSim for SpaceInvaders {
    fn reset(&mut self, _rng: &mut ChaCha8Rng) {
        *self = SpaceInvaders {
            player_x: PLAYER_START_X,
            alive: vec![true; ALIENS],
            grid_x: GRID_ORIGIN_X,
            grid_y: GRID_ORIGIN_Y,
            grid_dir: 1,
            shields: [SHIELD_HP; 3],
            lives: LIVES,
            ..SpaceInvaders::default()
        };
    }

    fn advance(&mut self, action: u8, rng: &mut ChaCha8Rng) -> (i32, bool) {
        let delta = match action {
            2 | 4 => PLAYER_SPEED,
            3 | 5 => -PLAYER_SPEED,
            _ => 0,
        };
        let before = self.player_x;
        self.player_x = (self.player_x + delta).clamp(PLAYER_X_MIN, PLAYER_X_MAX);
        self.player_dx = self.player_x - before;

        self.cooldown = self.cooldown.saturating_sub(1);
        if matches!(action, 1 | 4 | 5) && self.cooldown == 0 && !self.player_bullet_in_flight() {
            let x = self.player_x + PLAYER_W / 2;
            self.bullets.push(Bullet {
                state: ObjectState::new(x, PLAYER_Y - BULLET_H, BULLET_W, BULLET_H).with_velocity(0, PLAYER_BULLET_DY),
                from_player: true,
            });
            self.cooldown = FIRE_COOLDOWN;
        }

        for b in &mut self.bullets {
            b.state.y += b.state.dy;
        }
        self.bullets
            .retain(|b| b.state.y >= 0 && b.state.y + b.state.h <= SCREEN_H);

        let mut reward = 0;
        let mut player_hit = false;
        let player = self.player_state();
        let mut spent = vec![false; self.bullets.len()];
        for (k, bullet) in self.bullets.iter().enumerate() {
            let shot = bullet.state;
            if let Some(i) = (0..3).find(|&i| self.shields[i] > 0 && Self::shield_state(i).overlaps(&shot)) {
                self.shields[i] -= 1;
                spent[k] = true;
                continue;
            }
            if bullet.from_player {
                // lowest alien first: the bullet travels upward
                let target = (0..ALIENS)
                    .rev()
                    .find(|&i| self.alive[i] && self.alien_state(i).overlaps(&shot));
                if let Some(i) = target {
                    self.alive[i] = false;
                    reward += alien_points(i);
                    spent[k] = true;
                }
            } else if player.overlaps(&shot) {
                player_hit = true;
                spent[k] = true;
            }
        }
        let mut k = 0;
        self.bullets.retain(|_| {
            k += 1;
            !spent[k - 1]
        });
        if player_hit {
            self.lives -= 1;
            self.bullets.retain(|b| b.from_player);
        }

        self.march();
        for i in (0..ALIENS).filter(|&i| self.alive[i]) {
            let alien = self.alien_state(i);
            for s in 0..3 {
                if self.shields[s] > 0 && Self::shield_state(s).overlaps(&alien) {
                    self.shields[s] = 0;
                }
            }
            if alien.y + alien.h >= PLAYER_Y {
                self.lives = 0;
            }
        }
        self.alien_fire(rng);

        self.score += reward;
        let over = self.lives <= 0 || self.alive_count() == 0;
        (reward, over)
    }

    fn observe(&self) -> Observation {
        let mut obs = Observation {
            lives: self.lives.max(0),
            score: self.score,
            ..Observation::default()
        };
        obs.objects.insert("Player".into(), self.player_state());
        for i in (0..ALIENS).filter(|&i| self.alive[i]) {
            obs.objects.insert(format!("Alien{i}"), self.alien_state(i));
        }
        for (i, hp) in self.shields.iter().enumerate() {
            if *hp > 0 {
                obs.objects.insert(format!("Shield{i}"), Self::shield_state(i));
            }
        }
        for (i, b) in self.bullets.iter().enumerate() {
            obs.objects.insert(format!("Bullet{i}"), b.state);
        }
        obs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Env, EnvConfig, Game};
    use rand::SeedableRng;

    fn sim() -> (SpaceInvaders, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut si = SpaceInvaders::default();
        si.reset(&mut rng);
        (si, rng)
    }

    fn player_bullets(obs: &Observation) -> usize {
        obs.objects
            .iter()
            .filter(|(l, o)| l.starts_with("Bullet") && o.dy < 0)
            .count()
    }

    #[test]
    fn reset_layout() {
        let (_, obs) = Env::start(EnvConfig::new(Game::SpaceInvaders, 0, 100)).unwrap();
        assert_eq!(obs.lives, 3);
        assert_eq!(obs.labels().filter(|l| l.starts_with("Shield")).count(), 3);
        assert_eq!(obs.labels().filter(|l| l.starts_with("Alien")).count(), ALIENS);
    }

    #[test]
    fn fire_spawns_one_bullet_only() {
        let (mut env, _) = Env::start(EnvConfig::new(Game::SpaceInvaders, 0, 100)).unwrap();
        let obs = env.step(1).unwrap().obs;
        assert_eq!(player_bullets(&obs), 1);
        for _ in 0..12 {
            let obs = env.step(1).unwrap().obs;
            assert!(player_bullets(&obs) <= 1);
        }
    }

    #[test]
    fn cooldown_blocks_refire() {
        let (mut si, mut rng) = sim();
        si.advance(1, &mut rng);
        si.bullets.clear();
        si.advance(1, &mut rng);
        assert!(!si.player_bullet_in_flight(), "cooldown should block the shot");
        for _ in 0..FIRE_COOLDOWN {
            si.advance(0, &mut rng);
        }
        si.advance(1, &mut rng);
        assert!(si.player_bullet_in_flight());
    }

    #[test]
    fn left_fire_moves_left_and_shoots() {
        let (mut si, mut rng) = sim();
        let x = si.player_x;
        si.advance(5, &mut rng);
        assert_eq!(si.player_x, x - PLAYER_SPEED);
        assert!(si.player_bullet_in_flight());
    }

    #[test]
    fn noop_leaves_player_alone() {
        let (mut si, mut rng) = sim();
        let before = si.player_state();
        si.advance(0, &mut rng);
        assert_eq!(si.player_state(), before);
        assert!(!si.player_bullet_in_flight());
    }

    #[test]
    fn killing_bottom_alien_scores_row_points() {
        let (mut si, mut rng) = sim();
        let target = si.alien_state(ALIENS - 1);
        si.bullets.push(Bullet {
            state: ObjectState::new(target.x + 2, target.y + ALIEN_H + 4, BULLET_W, BULLET_H)
                .with_velocity(0, PLAYER_BULLET_DY),
            from_player: true,
        });
        let (reward, _) = si.advance(0, &mut rng);
        assert_eq!(reward, ROW_POINTS[ALIEN_ROWS - 1]);
        assert!(!si.alive[ALIENS - 1]);
        assert!(!si.player_bullet_in_flight());
    }

    #[test]
    fn shield_absorbs_bullets() {
        let (mut si, mut rng) = sim();
        let shield = SpaceInvaders::shield_state(1);
        si.bullets.push(Bullet {
            state: ObjectState::new(shield.x + 4, shield.y + SHIELD_H + 2, BULLET_W, BULLET_H)
                .with_velocity(0, PLAYER_BULLET_DY),
            from_player: true,
        });
        si.advance(0, &mut rng);
        assert_eq!(si.shields[1], SHIELD_HP - 1);
        assert!(!si.player_bullet_in_flight());
    }

    #[test]
    fn alien_bullet_costs_a_life() {
        let (mut si, mut rng) = sim();
        si.bullets.push(Bullet {
            state: ObjectState::new(si.player_x + 2, PLAYER_Y - 6, BULLET_W, BULLET_H).with_velocity(0, ALIEN_BULLET_DY),
            from_player: false,
        });
        si.advance(0, &mut rng);
        assert_eq!(si.lives, LIVES - 1);
    }

    #[test]
    fn grid_marches_and_descends() {
        let (mut si, mut rng) = sim();
        let y0 = si.grid_y;
        for _ in 0..400 {
            si.advance(0, &mut rng);
            if si.lives <= 0 {
                break;
            }
        }
        assert!(si.grid_y > y0);
    }

    #[test]
    fn clearing_the_grid_ends_the_game() {
        let (mut si, mut rng) = sim();
        si.alive = vec![false; ALIENS];
        si.alive[0] = true;
        let target = si.alien_state(0);
        si.bullets.push(Bullet {
            state: ObjectState::new(target.x + 2, target.y + ALIEN_H + 4, BULLET_W, BULLET_H)
                .with_velocity(0, PLAYER_BULLET_DY),
            from_player: true,
        });
        let (reward, over) = si.advance(0, &mut rng);
        assert_eq!(reward, ROW_POINTS[0]);
        assert!(over);
    }
}
