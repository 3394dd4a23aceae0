//! Physics and rule constants for the three arcade games.
//!
//! Boundaries, paddle planes, brick rows and scoring rules match the object
//! coordinates the reference policies were written against. Everything else
//! (speeds, cadences, cooldowns, alien point values) is a tuning choice and
//! lives here so it can be adjusted in one place.

/// Screen extent every object must stay within.
pub const SCREEN_W: i32 = 160;
pub const SCREEN_H: i32 = 210;

pub mod pong {
    pub const TOP: i32 = 30;
    pub const BOTTOM: i32 = 190;
    pub const PLAYER_X: i32 = 140;
    pub const ENEMY_X: i32 = 16;

    pub const PADDLE_W: i32 = 4;
    pub const PADDLE_H: i32 = 16;
    pub const PADDLE_SPEED: i32 = 4;
    /// Paddle top edge range; the centre can reach both ball boundaries.
    pub const PADDLE_Y_MIN: i32 = TOP - PADDLE_H / 2;
    pub const PADDLE_Y_MAX: i32 = BOTTOM - PADDLE_H / 2;

    pub const BALL_W: i32 = 2;
    pub const BALL_H: i32 = 4;
    pub const BALL_SPEED_X: i32 = 4;
    /// |dy| after a paddle hit, by contact zone from top edge to bottom edge.
    pub const ZONE_DY: [i32; 5] = [4, 3, 2, 3, 4];
    pub const MAX_BALL_DY: i32 = 4;
    /// Half the player's paddle speed, so steep returns can outrun it.
    pub const ENEMY_SPEED: i32 = 2;

    pub const SERVE_X: i32 = 78;
    pub const SERVE_Y_MIN: i32 = 70;
    pub const SERVE_Y_MAX: i32 = 150;
    pub const SERVE_DY: [i32; 4] = [-2, -1, 1, 2];

    pub const WIN_SCORE: i32 = 21;
}

pub mod breakout {
    pub const LEFT_WALL: i32 = 9;
    pub const RIGHT_WALL: i32 = 152;
    pub const TOP_WALL: i32 = 32;
    pub const PADDLE_Y: i32 = 189;

    pub const PADDLE_W: i32 = 16;
    pub const PADDLE_H: i32 = 4;
    pub const PADDLE_SPEED: i32 = 4;
    pub const PADDLE_X_MIN: i32 = LEFT_WALL;
    pub const PADDLE_X_MAX: i32 = RIGHT_WALL - PADDLE_W;

    pub const BALL_W: i32 = 2;
    pub const BALL_H: i32 = 4;
    pub const BALL_DY: i32 = 4;
    /// |dy| once an upper-row (red or orange) brick has been hit; 1.5x base.
    pub const FAST_BALL_DY: i32 = 6;
    /// dx after a paddle hit by contact zone, left edge to right edge.
    /// The centre zone keeps the incoming direction with magnitude 2.
    pub const ZONE_DX: [i32; 5] = [-6, -4, 2, 4, 6];

    /// Row y positions from top (red) to bottom (blue).
    pub const ROW_Y: [i32; 6] = [57, 63, 69, 75, 81, 87];
    /// Label prefixes matching `ROW_Y`.
    pub const ROW_LABELS: [&str; 6] = ["RB", "OB", "YB", "GB", "AB", "BB"];
    pub const ROW_POINTS: [i32; 6] = [7, 7, 4, 4, 1, 1];
    /// Rows whose bricks speed the ball up.
    pub const FAST_ROWS: usize = 2;
    pub const BRICKS_PER_ROW: usize = 18;
    pub const BRICK_W: i32 = 8;
    pub const BRICK_H: i32 = 6;

    pub const SERVE_Y: i32 = 100;
    pub const SERVE_X_MIN: i32 = 20;
    pub const SERVE_X_MAX: i32 = 140;
    pub const SERVE_DX: [i32; 4] = [-4, -2, 2, 4];
    /// Minimum horizontal distance between the serve's landing point and the
    /// paddle centre, so an idle paddle never returns a serve.
    pub const SERVE_MISS_MARGIN: i32 = PADDLE_W / 2 + 6;

    pub const LIVES: i32 = 5;
    /// Two full walls: the wall is rebuilt once after it is first cleared.
    pub const MAX_SCORE: i32 = 864;
}

pub mod space_invaders {
    pub const PLAYER_Y: i32 = 185;
    pub const PLAYER_W: i32 = 7;
    pub const PLAYER_H: i32 = 10;
    pub const PLAYER_SPEED: i32 = 2;
    pub const PLAYER_X_MIN: i32 = 8;
    pub const PLAYER_X_MAX: i32 = 145;
    pub const PLAYER_START_X: i32 = 76;

    pub const ALIEN_ROWS: usize = 6;
    pub const ALIEN_COLS: usize = 6;
    pub const ALIEN_W: i32 = 8;
    pub const ALIEN_H: i32 = 10;
    pub const ALIEN_SPACING_X: i32 = 16;
    pub const ALIEN_SPACING_Y: i32 = 14;
    pub const GRID_ORIGIN_X: i32 = 24;
    pub const GRID_ORIGIN_Y: i32 = 31;
    /// Points per row, top row first. Not taken from any published table.
    pub const ROW_POINTS: [i32; 6] = [30, 25, 20, 15, 10, 5];
    pub const MARCH_STEP_X: i32 = 2;
    pub const MARCH_DROP_Y: i32 = 6;
    /// Steps between grid moves with a full grid; shrinks as aliens die.
    pub const MARCH_PERIOD_FULL: u32 = 8;
    pub const GRID_X_MIN: i32 = 8;
    pub const GRID_X_MAX: i32 = 152;

    pub const BULLET_W: i32 = 1;
    pub const BULLET_H: i32 = 6;
    pub const PLAYER_BULLET_DY: i32 = -8;
    pub const ALIEN_BULLET_DY: i32 = 4;
    pub const MAX_ALIEN_BULLETS: usize = 3;
    /// Per-step probability that some alien fires.
    pub const ALIEN_FIRE_PROB: f64 = 0.08;
    /// Steps after a shot before the player may fire again.
    pub const FIRE_COOLDOWN: u32 = 8;

    pub const SHIELD_X: [i32; 3] = [36, 72, 108];
    pub const SHIELD_Y: i32 = 157;
    pub const SHIELD_W: i32 = 16;
    pub const SHIELD_H: i32 = 10;
    pub const SHIELD_HP: u32 = 12;

    pub const LIVES: i32 = 3;
}
