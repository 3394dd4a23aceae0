//! Code-as-policy agents for object-centric arcade games.
//!
//! Policies are programs in a small sandboxed language ([`dsl`]). They play
//! deterministic reimplementations of Pong, Breakout and Space Invaders
//! ([`envs`]); rollouts are recorded as execution traces ([`trace`]), scored
//! and turned into staged natural-language feedback ([`feedback`]), and handed
//! to a generative optimizer ([`optimizer`]) that rewrites the trainable
//! functions. [`harness`] drives the whole loop.

pub mod dsl;
pub mod envs;
pub mod trace;
pub mod agent;
pub mod feedback;
pub mod optimizer;
pub mod harness;
