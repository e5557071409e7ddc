//! Learning hidden subgoals and their temporal ordering from episode-level
//! task labels.

pub mod contrastive;
pub mod driver;
pub mod error;
pub mod explorer;
pub mod gridworld;
pub mod labeler;
pub mod subgoal_tree;
pub mod tl;
pub mod trajectory;

pub use error::{Error, Result};
