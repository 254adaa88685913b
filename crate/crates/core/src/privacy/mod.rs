//! Presence-disclosure audit: can training-set membership be read off the
//! synthetic corpus by proximity?

mod attack;

pub use attack::{
    mean_distance_baseline, presence_disclosure, AttackCell, AttackConfig, AttackReport, DEFAULT_MAX_PAIRS,
};
